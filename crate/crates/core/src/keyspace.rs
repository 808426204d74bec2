//! Key-space sizes of both ciphers, the basis for brute-force robustness.

use num_bigint::BigUint;
use num_traits::One;

use crate::cipher::blockwise::BLOCK_POSITIONS;

/// Number of distinct keys, kept both exactly and as bits.
#[derive(Debug, Clone, PartialEq)]
pub struct KeySpace {
    pub exact: BigUint,
    pub log2: f64,
}

/// `2^(3n) · 6^n` keys for an image of `n` pixels.
pub fn keyspace_pixelwise(n: u64) -> KeySpace {
    KeySpace {
        exact: BigUint::from(48u32).pow(n as u32),
        log2: pixelwise_bits_per_pixel() * n as f64,
    }
}

/// `96! · 2^96` keys, independent of image size.
pub fn keyspace_blockwise() -> KeySpace {
    let positions = BLOCK_POSITIONS as u32;
    let factorial = (2..=positions).fold(BigUint::one(), |acc, k| acc * k);
    let log2_factorial: f64 = (2..=positions).map(|k| f64::from(k).log2()).sum();
    KeySpace {
        exact: factorial << positions,
        log2: log2_factorial + f64::from(positions),
    }
}

/// `3 + log2 6`: bits contributed by one pixel of the pixel-wise cipher.
pub fn pixelwise_bits_per_pixel() -> f64 {
    3.0 + 6f64.log2()
}

/// Where the pixel-wise key space overtakes the block-wise one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossover {
    /// Real solution of `n·(3 + log2 6) = log2(96!) + 96`.
    pub real: f64,
    /// Smallest pixel count whose pixel-wise key space is at least the
    /// block-wise one, decided by exact integer comparison.
    pub smallest_integer: u64,
}

pub fn crossover() -> Crossover {
    let block = keyspace_blockwise();
    let real = block.log2 / pixelwise_bits_per_pixel();
    let mut n = real.floor().max(1.0) as u64;
    while n > 1 && keyspace_pixelwise(n - 1).exact >= block.exact {
        n -= 1;
    }
    while keyspace_pixelwise(n).exact < block.exact {
        n += 1;
    }
    Crossover {
        real,
        smallest_integer: n,
    }
}
