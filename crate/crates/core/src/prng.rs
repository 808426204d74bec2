//! SplitMix64 key stream from which all cipher key material is expanded.
//!
//! Not cryptographically secure. The generator exists so every key, split
//! and permutation in an experiment can be rebuilt bit-exactly from a seed.

use thiserror::Error;

/// Weyl increment of SplitMix64.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrngError {
    #[error("bound must be at least 1")]
    InvalidBound,
}

/// Single-owner cursor over a SplitMix64 sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyStream {
    state: u64,
    origin_seed: u64,
}

impl KeyStream {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            origin_seed: seed,
        }
    }

    pub fn origin_seed(&self) -> u64 {
        self.origin_seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Most significant bit of the next draw.
    pub fn next_bit(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }

    /// Uniform integer in `[0, m)` by rejection sampling.
    pub fn next_bounded(&mut self, m: u64) -> Result<u64, PrngError> {
        if m == 0 {
            return Err(PrngError::InvalidBound);
        }
        let span = 1u128 << 64;
        let limit = span - span % u128::from(m);
        loop {
            let v = self.next_u64();
            if u128::from(v) < limit {
                return Ok(v % m);
            }
        }
    }

    /// Fisher–Yates shuffle of `0..k`, drawing `j = next_bounded(i+1)` for
    /// `i` from `k-1` down to 1.
    pub fn permutation(&mut self, k: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            let j = self.next_bounded(i as u64 + 1).expect("bound >= 2") as usize;
            p.swap(i, j);
        }
        p
    }
}

/// True when `p` is a bijection on `0..p.len()`.
pub fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    for &v in p {
        if v >= p.len() || seen[v] {
            return false;
        }
        seen[v] = true;
    }
    true
}

/// `q` with `q[p[i]] = i`.
pub fn invert_permutation(p: &[usize]) -> Vec<usize> {
    let mut q = vec![0; p.len()];
    for (i, &v) in p.iter().enumerate() {
        q[v] = i;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_draw_at_seed_zero() {
        assert_eq!(KeyStream::new(0).next_u64(), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn consecutive_draws_differ() {
        let mut s = KeyStream::new(0);
        assert_ne!(s.next_u64(), s.next_u64());
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = KeyStream::new(1234);
        let mut b = KeyStream::new(1234);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_eq!(a.origin_seed(), 1234);
    }

    #[test]
    fn bit_mean_near_half() {
        let mut s = KeyStream::new(42);
        let ones = (0..1_000_000).filter(|_| s.next_bit()).count();
        let mean = ones as f64 / 1e6;
        assert!((0.499..=0.501).contains(&mean), "mean {mean}");
    }

    #[test]
    fn bounded_edge_cases() {
        let mut s = KeyStream::new(3);
        assert_eq!(s.next_bounded(0), Err(PrngError::InvalidBound));
        for _ in 0..100 {
            assert_eq!(s.next_bounded(1), Ok(0));
        }
        // power of two bounds never reject
        assert!(s.next_bounded(1 << 63).unwrap() < 1 << 63);
    }

    #[test]
    fn bounded_six_fixture() {
        let mut s = KeyStream::new(0);
        let draws: Vec<u64> = (0..10).map(|_| s.next_bounded(6).unwrap()).collect();
        assert_eq!(draws, [1, 0, 1, 4, 1, 0, 5, 2, 5, 2]);
    }

    #[test]
    fn bounded_six_chi_square() {
        let mut s = KeyStream::new(99);
        let n = 600_000;
        let mut counts = [0u64; 6];
        for _ in 0..n {
            counts[s.next_bounded(6).unwrap() as usize] += 1;
        }
        let expected = n as f64 / 6.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square, 5 dof, p = 0.001
        assert!(chi2 < 20.515, "chi2 {chi2}");
    }

    #[test]
    fn permutation_fixture_and_edges() {
        assert_eq!(KeyStream::new(5).permutation(10), [3, 6, 0, 4, 5, 1, 2, 9, 7, 8]);
        assert_eq!(KeyStream::new(5).permutation(1), [0]);
        assert!(KeyStream::new(5).permutation(0).is_empty());
    }

    #[test]
    fn permutation_of_three_is_uniform() {
        let mut s = KeyStream::new(17);
        let mut freq = std::collections::HashMap::new();
        let n = 60_000;
        for _ in 0..n {
            *freq.entry(s.permutation(3)).or_insert(0u32) += 1;
        }
        assert_eq!(freq.len(), 6);
        for (p, c) in freq {
            let f = c as f64 / n as f64;
            assert!((f - 1.0 / 6.0).abs() < 0.01, "{p:?} -> {f}");
        }
    }

    #[test]
    fn inverse_permutation_composes_to_identity() {
        let p = KeyStream::new(8).permutation(50);
        let q = invert_permutation(&p);
        assert!((0..50).all(|i| q[p[i]] == i && p[q[i]] == i));
        assert!(is_permutation(&p));
        assert!(!is_permutation(&[0, 0, 1]));
        assert!(!is_permutation(&[0, 3]));
    }
}
