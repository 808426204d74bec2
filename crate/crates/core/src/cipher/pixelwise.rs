//! Pixel-wise encryption: a keyed negative-positive transform on every
//! channel of every pixel, then a keyed shuffle of each pixel's three
//! color components.

use serde::{Deserialize, Serialize};

use super::CipherError;
use crate::image::Image;
use crate::prng::{KeyStream, GOLDEN_GAMMA};

pub use crate::keyspace::keyspace_pixelwise;

/// Source-channel orderings, indexed by the per-pixel shuffle draw.
/// Output component `k` takes source channel `COLOR_PERMUTATIONS[i][k]`.
pub const COLOR_PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Four independent seeds: one per NP bit-plane and one for the shuffle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelwiseKey {
    pub seed_r: u64,
    pub seed_g: u64,
    pub seed_b: u64,
    pub seed_cs: u64,
}

impl PixelwiseKey {
    pub fn new(seed_r: u64, seed_g: u64, seed_b: u64, seed_cs: u64) -> Self {
        Self {
            seed_r,
            seed_g,
            seed_b,
            seed_cs,
        }
    }

    fn np_seeds(&self) -> [u64; 3] {
        [self.seed_r, self.seed_g, self.seed_b]
    }
}

/// How keys are assigned to the images of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KeyPolicy {
    /// One key for every training and testing image.
    SameKey(PixelwiseKey),
    /// A fresh key per image, derived from `(master, image index)`.
    DifferentKeys { master: u64 },
}

impl KeyPolicy {
    pub fn key_for(&self, index: usize) -> PixelwiseKey {
        match *self {
            KeyPolicy::SameKey(k) => k,
            KeyPolicy::DifferentKeys { master } => derive_image_key(master, index as u64),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            KeyPolicy::SameKey(_) => "same",
            KeyPolicy::DifferentKeys { .. } => "different",
        }
    }
}

/// Per-image key for the different-keys policy.
///
/// The tweaked master `master + γ·(index+1)` seeds a stream whose first
/// draw seeds the key stream; four draws from that give the key seeds.
pub fn derive_image_key(master: u64, index: u64) -> PixelwiseKey {
    let tweak = master.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1)));
    let mut s = KeyStream::new(KeyStream::new(tweak).next_u64());
    PixelwiseKey::new(s.next_u64(), s.next_u64(), s.next_u64(), s.next_u64())
}

/// Fully expanded key material for one image size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelwiseSchedule {
    /// `np_bits[c][i]`: complement channel `c` of pixel `i` (row-major).
    pub np_bits: [Vec<bool>; 3],
    /// Index into [`COLOR_PERMUTATIONS`] for each pixel.
    pub perm_index: Vec<u8>,
}

impl PixelwiseSchedule {
    pub fn expand(key: &PixelwiseKey, pixel_count: usize) -> Self {
        let mut cs = KeyStream::new(key.seed_cs);
        Self {
            np_bits: expand_np_bits(key, pixel_count),
            perm_index: (0..pixel_count)
                .map(|_| cs.next_bounded(6).expect("6 > 0") as u8)
                .collect(),
        }
    }

    /// All bits zero, all shuffles the identity.
    pub fn identity(pixel_count: usize) -> Self {
        Self {
            np_bits: std::array::from_fn(|_| vec![false; pixel_count]),
            perm_index: vec![0; pixel_count],
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.perm_index.len()
    }

    fn check(&self, img: &Image) -> Result<(), CipherError> {
        if self.pixel_count() != img.pixel_count() {
            return Err(CipherError::ScheduleMismatch {
                expected: self.pixel_count(),
                got: img.pixel_count(),
            });
        }
        Ok(())
    }

    pub fn encrypt(&self, img: &Image) -> Result<Image, CipherError> {
        self.check(img)?;
        Ok(img.map_pixels(|i, p| {
            let np = [
                np_transform(p[0], self.np_bits[0][i]),
                np_transform(p[1], self.np_bits[1][i]),
                np_transform(p[2], self.np_bits[2][i]),
            ];
            apply_color_perm(np, self.perm_index[i] as usize)
        }))
    }

    pub fn decrypt(&self, img: &Image) -> Result<Image, CipherError> {
        self.check(img)?;
        Ok(img.map_pixels(|i, p| {
            let table = COLOR_PERMUTATIONS[self.perm_index[i] as usize];
            let mut np = [0u8; 3];
            for (k, &src) in table.iter().enumerate() {
                np[src] = p[k];
            }
            std::array::from_fn(|c| np_transform(np[c], self.np_bits[c][i]))
        }))
    }
}

/// Three bit-planes of `pixel_count` bits each, plane `c` drawn from the
/// channel's own seed in row-major pixel order.
pub fn expand_np_bits(key: &PixelwiseKey, pixel_count: usize) -> [Vec<bool>; 3] {
    key.np_seeds().map(|seed| {
        let mut s = KeyStream::new(seed);
        (0..pixel_count).map(|_| s.next_bit()).collect()
    })
}

/// Negative-positive transform: `p` or `255 - p`.
#[inline]
pub fn np_transform(p: u8, bit: bool) -> u8 {
    if bit {
        255 - p
    } else {
        p
    }
}

#[inline]
fn apply_color_perm(p: [u8; 3], index: usize) -> [u8; 3] {
    let t = COLOR_PERMUTATIONS[index];
    [p[t[0]], p[t[1]], p[t[2]]]
}

pub fn shuffle_colors(pixel: [u8; 3], perm_index: usize) -> Result<[u8; 3], CipherError> {
    if perm_index >= COLOR_PERMUTATIONS.len() {
        return Err(CipherError::InvalidPermIndex(perm_index));
    }
    Ok(apply_color_perm(pixel, perm_index))
}

pub fn encrypt_pixelwise(img: &Image, key: &PixelwiseKey) -> Image {
    PixelwiseSchedule::expand(key, img.pixel_count())
        .encrypt(img)
        .expect("schedule sized from image")
}

pub fn decrypt_pixelwise(img: &Image, key: &PixelwiseKey) -> Image {
    PixelwiseSchedule::expand(key, img.pixel_count())
        .decrypt(img)
        .expect("schedule sized from image")
}
