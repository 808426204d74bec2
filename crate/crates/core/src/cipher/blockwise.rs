//! Block-wise (Tanaka) encryption over 4×4 blocks.
//!
//! Each block's 8-bit components are split into upper and lower nibbles,
//! giving a 4×4×6 nibble block. A key-selected subset of the 96 nibble
//! positions is complemented (`v → 15 - v`), the 96 positions are shuffled,
//! and the nibbles are merged back into bytes. The same inversion mask and
//! shuffle apply to every block of every image encrypted under one key.
//!
//! Nibble positions are flattened channel-major, then row-major within the
//! 4×4 block: position `c·16 + y·4 + x`. Channels 0..3 hold the R, G, B
//! upper nibbles and channels 3..6 the R, G, B lower nibbles.

use serde::{Deserialize, Serialize};

use super::CipherError;
use crate::image::Image;
use crate::prng::{invert_permutation, is_permutation, KeyStream};

pub use crate::keyspace::keyspace_blockwise;

pub const BLOCK_SIDE: usize = 4;
pub const NIBBLE_CHANNELS: usize = 6;
pub const BLOCK_PIXELS: usize = BLOCK_SIDE * BLOCK_SIDE;
/// Nibble positions per block.
pub const BLOCK_POSITIONS: usize = BLOCK_PIXELS * NIBBLE_CHANNELS;

pub type Nibbles = [u8; BLOCK_POSITIONS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockwiseKey {
    pub seed_inv: u64,
    pub seed_shf: u64,
}

impl BlockwiseKey {
    pub fn new(seed_inv: u64, seed_shf: u64) -> Self {
        Self { seed_inv, seed_shf }
    }
}

/// Expanded block key: 96 inversion bits and a permutation of 96 positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSchedule {
    pub inversion: [bool; BLOCK_POSITIONS],
    pub shuffle: [usize; BLOCK_POSITIONS],
}

impl BlockSchedule {
    pub fn expand(key: &BlockwiseKey) -> Self {
        let mut inv = KeyStream::new(key.seed_inv);
        let perm = KeyStream::new(key.seed_shf).permutation(BLOCK_POSITIONS);
        Self {
            inversion: std::array::from_fn(|_| inv.next_bit()),
            shuffle: perm.try_into().expect("96 entries"),
        }
    }

    pub fn identity() -> Self {
        Self {
            inversion: [false; BLOCK_POSITIONS],
            shuffle: std::array::from_fn(|i| i),
        }
    }

    pub fn encrypt_block(&self, block: &[[u8; 3]]) -> Result<[[u8; 3]; BLOCK_PIXELS], CipherError> {
        let n = split_nibbles(block)?;
        let n = invert_intensities(&n, &self.inversion)?;
        let n = shuffle_positions(&n, &self.shuffle)?;
        merge_nibbles(&n)
    }

    pub fn decrypt_block(&self, block: &[[u8; 3]]) -> Result<[[u8; 3]; BLOCK_PIXELS], CipherError> {
        let n = split_nibbles(block)?;
        let n = shuffle_positions(&n, &invert_permutation(&self.shuffle))?;
        let n = invert_intensities(&n, &self.inversion)?;
        merge_nibbles(&n)
    }

    pub fn encrypt(&self, img: &Image) -> Result<Image, CipherError> {
        map_blocks(img, |b| self.encrypt_block(b))
    }

    pub fn decrypt(&self, img: &Image) -> Result<Image, CipherError> {
        map_blocks(img, |b| self.decrypt_block(b))
    }
}

pub fn check_block_dims(img: &Image) -> Result<(), CipherError> {
    let (w, h) = img.dims();
    if w % BLOCK_SIDE != 0 || h % BLOCK_SIDE != 0 {
        return Err(CipherError::DimensionNotMultipleOfBlock { width: w, height: h });
    }
    Ok(())
}

/// Gathers the 16 pixels of the block whose top-left corner is `(bx·4, by·4)`.
pub fn read_block(img: &Image, bx: usize, by: usize) -> [[u8; 3]; BLOCK_PIXELS] {
    std::array::from_fn(|i| img.pixel(bx * BLOCK_SIDE + i % BLOCK_SIDE, by * BLOCK_SIDE + i / BLOCK_SIDE))
}

pub fn write_block(img: &mut Image, bx: usize, by: usize, block: &[[u8; 3]; BLOCK_PIXELS]) {
    for (i, &p) in block.iter().enumerate() {
        img.set_pixel(bx * BLOCK_SIDE + i % BLOCK_SIDE, by * BLOCK_SIDE + i / BLOCK_SIDE, p);
    }
}

/// Block coordinates in raster order.
pub fn block_coords(img: &Image) -> impl Iterator<Item = (usize, usize)> {
    let (bw, bh) = (img.width() / BLOCK_SIDE, img.height() / BLOCK_SIDE);
    (0..bh).flat_map(move |by| (0..bw).map(move |bx| (bx, by)))
}

fn map_blocks(
    img: &Image,
    mut f: impl FnMut(&[[u8; 3]]) -> Result<[[u8; 3]; BLOCK_PIXELS], CipherError>,
) -> Result<Image, CipherError> {
    check_block_dims(img)?;
    let mut out = img.clone();
    for (bx, by) in block_coords(img) {
        let block = f(&read_block(img, bx, by))?;
        write_block(&mut out, bx, by, &block);
    }
    Ok(out)
}

pub fn split_nibbles(block: &[[u8; 3]]) -> Result<Nibbles, CipherError> {
    if block.len() != BLOCK_PIXELS {
        return Err(CipherError::BadBlockShape(block.len()));
    }
    let mut out = [0u8; BLOCK_POSITIONS];
    for (i, p) in block.iter().enumerate() {
        for c in 0..3 {
            out[c * BLOCK_PIXELS + i] = p[c] >> 4;
            out[(c + 3) * BLOCK_PIXELS + i] = p[c] & 0x0F;
        }
    }
    Ok(out)
}

pub fn invert_intensities(nibbles: &Nibbles, bits: &[bool]) -> Result<Nibbles, CipherError> {
    if bits.len() != BLOCK_POSITIONS {
        return Err(CipherError::BadKeyLength(bits.len()));
    }
    Ok(std::array::from_fn(|j| if bits[j] { 15 - nibbles[j] } else { nibbles[j] }))
}

/// Output position `i` takes input position `perm[i]`.
pub fn shuffle_positions(nibbles: &Nibbles, perm: &[usize]) -> Result<Nibbles, CipherError> {
    if perm.len() != BLOCK_POSITIONS || !is_permutation(perm) {
        return Err(CipherError::NotAPermutation);
    }
    Ok(std::array::from_fn(|i| nibbles[perm[i]]))
}

pub fn merge_nibbles(nibbles: &Nibbles) -> Result<[[u8; 3]; BLOCK_PIXELS], CipherError> {
    if let Some(&bad) = nibbles.iter().find(|&&v| v > 15) {
        return Err(CipherError::NibbleOutOfRange(bad));
    }
    Ok(std::array::from_fn(|i| {
        std::array::from_fn(|c| 16 * nibbles[c * BLOCK_PIXELS + i] + nibbles[(c + 3) * BLOCK_PIXELS + i])
    }))
}

pub fn encrypt_blockwise(img: &Image, key: &BlockwiseKey) -> Result<Image, CipherError> {
    BlockSchedule::expand(key).encrypt(img)
}

pub fn decrypt_blockwise(img: &Image, key: &BlockwiseKey) -> Result<Image, CipherError> {
    BlockSchedule::expand(key).decrypt(img)
}
