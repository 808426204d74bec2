//! Learnable image encryption schemes: pixel-wise and block-wise.

pub mod blockwise;
pub mod pixelwise;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CipherError {
    #[error("color permutation index {0} outside 0..6")]
    InvalidPermIndex(usize),
    #[error("image {width}x{height} is not a whole number of 4x4 blocks")]
    DimensionNotMultipleOfBlock { width: usize, height: usize },
    #[error("block must hold 16 pixels, got {0}")]
    BadBlockShape(usize),
    #[error("inversion key must hold 96 bits, got {0}")]
    BadKeyLength(usize),
    #[error("shuffle key is not a permutation of 0..96")]
    NotAPermutation,
    #[error("nibble value {0} outside 0..=15")]
    NibbleOutOfRange(u8),
    #[error("key schedule covers {expected} pixels, image has {got}")]
    ScheduleMismatch { expected: usize, got: usize },
}
