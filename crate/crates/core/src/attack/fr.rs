//! Feature reconstruction attack: keyless per-channel bit normalization.
//!
//! Every channel value whose bit `L-1` differs from the chosen leading bit
//! `b` is XORed with `2^L - 1`. With `L = 8` this complements each byte
//! whose MSB disagrees with `b`, undoing a negative-positive transform up to
//! the lost leading bit and recovering edge structure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrError {
    #[error("bit count must be in 1..=8, got {0}")]
    InvalidBits(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrParams {
    pub bits: u8,
    pub leading_bit: bool,
}

impl FrParams {
    pub fn new(bits: u8, leading_bit: bool) -> Result<Self, FrError> {
        if !(1..=8).contains(&bits) {
            return Err(FrError::InvalidBits(bits));
        }
        Ok(Self { bits, leading_bit })
    }

    #[inline]
    fn mask(&self) -> u8 {
        ((1u16 << self.bits) - 1) as u8
    }

    /// True when `v` already carries the target leading bit.
    #[inline]
    pub fn has_leading_bit(&self, v: u8) -> bool {
        ((v >> (self.bits - 1)) & 1 == 1) == self.leading_bit
    }

    #[inline]
    pub fn normalize(&self, v: u8) -> u8 {
        if self.has_leading_bit(v) {
            v
        } else {
            v ^ self.mask()
        }
    }
}

pub fn fr_attack(img: &Image, params: FrParams) -> Result<Image, FrError> {
    FrParams::new(params.bits, params.leading_bit)?;
    Ok(img.map_pixels(|_, p| p.map(|v| params.normalize(v))))
}

/// Both leading-bit variants `(b = 0, b = 1)`.
pub fn fr_attack_sweep(img: &Image, bits: u8) -> Result<(Image, Image), FrError> {
    Ok((
        fr_attack(img, FrParams::new(bits, false)?)?,
        fr_attack(img, FrParams::new(bits, true)?)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: u8, b: bool) -> u8 {
        let img = Image::filled(1, 1, [v; 3]).unwrap();
        fr_attack(&img, FrParams::new(8, b).unwrap()).unwrap().pixel(0, 0)[0]
    }

    #[test]
    fn byte_examples() {
        assert_eq!(one(200, true), 200);
        assert_eq!(one(50, true), 205);
        assert_eq!(one(50, false), 50);
    }

    #[test]
    fn params_validated() {
        assert_eq!(FrParams::new(0, true), Err(FrError::InvalidBits(0)));
        assert_eq!(FrParams::new(9, false), Err(FrError::InvalidBits(9)));
        let bogus = FrParams { bits: 12, leading_bit: true };
        assert!(fr_attack(&Image::filled(1, 1, [0; 3]).unwrap(), bogus).is_err());
    }

    #[test]
    fn small_bit_counts_touch_low_bits_only() {
        let p = FrParams::new(4, true).unwrap();
        // bit 3 of 0x25 is 0, so the low nibble flips
        assert_eq!(p.normalize(0x25), 0x2A);
        assert_eq!(p.normalize(0x2A), 0x2A);
    }

    #[test]
    fn sweep_outputs_are_complements() {
        let img = Image::from_fn(16, 16, |x, y| [(x * 16) as u8, (y * 16) as u8, (x * y) as u8]).unwrap();
        let (b0, b1) = fr_attack_sweep(&img, 8).unwrap();
        for (p, q) in b0.pixels().iter().zip(b1.pixels()) {
            assert_eq!(p.map(|v| v ^ 255), *q);
        }
    }
}
