//! Keyed permutation used by the reader to encrypt tag aliases.
//!
//! Four-round balanced Feistel network. Round `i` uses the hash with domain
//! tag `0x10 + i` over `key ∥ right_half`, expanded to half the block width.

use serde::{Deserialize, Serialize};

use crate::bits::{BitString, BitsError};
use crate::hash::{expand_mask, HashParams, TAG_FEISTEL_BASE};

pub const ROUNDS: u8 = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PermError {
    #[error("block width {0} must be even and positive")]
    OddWidth(usize),
    #[error("input has {got} bits, key expects {expected}")]
    WidthMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermKey {
    material: BitString,
    block_width: usize,
}

impl PermKey {
    pub fn new(material: BitString, block_width: usize) -> Result<Self, PermError> {
        if block_width == 0 || block_width % 2 == 1 {
            return Err(PermError::OddWidth(block_width));
        }
        Ok(Self { material, block_width })
    }

    /// 256 bits of fresh key material.
    pub fn random<R: rand::RngCore + ?Sized>(block_width: usize, rng: &mut R) -> Result<Self, PermError> {
        Self::new(BitString::random(256, rng), block_width)
    }

    pub fn block_width(&self) -> usize {
        self.block_width
    }

    pub fn material(&self) -> &BitString {
        &self.material
    }

    fn round(&self, index: u8, half: &BitString) -> BitString {
        let params = HashParams::new(self.block_width / 2, TAG_FEISTEL_BASE + index);
        expand_mask(&params, &self.material.concat(half), self.block_width / 2)
    }

    fn check(&self, input: &BitString) -> Result<(), PermError> {
        if input.width() != self.block_width {
            return Err(PermError::WidthMismatch {
                got: input.width(),
                expected: self.block_width,
            });
        }
        Ok(())
    }

    fn halves(&self, input: &BitString) -> (BitString, BitString) {
        input.split_at(self.block_width / 2).expect("width checked")
    }

    pub fn permute(&self, plaintext: &BitString) -> Result<BitString, PermError> {
        self.check(plaintext)?;
        let (mut left, mut right) = self.halves(plaintext);
        for i in 0..ROUNDS {
            let next = left.xor(&self.round(i, &right)).map_err(width_bug)?;
            left = std::mem::replace(&mut right, next);
        }
        Ok(left.concat(&right))
    }

    pub fn invert(&self, ciphertext: &BitString) -> Result<BitString, PermError> {
        self.check(ciphertext)?;
        let (mut left, mut right) = self.halves(ciphertext);
        for i in (0..ROUNDS).rev() {
            let prev = right.xor(&self.round(i, &left)).map_err(width_bug)?;
            right = std::mem::replace(&mut left, prev);
        }
        Ok(left.concat(&right))
    }
}

fn width_bug(e: BitsError) -> PermError {
    unreachable!("round output width is fixed: {e}")
}
