//! Integer vocabulary with a reserved end-of-sequence token.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SodaError};

/// A vocabulary of `size` token ids `0..size`, where the last id is reserved
/// as the end-of-sequence marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    size: u32,
}

impl Vocab {
    /// Requires `size >= 2` (at least one content token plus EOS).
    pub fn new(size: u32) -> Result<Self> {
        if size < 2 {
            return Err(SodaError::InvalidConfig(format!(
                "vocab size must be >= 2, got {size}"
            )));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    /// The reserved end-of-sequence token id (`size - 1`).
    pub fn eos(&self) -> u32 {
        self.size - 1
    }

    pub fn contains(&self, token: u32) -> bool {
        token < self.size
    }

    /// Validates every token id in a slice.
    pub fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        for &t in tokens {
            if !self.contains(t) {
                return Err(SodaError::InvalidToken {
                    token: t,
                    vocab: self.size,
                });
            }
        }
        Ok(())
    }
}
