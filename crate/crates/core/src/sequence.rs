//! Prompt/response examples with a response-only loss mask.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SodaError};

/// Where a response came from. Used to tag datasets and preference pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSource {
    Teacher,
    BaseStudent,
    CrossStudent,
    Corrupted,
}

impl std::fmt::Display for ResponseSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ResponseSource::Teacher => "teacher",
            ResponseSource::BaseStudent => "base_student",
            ResponseSource::CrossStudent => "cross_student",
            ResponseSource::Corrupted => "corrupted",
        };
        f.write_str(s)
    }
}

/// A prompt plus a response, with a boolean mask selecting the response
/// positions that contribute to the loss. Prompt tokens never contribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceExample {
    pub prompt: Vec<u32>,
    pub response: Vec<u32>,
    /// Aligned with `response`; true on positions that carry loss.
    pub loss_mask: Vec<bool>,
    pub source: ResponseSource,
}

impl SequenceExample {
    /// Builds an example whose whole response carries loss.
    pub fn new(prompt: Vec<u32>, response: Vec<u32>, source: ResponseSource) -> Result<Self> {
        if prompt.is_empty() {
            return Err(SodaError::InvalidInput("prompt must be non-empty".into()));
        }
        if response.is_empty() {
            return Err(SodaError::InvalidInput(
                "response must have length >= 1".into(),
            ));
        }
        let loss_mask = vec![true; response.len()];
        Ok(Self {
            prompt,
            response,
            loss_mask,
            source,
        })
    }

    /// Number of masked (loss-carrying) response positions.
    pub fn masked_len(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }

    /// Full token stream `prompt ++ response`.
    pub fn full_sequence(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.prompt.len() + self.response.len());
        out.extend_from_slice(&self.prompt);
        out.extend_from_slice(&self.response);
        out
    }
}
