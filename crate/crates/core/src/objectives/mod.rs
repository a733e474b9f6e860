//! Training losses and gradients for the distillation pipelines.

mod discriminator;
mod dpo;
mod gradcheck;
mod optimizer;
mod policy_gradient;
mod sft;

pub use discriminator::bt_discriminator_loss;
pub use dpo::{dpo_batch, dpo_grad, dpo_loss, implicit_reward, DpoBatchStats, DpoDiagnostics};
pub use gradcheck::{finite_difference_check, FiniteDifferenceReport};
pub use optimizer::{CosineSchedule, GdOptimizer};
pub use policy_gradient::{policy_gradient_step, PolicyGradientOutcome};
pub use sft::sft_loss_and_grad;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SodaError};
use crate::sequence::{ResponseSource, SequenceExample};

/// A (prompt, chosen, rejected) triple with source tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: Vec<u32>,
    pub chosen: Vec<u32>,
    pub rejected: Vec<u32>,
    pub chosen_source: ResponseSource,
    pub rejected_source: ResponseSource,
}

impl PreferencePair {
    pub fn new(
        prompt: Vec<u32>,
        chosen: Vec<u32>,
        rejected: Vec<u32>,
        chosen_source: ResponseSource,
        rejected_source: ResponseSource,
    ) -> Result<Self> {
        if prompt.is_empty() {
            return Err(SodaError::InvalidInput("prompt must be non-empty".into()));
        }
        if chosen.is_empty() || rejected.is_empty() {
            return Err(SodaError::InvalidInput(
                "chosen and rejected responses must be non-empty".into(),
            ));
        }
        Ok(Self {
            prompt,
            chosen,
            rejected,
            chosen_source,
            rejected_source,
        })
    }

    pub fn chosen_example(&self) -> SequenceExample {
        SequenceExample::new(self.prompt.clone(), self.chosen.clone(), self.chosen_source)
            .expect("pair fields validated at construction")
    }

    pub fn rejected_example(&self) -> SequenceExample {
        SequenceExample::new(
            self.prompt.clone(),
            self.rejected.clone(),
            self.rejected_source,
        )
        .expect("pair fields validated at construction")
    }
}
