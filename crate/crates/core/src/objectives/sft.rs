//! Supervised fine-tuning on teacher responses (the SeqKD objective).

use crate::error::{Result, SodaError};
use crate::gradient::GradientVector;
use crate::model::ModelParams;
use crate::numerics::NeumaierSum;
use crate::sequence::SequenceExample;

/// Negative mean masked log-likelihood over the batch, with its gradient.
/// Only response tokens carry loss; prompt positions are masked out.
pub fn sft_loss_and_grad(
    params: &ModelParams,
    batch: &[SequenceExample],
) -> Result<(f64, GradientVector)> {
    if batch.is_empty() {
        return Err(SodaError::InvalidInput("empty SFT batch".into()));
    }
    let n = batch.len() as f64;
    let mut loss = NeumaierSum::new();
    let mut grads = Vec::with_capacity(batch.len());
    for ex in batch {
        let (lp, g) = params.grad_logprob(ex)?;
        loss.add(-lp);
        grads.push(g);
    }
    let mut grad = GradientVector::mean(&grads)?;
    grad.scale(-1.0);
    Ok((loss.value() / n, grad))
}
