//! Bradley-Terry discriminator training for the adversarial baseline.
//!
//! The discriminator shares the student architecture; its scalar score is the
//! realized-token logit mean-pooled over response positions. The loss drives
//! teacher responses to score above student responses.

use crate::error::Result;
use crate::gradient::GradientVector;
use crate::model::ModelParams;
use crate::numerics::{sigmoid, softplus};
use crate::sequence::SequenceExample;

/// `softplus(-(D(teacher) - D(student)))` and its gradient in the
/// discriminator's parameters.
pub fn bt_discriminator_loss(
    disc: &ModelParams,
    teacher_resp: &SequenceExample,
    student_resp: &SequenceExample,
) -> Result<(f64, GradientVector)> {
    let (score_t, grad_t) = disc.disc_score_and_grad(teacher_resp)?;
    let (score_s, grad_s) = disc.disc_score_and_grad(student_resp)?;
    let delta = score_t - score_s;
    let loss = softplus(-delta);
    // d/dtheta softplus(-delta) = -sigmoid(-delta) * (grad_t - grad_s)
    let w = sigmoid(-delta);
    let mut grad = GradientVector::zeros(disc.param_count());
    grad.add_scaled(&grad_t, -w)?;
    grad.add_scaled(&grad_s, w)?;
    Ok((loss, grad))
}
