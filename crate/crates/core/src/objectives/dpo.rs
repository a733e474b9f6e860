//! Direct preference optimization against a frozen reference policy.
//!
//! For a pair (x, y+, y-) the implicit reward margin is
//!
//! ```text
//! margin = beta * [log q(y+|x) - log q_ref(y+|x)]
//!        - beta * [log q(y-|x) - log q_ref(y-|x)]
//! ```
//!
//! the loss is `softplus(-margin)` and the gradient carries the adaptive
//! weight `sigmoid(-margin)`, so pairs the policy already orders correctly
//! contribute vanishing updates.

use serde::{Deserialize, Serialize};

use super::PreferencePair;
use crate::error::{Result, SodaError};
use crate::gradient::GradientVector;
use crate::model::ModelParams;
use crate::numerics::{sigmoid, softplus, NeumaierSum};

/// Per-pair diagnostics surfaced into the metric stream.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DpoDiagnostics {
    /// Implicit reward margin of the pair.
    pub margin: f64,
    /// `sigmoid(-margin)`, in (0, 1); 0.5 at zero margin.
    pub adaptive_weight: f64,
    /// `softplus(-margin)`, non-negative.
    pub loss: f64,
}

fn check_beta(beta: f64) -> Result<()> {
    if beta <= 0.0 || !beta.is_finite() {
        return Err(SodaError::InvalidConfig(format!(
            "beta must be positive, got {beta}"
        )));
    }
    Ok(())
}

/// DPO loss of a single preference pair.
pub fn dpo_loss(
    params: &ModelParams,
    reference: &ModelParams,
    pair: &PreferencePair,
    beta: f64,
) -> Result<(f64, DpoDiagnostics)> {
    check_beta(beta)?;
    let chosen = pair.chosen_example();
    let rejected = pair.rejected_example();
    let delta_chosen =
        params.logprob_sequence(&chosen)? - reference.logprob_sequence(&chosen)?;
    let delta_rejected =
        params.logprob_sequence(&rejected)? - reference.logprob_sequence(&rejected)?;
    let margin = beta * (delta_chosen - delta_rejected);
    let loss = softplus(-margin);
    Ok((
        loss,
        DpoDiagnostics {
            margin,
            adaptive_weight: sigmoid(-margin),
            loss,
        },
    ))
}

/// Batch statistics accumulated alongside the gradient.
#[derive(Debug, Clone, Copy)]
pub struct DpoBatchStats {
    pub mean_loss: f64,
    pub mean_margin: f64,
    pub mean_weight: f64,
}

/// Mean DPO gradient over a batch:
/// `-beta * sigmoid(-margin) * [grad log q(y+|x) - grad log q(y-|x)]`.
pub fn dpo_grad(
    params: &ModelParams,
    reference: &ModelParams,
    batch: &[PreferencePair],
    beta: f64,
) -> Result<GradientVector> {
    Ok(dpo_batch(params, reference, batch, beta)?.1)
}

/// Gradient plus batch-mean diagnostics in one evaluation pass.
pub fn dpo_batch(
    params: &ModelParams,
    reference: &ModelParams,
    batch: &[PreferencePair],
    beta: f64,
) -> Result<(DpoBatchStats, GradientVector)> {
    check_beta(beta)?;
    if batch.is_empty() {
        return Err(SodaError::InvalidInput("empty DPO batch".into()));
    }
    let n = batch.len() as f64;
    let mut grad = GradientVector::zeros(params.param_count());
    let mut loss = NeumaierSum::new();
    let mut margin_sum = NeumaierSum::new();
    let mut weight_sum = NeumaierSum::new();
    for pair in batch {
        let chosen = pair.chosen_example();
        let rejected = pair.rejected_example();
        let (lp_chosen, g_chosen) = params.grad_logprob(&chosen)?;
        let (lp_rejected, g_rejected) = params.grad_logprob(&rejected)?;
        let ref_chosen = reference.logprob_sequence(&chosen)?;
        let ref_rejected = reference.logprob_sequence(&rejected)?;
        let margin = beta * ((lp_chosen - ref_chosen) - (lp_rejected - ref_rejected));
        let weight = sigmoid(-margin);
        loss.add(softplus(-margin));
        margin_sum.add(margin);
        weight_sum.add(weight);
        let scale = -beta * weight / n;
        grad.add_scaled(&g_chosen, scale)?;
        grad.add_scaled(&g_rejected, -scale)?;
    }
    Ok((
        DpoBatchStats {
            mean_loss: loss.value() / n,
            mean_margin: margin_sum.value() / n,
            mean_weight: weight_sum.value() / n,
        },
        grad,
    ))
}

/// The reward implicitly represented by a policy/reference pair, up to an
/// unrepresented per-prompt constant. Differences of this value across
/// responses to the same prompt are constant-free and equal the DPO margin
/// at unit scale.
pub fn implicit_reward(
    policy: &ModelParams,
    reference: &ModelParams,
    prompt: &[u32],
    response: &[u32],
    beta: f64,
) -> Result<f64> {
    check_beta(beta)?;
    let ex = crate::sequence::SequenceExample::new(
        prompt.to_vec(),
        response.to_vec(),
        crate::sequence::ResponseSource::Teacher,
    )?;
    Ok(beta * (policy.logprob_sequence(&ex)? - reference.logprob_sequence(&ex)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::softmax;
    use crate::sequence::ResponseSource;
    use crate::vocab::Vocab;

    fn pair(prompt: Vec<u32>, chosen: Vec<u32>, rejected: Vec<u32>) -> PreferencePair {
        PreferencePair::new(
            prompt,
            chosen,
            rejected,
            ResponseSource::Teacher,
            ResponseSource::BaseStudent,
        )
        .unwrap()
    }

    #[test]
    fn identical_policy_and_reference() {
        let m = ModelParams::tabular_random(Vocab::new(5).unwrap(), 1.2, 11);
        let p = pair(vec![0], vec![1, 4], vec![2, 4]);
        let (loss, diag) = dpo_loss(&m, &m, &p, 0.1).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(diag.margin.abs() < 1e-12);
        assert!((diag.adaptive_weight - 0.5).abs() < 1e-12);
    }

    #[test]
    fn doubling_beta_doubles_margin() {
        let policy = ModelParams::tabular_random(Vocab::new(5).unwrap(), 1.0, 21);
        let reference = ModelParams::tabular_random(Vocab::new(5).unwrap(), 1.0, 22);
        let p = pair(vec![1], vec![0, 4], vec![3, 4]);
        let (_, d1) = dpo_loss(&policy, &reference, &p, 0.1).unwrap();
        let (_, d2) = dpo_loss(&policy, &reference, &p, 0.2).unwrap();
        assert!((d2.margin - 2.0 * d1.margin).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_independent_recomputation() {
        // hand-set V=3 tables; recompute from raw per-token log-probs
        let vocab = Vocab::new(3).unwrap();
        let policy = ModelParams::tabular_from_logits(
            vocab,
            vec![0.4, -0.3, 0.1, 1.0, 0.0, -1.0, 0.2, 0.2, 0.2],
        )
        .unwrap();
        let reference = ModelParams::tabular_from_logits(
            vocab,
            vec![-0.5, 0.5, 0.0, 0.3, 0.3, -0.6, 0.0, 1.0, 0.0],
        )
        .unwrap();
        let beta = 0.7;
        let p = pair(vec![0], vec![1, 2], vec![0, 2]);
        let (loss, diag) = dpo_loss(&policy, &reference, &p, beta).unwrap();

        let lp = |m: &ModelParams, toks: &[u32]| -> f64 {
            let mut prev = 0u32; // prompt = [0]
            let mut total = 0.0;
            for &t in toks {
                let probs = softmax(&m.flat()[prev as usize * 3..prev as usize * 3 + 3]).unwrap();
                total += probs[t as usize].ln();
                prev = t;
            }
            total
        };
        let margin = beta
            * ((lp(&policy, &[1, 2]) - lp(&reference, &[1, 2]))
                - (lp(&policy, &[0, 2]) - lp(&reference, &[0, 2])));
        assert!((diag.margin - margin).abs() < 1e-10);
        assert!((loss - softplus(-margin)).abs() < 1e-10);
    }

    #[test]
    fn large_margin_kills_the_gradient() {
        // chosen already vastly preferred: weight -> 0, gradient norm -> 0
        let vocab = Vocab::new(3).unwrap();
        let mut chosen_heavy = vec![0.0; 9];
        chosen_heavy[1] = 60.0; // row 0 -> token 1
        let policy = ModelParams::tabular_from_logits(vocab, chosen_heavy).unwrap();
        let reference = ModelParams::tabular_uniform(vocab);
        let p = pair(vec![0], vec![1], vec![0]);
        let g = dpo_grad(&policy, &reference, &[p], 1.0).unwrap();
        assert!(g.norm() < 1e-9);
    }

    #[test]
    fn identical_chosen_and_rejected_gives_zero_gradient() {
        let m = ModelParams::tabular_random(Vocab::new(4).unwrap(), 1.0, 31);
        let reference = ModelParams::tabular_random(Vocab::new(4).unwrap(), 1.0, 32);
        let p = pair(vec![0], vec![1, 3], vec![1, 3]);
        let g = dpo_grad(&m, &reference, &[p], 0.5).unwrap();
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn implicit_reward_difference_equals_margin() {
        let policy = ModelParams::tabular_random(Vocab::new(4).unwrap(), 1.0, 41);
        let reference = ModelParams::tabular_random(Vocab::new(4).unwrap(), 1.0, 42);
        let beta = 0.1;
        let p = pair(vec![2], vec![0, 3], vec![1, 3]);
        let (_, diag) = dpo_loss(&policy, &reference, &p, beta).unwrap();
        let r_plus = implicit_reward(&policy, &reference, &[2], &[0, 3], beta).unwrap();
        let r_minus = implicit_reward(&policy, &reference, &[2], &[1, 3], beta).unwrap();
        assert!((r_plus - r_minus - diag.margin).abs() < 1e-10);
    }

    #[test]
    fn implicit_reward_zero_for_identical_models() {
        let m = ModelParams::tabular_random(Vocab::new(4).unwrap(), 1.0, 51);
        let r = implicit_reward(&m, &m, &[0], &[1, 2, 3], 0.1).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn planted_reward_is_recovered() {
        // q_policy proportional to q_ref * exp(r / beta) over single-token
        // responses: implicit reward differences must match planted r
        // differences.
        let vocab = Vocab::new(4).unwrap();
        let beta = 0.25;
        let reference = ModelParams::tabular_random(vocab, 0.8, 61);
        let planted = [0.4, -0.2, 0.9, -0.6];
        let mut logits = reference.flat();
        for prev in 0..4 {
            for c in 0..4 {
                logits[prev * 4 + c] += planted[c] / beta;
            }
        }
        let policy = ModelParams::tabular_from_logits(vocab, logits).unwrap();
        for prompt_tok in 0..4u32 {
            for a in 0..4u32 {
                for b in 0..4u32 {
                    let ra =
                        implicit_reward(&policy, &reference, &[prompt_tok], &[a], beta).unwrap();
                    let rb =
                        implicit_reward(&policy, &reference, &[prompt_tok], &[b], beta).unwrap();
                    let expected = planted[a as usize] - planted[b as usize];
                    assert!(
                        (ra - rb - expected).abs() < 1e-6,
                        "prompt {prompt_tok}: {} vs {expected}",
                        ra - rb
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_non_positive_beta() {
        let m = ModelParams::tabular_uniform(Vocab::new(3).unwrap());
        let p = pair(vec![0], vec![1], vec![2]);
        assert!(dpo_loss(&m, &m, &p, 0.0).is_err());
        assert!(dpo_loss(&m, &m, &p, -0.1).is_err());
    }

    #[test]
    fn loss_invariant_under_shared_row_shift() {
        // adding the same row constant to policy and reference preserves both
        // log-ratios, so the loss must not move
        let vocab = Vocab::new(4).unwrap();
        let policy = ModelParams::tabular_random(vocab, 1.0, 71);
        let reference = ModelParams::tabular_random(vocab, 1.0, 72);
        let p = pair(vec![0], vec![1, 2], vec![2, 1]);
        let (loss, _) = dpo_loss(&policy, &reference, &p, 0.3).unwrap();

        let shift = |m: &ModelParams| {
            let mut flat = m.flat();
            for prev in 0..4 {
                for c in 0..4 {
                    flat[prev * 4 + c] += 0.9 * (prev as f64 + 1.0);
                }
            }
            let mut out = m.clone();
            out.set_flat(&flat).unwrap();
            out
        };
        let (loss2, _) = dpo_loss(&shift(&policy), &shift(&reference), &p, 0.3).unwrap();
        assert!((loss - loss2).abs() < 1e-9);
    }
}
