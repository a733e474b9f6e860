//! Group-baseline policy gradient for the adversarial generator.
//!
//! REINFORCE with the per-prompt advantage centered by the mean score of the
//! K rollouts. No clipping and no KL penalty; the rollout count is what
//! drives generation-cost accounting.

use crate::error::{Result, SodaError};
use crate::gradient::GradientVector;
use crate::model::ModelParams;
use crate::numerics::{compensated_mean, derive_seed};
use crate::sequence::{ResponseSource, SequenceExample};

/// Result of one policy-gradient step on a single prompt.
#[derive(Debug, Clone)]
pub struct PolicyGradientOutcome {
    /// Descent direction for the generator's loss `-E[D(y)]`.
    pub grad: GradientVector,
    /// The K sampled responses.
    pub rollouts: Vec<SequenceExample>,
    /// Discriminator scores of the rollouts.
    pub scores: Vec<f64>,
    /// Mean-centered advantages; they sum to exactly zero.
    pub advantages: Vec<f64>,
    pub mean_score: f64,
}

/// Samples K rollouts from the generator, scores them with the
/// discriminator, and returns `-(1/K) * sum_k A_k * grad log q(y_k | x)`
/// with `A_k = D(y_k) - mean_j D(y_j)`.
#[allow(clippy::too_many_arguments)]
pub fn policy_gradient_step(
    generator: &ModelParams,
    disc: &ModelParams,
    prompt: &[u32],
    rollouts: usize,
    temperature: f64,
    max_len: usize,
    rng_seed: u64,
) -> Result<PolicyGradientOutcome> {
    if rollouts < 2 {
        return Err(SodaError::InvalidConfig(
            "group baseline needs at least 2 rollouts".into(),
        ));
    }
    let mut samples = Vec::with_capacity(rollouts);
    let mut scores = Vec::with_capacity(rollouts);
    for k in 0..rollouts {
        let seed = derive_seed(rng_seed, "rollout", k as u64);
        let response = generator.sample_response(prompt, temperature, max_len, seed)?;
        let ex = SequenceExample::new(prompt.to_vec(), response, ResponseSource::BaseStudent)?;
        scores.push(disc.disc_score(&ex)?);
        samples.push(ex);
    }
    let mean_score = compensated_mean(&scores);
    let advantages = center_scores(&scores);

    let mut grad = GradientVector::zeros(generator.param_count());
    for (ex, &adv) in samples.iter().zip(&advantages) {
        if adv == 0.0 {
            continue;
        }
        let (_, g) = generator.grad_logprob(ex)?;
        grad.add_scaled(&g, -adv / rollouts as f64)?;
    }
    Ok(PolicyGradientOutcome {
        grad,
        rollouts: samples,
        scores,
        advantages,
        mean_score,
    })
}

/// Mean-centers scores so the advantages sum to exactly zero in the
/// left-to-right accumulation order. Identical scores short-circuit to
/// all-zero advantages.
fn center_scores(scores: &[f64]) -> Vec<f64> {
    if scores.iter().all(|&s| s == scores[0]) {
        return vec![0.0; scores.len()];
    }
    let mean = compensated_mean(scores);
    let mut adv: Vec<f64> = scores.iter().map(|s| s - mean).collect();
    let residual = compensated_mean(&adv);
    for a in &mut adv {
        *a -= residual;
    }
    // pin the running sum to zero; the adjustment is at rounding scale
    let mut run = 0.0;
    for a in adv.iter().take(adv.len() - 1) {
        run += a;
    }
    let last = adv.len() - 1;
    adv[last] = -run;
    adv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Vocab;

    #[test]
    fn identical_scores_give_zero_gradient() {
        let generator = ModelParams::tabular_random(Vocab::new(4).unwrap(), 0.7, 3);
        // uniform (all-zero) discriminator scores every response 0
        let disc = ModelParams::tabular_uniform(Vocab::new(4).unwrap());
        let out = policy_gradient_step(&generator, &disc, &[0], 4, 1.0, 3, 5).unwrap();
        assert!(out.advantages.iter().all(|&a| a == 0.0));
        assert!(out.grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn advantages_sum_to_exactly_zero() {
        let generator = ModelParams::tabular_random(Vocab::new(5).unwrap(), 0.7, 13);
        let disc = ModelParams::tabular_random(Vocab::new(5).unwrap(), 1.1, 14);
        for seed in 0..20 {
            let out = policy_gradient_step(&generator, &disc, &[1], 5, 1.0, 3, seed).unwrap();
            let total: f64 = out.advantages.iter().sum();
            assert_eq!(total, 0.0, "seed {seed}");
        }
    }

    #[test]
    fn needs_at_least_two_rollouts() {
        let m = ModelParams::tabular_uniform(Vocab::new(3).unwrap());
        assert!(matches!(
            policy_gradient_step(&m, &m, &[0], 1, 1.0, 3, 0),
            Err(SodaError::InvalidConfig(_))
        ));
    }

    #[test]
    fn bandit_learns_the_favored_action() {
        // V=2 (token 0 and EOS), length-1 responses: a 2-action bandit.
        // D favors action 0; repeated steps must raise q(0) monotonically in
        // expectation over 20 seeds.
        let vocab = Vocab::new(2).unwrap();
        let mut disc_logits = vec![0.0; 4];
        disc_logits[0] = 1.0; // prompt token 0, action 0 gets score 1
        let disc = ModelParams::tabular_from_logits(vocab, disc_logits).unwrap();

        let prob_action0 = |m: &ModelParams| {
            let lp = m.next_token_log_probs(&[0]).unwrap();
            lp[0].exp()
        };

        let n_seeds = 20;
        let n_steps = 30;
        let mut mean_traj = vec![0.0f64; n_steps + 1];
        for seed in 0..n_seeds as u64 {
            let mut generator = ModelParams::tabular_uniform(vocab);
            mean_traj[0] += prob_action0(&generator) / n_seeds as f64;
            for step in 0..n_steps {
                let out = policy_gradient_step(
                    &generator,
                    &disc,
                    &[0],
                    8,
                    1.0,
                    1,
                    derive_seed(seed, "bandit", step as u64),
                )
                .unwrap();
                generator.apply_gradient_step(&out.grad, 0.4).unwrap();
                mean_traj[step + 1] += prob_action0(&generator) / n_seeds as f64;
            }
        }
        for w in mean_traj.windows(2) {
            assert!(w[1] >= w[0] - 5e-3, "mean trajectory dipped: {mean_traj:?}");
        }
        assert!(mean_traj[n_steps] > mean_traj[0] + 0.2);
    }

    #[test]
    fn baseline_removes_constant_score_shifts() {
        // E[grad] is invariant to adding a constant to all scores; with the
        // group baseline the per-call advantages are literally identical.
        let generator = ModelParams::tabular_random(Vocab::new(4).unwrap(), 0.6, 23);
        let disc_a = ModelParams::tabular_uniform(Vocab::new(4).unwrap());
        let mut shifted = disc_a.flat();
        for v in &mut shifted {
            *v += 3.5;
        }
        let mut disc_b = disc_a.clone();
        disc_b.set_flat(&shifted).unwrap();
        for seed in 0..50 {
            let a = policy_gradient_step(&generator, &disc_a, &[0], 4, 1.0, 3, seed).unwrap();
            let b = policy_gradient_step(&generator, &disc_b, &[0], 4, 1.0, 3, seed).unwrap();
            for (x, y) in a.advantages.iter().zip(&b.advantages) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
