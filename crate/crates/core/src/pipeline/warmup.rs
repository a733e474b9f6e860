//! Supervised warmup on teacher data; also the whole of the SeqKD method.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SodaError};
use crate::model::ModelParams;
use crate::numerics::derive_seed;
use crate::objectives::{sft_loss_and_grad, CosineSchedule, GdOptimizer};
use crate::pipeline::TrainConfig;
use crate::report::RunReport;
use crate::sequence::SequenceExample;

/// Shuffled minibatch index sets for one epoch.
pub(crate) fn epoch_batches(n_items: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut indices: Vec<usize> = (0..n_items).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    indices
        .chunks(batch_size.max(1))
        .map(|c| c.to_vec())
        .collect()
}

/// SFT for `cfg.warmup_epochs` epochs starting from the base student.
pub fn warmup(
    base_student: &ModelParams,
    teacher_data: &[SequenceExample],
    cfg: &TrainConfig,
    report: &mut RunReport,
) -> Result<ModelParams> {
    warmup_for_epochs(base_student, teacher_data, cfg, cfg.warmup_epochs, report)
}

/// SFT for an explicit epoch count (the adversarial baseline warms up for a
/// single epoch). Zero epochs returns an untouched clone.
pub fn warmup_for_epochs(
    base_student: &ModelParams,
    teacher_data: &[SequenceExample],
    cfg: &TrainConfig,
    epochs: usize,
    report: &mut RunReport,
) -> Result<ModelParams> {
    if teacher_data.is_empty() {
        return Err(SodaError::InvalidInput("no teacher data for warmup".into()));
    }
    let mut model = base_student.clone();
    if epochs == 0 {
        return Ok(model);
    }
    let n_batches_per_epoch = teacher_data.len().div_ceil(cfg.batch_size);
    let total_steps = epochs * n_batches_per_epoch;
    let mut opt = GdOptimizer::new(CosineSchedule::new(cfg.warmup_lr, total_steps)?);
    for epoch in 0..epochs {
        let batches = epoch_batches(
            teacher_data.len(),
            cfg.batch_size,
            derive_seed(cfg.seed, "warmup_shuffle", epoch as u64),
        );
        for batch_idx in batches {
            let batch: Vec<SequenceExample> = batch_idx
                .iter()
                .map(|&i| teacher_data[i].clone())
                .collect();
            let (loss, grad) = sft_loss_and_grad(&model, &batch)?;
            if !loss.is_finite() {
                return Err(SodaError::Numerical("warmup loss diverged".into()));
            }
            let grad_norm = grad.norm();
            opt.step(&mut model, &grad)?;
            report.push_metric("warmup", loss, None, None, grad_norm);
        }
    }
    Ok(model)
}
