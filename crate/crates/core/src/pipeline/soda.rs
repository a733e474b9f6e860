//! The semi on-policy distillation pipeline: static snapshot, preference
//! dataset, supervised warmup, then one preference-optimization epoch with
//! the warmup model as the frozen reference.

use std::time::Instant;

use crate::error::Result;
use crate::model::ModelParams;
use crate::numerics::derive_seed;
use crate::objectives::{dpo_batch, CosineSchedule, GdOptimizer, PreferencePair};
use crate::pipeline::warmup::epoch_batches;
use crate::pipeline::{
    build_pref_dataset, generate_teacher_data, make_rejection_source, warmup, BlackBoxTeacher,
    RejectionSource, TrainConfig,
};
use crate::report::{PeakMemSampler, RunReport};

/// Stage outputs of one run, for checkpointing at stage boundaries.
pub struct SodaOutput {
    /// The distilled policy.
    pub policy: ModelParams,
    /// The warmup model, which also served as the frozen reference.
    pub reference: ModelParams,
}

/// Runs the full pipeline and returns the distilled student with its report.
/// The student-generation counter ends at exactly N: the one-time snapshot
/// is the only sampling the method ever does.
pub fn distill_soda(
    cfg: &TrainConfig,
    prompts: &[Vec<u32>],
    teacher: &BlackBoxTeacher,
    base_student: &ModelParams,
    cross_student: Option<&ModelParams>,
) -> Result<(ModelParams, RunReport)> {
    let (out, report) = distill_soda_full(cfg, prompts, teacher, base_student, cross_student)?;
    Ok((out.policy, report))
}

/// As [`distill_soda`], additionally handing back the warmup reference.
pub fn distill_soda_full(
    cfg: &TrainConfig,
    prompts: &[Vec<u32>],
    teacher: &BlackBoxTeacher,
    base_student: &ModelParams,
    cross_student: Option<&ModelParams>,
) -> Result<(SodaOutput, RunReport)> {
    cfg.validate()?;
    let method = match cfg.rejection_source {
        RejectionSource::BaseStudent => "soda",
        RejectionSource::CrossStudent => "soda_cross_student",
        RejectionSource::Corrupted => "soda_corrupted",
    };
    let mut report = RunReport::new(method, cfg.seed, cfg.clone());
    report.n_prompts = prompts.len();
    report.vocab_size = base_student.vocab().size();
    report.architecture = base_student.architecture().to_string();
    let clock = Instant::now();
    let sampler = cfg.instrument.then(PeakMemSampler::start);

    let teacher_data = generate_teacher_data(teacher, prompts, cfg, &mut report.cost)?;
    let negatives = make_rejection_source(
        cfg.rejection_source,
        cfg,
        base_student,
        cross_student,
        prompts,
        &mut report.cost,
    )?;
    let pref_data = build_pref_dataset(&teacher_data, &negatives)?;
    let reference = warmup(base_student, &teacher_data, cfg, &mut report)?;

    let mut policy = reference.clone();
    let n = pref_data.len();
    let total_steps = cfg.dpo_epochs * n.div_ceil(cfg.batch_size);
    // step size normalized by beta so the initial update scale is
    // beta-independent; large beta then anchors the policy to the reference
    let mut opt = GdOptimizer::new(CosineSchedule::new(cfg.dpo_lr / cfg.beta, total_steps)?);
    for epoch in 0..cfg.dpo_epochs {
        let batches = epoch_batches(
            n,
            cfg.batch_size,
            derive_seed(cfg.seed, "dpo_shuffle", epoch as u64),
        );
        for batch_idx in batches {
            let batch: Vec<PreferencePair> =
                batch_idx.iter().map(|&i| pref_data[i].clone()).collect();
            let (stats, grad) = dpo_batch(&policy, &reference, &batch, cfg.beta)?;
            let grad_norm = grad.norm();
            opt.step(&mut policy, &grad)?;
            report.push_metric(
                "dpo",
                stats.mean_loss,
                Some(stats.mean_margin),
                Some(stats.mean_weight),
                grad_norm,
            );
        }
    }

    report.cost.wall_clock_seconds = clock.elapsed().as_secs_f64();
    report.wall_clock_seconds = report.cost.wall_clock_seconds;
    report.peak_mem_bytes = sampler.map(PeakMemSampler::finish).unwrap_or(0);
    Ok((SodaOutput { policy, reference }, report))
}
