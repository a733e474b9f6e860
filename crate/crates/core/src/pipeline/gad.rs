//! Generative adversarial distillation baseline.
//!
//! Warmup (one SFT epoch for the generator, Bradley-Terry training for the
//! discriminator), then alternating generator policy-gradient and
//! discriminator updates for E epochs. Every update samples K fresh rollouts
//! per prompt, so the adversarial phase costs exactly N*E*K student
//! generations.

use std::time::Instant;

use crate::error::Result;
use crate::model::ModelParams;
use crate::numerics::{derive_seed, sigmoid};
use crate::objectives::{
    bt_discriminator_loss, policy_gradient_step, CosineSchedule, GdOptimizer,
};
use crate::pipeline::warmup::epoch_batches;
use crate::pipeline::{
    generate_teacher_data, take_snapshot, warmup_for_epochs, BlackBoxTeacher, TrainConfig,
};
use crate::report::{PeakMemSampler, RunReport};
use crate::sequence::SequenceExample;

/// Stage outputs of one adversarial run.
pub struct GadOutput {
    pub generator: ModelParams,
    pub discriminator: ModelParams,
}

pub fn run_gad(
    cfg: &TrainConfig,
    prompts: &[Vec<u32>],
    teacher: &BlackBoxTeacher,
    base_student: &ModelParams,
) -> Result<(ModelParams, RunReport)> {
    let (out, report) = run_gad_full(cfg, prompts, teacher, base_student)?;
    Ok((out.generator, report))
}

pub fn run_gad_full(
    cfg: &TrainConfig,
    prompts: &[Vec<u32>],
    teacher: &BlackBoxTeacher,
    base_student: &ModelParams,
) -> Result<(GadOutput, RunReport)> {
    cfg.validate()?;
    let mut report = RunReport::new("gad", cfg.seed, cfg.clone());
    report.n_prompts = prompts.len();
    report.vocab_size = base_student.vocab().size();
    report.architecture = base_student.architecture().to_string();
    report.note(format!(
        "gad warmup uses {} epoch(s) while the preference pipeline warms up for {}",
        cfg.gad_warmup_epochs, cfg.warmup_epochs
    ));
    report.note(format!(
        "adversarial generation budget counts all {} rollouts per prompt per update (N*E*K)",
        cfg.rollouts
    ));
    let clock = Instant::now();
    let sampler = cfg.instrument.then(PeakMemSampler::start);

    let teacher_data = generate_teacher_data(teacher, prompts, cfg, &mut report.cost)?;
    let mut generator =
        warmup_for_epochs(base_student, &teacher_data, cfg, cfg.gad_warmup_epochs, &mut report)?;

    // discriminator warmup reuses the static snapshot as the student side of
    // the Bradley-Terry pairs; those N generations are reported separately
    // from the adversarial budget
    let (_, snapshot_data) = take_snapshot(base_student, prompts, cfg, &mut report.cost)?;
    report.cost.student_generations -= prompts.len() as u64;
    report.cost.warmup_student_generations += prompts.len() as u64;
    report.note("discriminator warmup reuses the static snapshot pairs");

    let n = prompts.len();
    let disc_lr = cfg.gad_gen_lr * cfg.gad_disc_lr_ratio;
    let mut disc = base_student.clone();
    let bt_warmup_steps = n.div_ceil(cfg.batch_size);
    let mut disc_opt = GdOptimizer::new(CosineSchedule::new(
        disc_lr,
        bt_warmup_steps + cfg.gad_epochs * n,
    )?);

    if cfg.freeze_discriminator {
        // zero parameters score every response exactly 0
        disc.set_flat(&vec![0.0; disc.param_count()])?;
        report.note("discriminator frozen at zero scores");
    } else {
        let batches = epoch_batches(n, cfg.batch_size, derive_seed(cfg.seed, "bt_warmup", 0));
        for batch_idx in batches {
            let mut loss_sum = 0.0;
            let mut grad = crate::gradient::GradientVector::zeros(disc.param_count());
            for &i in &batch_idx {
                let (loss, g) = bt_discriminator_loss(&disc, &teacher_data[i], &snapshot_data[i])?;
                loss_sum += loss;
                grad.add_scaled(&g, 1.0 / batch_idx.len() as f64)?;
            }
            let grad_norm = grad.norm();
            disc_opt.step(&mut disc, &grad)?;
            report.push_metric(
                "bt_warmup",
                loss_sum / batch_idx.len() as f64,
                None,
                None,
                grad_norm,
            );
        }
    }

    let mut gen_opt = GdOptimizer::new(CosineSchedule::new(cfg.gad_gen_lr, cfg.gad_epochs * n)?);
    for epoch in 0..cfg.gad_epochs {
        let order: Vec<usize> =
            epoch_batches(n, 1, derive_seed(cfg.seed, "gad_shuffle", epoch as u64))
                .into_iter()
                .flatten()
                .collect();
        for i in order {
            let pg = policy_gradient_step(
                &generator,
                &disc,
                &prompts[i],
                cfg.rollouts,
                cfg.sample_temperature,
                cfg.max_len,
                derive_seed(cfg.seed, "gad_rollout", (epoch * n + i) as u64),
            )?;
            report.cost.student_generations += cfg.rollouts as u64;
            let gen_grad_norm = pg.grad.norm();
            gen_opt.step(&mut generator, &pg.grad)?;

            let student_sample: &SequenceExample = &pg.rollouts[0];
            let score_teacher = disc.disc_score(&teacher_data[i])?;
            let margin = score_teacher - pg.scores[0];
            let (bt_loss, bt_grad) = bt_discriminator_loss(&disc, &teacher_data[i], student_sample)?;
            if !cfg.freeze_discriminator {
                disc_opt.step(&mut disc, &bt_grad)?;
            }
            report.push_metric(
                "adversarial",
                bt_loss,
                Some(margin),
                Some(sigmoid(-margin)),
                gen_grad_norm,
            );
        }
    }

    report.cost.discriminator_params_active = true;
    report.cost.wall_clock_seconds = clock.elapsed().as_secs_f64();
    report.wall_clock_seconds = report.cost.wall_clock_seconds;
    report.peak_mem_bytes = sampler.map(PeakMemSampler::finish).unwrap_or(0);
    Ok((
        GadOutput {
            generator,
            discriminator: disc,
        },
        report,
    ))
}
