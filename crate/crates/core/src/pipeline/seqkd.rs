//! Sequence-level knowledge distillation: supervised fine-tuning on teacher
//! responses, nothing else. Zero student generations by construction.

use std::time::Instant;

use crate::error::Result;
use crate::model::ModelParams;
use crate::pipeline::{generate_teacher_data, warmup, BlackBoxTeacher, TrainConfig};
use crate::report::{PeakMemSampler, RunReport};

pub fn run_seqkd(
    cfg: &TrainConfig,
    prompts: &[Vec<u32>],
    teacher: &BlackBoxTeacher,
    base_student: &ModelParams,
) -> Result<(ModelParams, RunReport)> {
    cfg.validate()?;
    let mut report = RunReport::new("seqkd", cfg.seed, cfg.clone());
    report.n_prompts = prompts.len();
    report.vocab_size = base_student.vocab().size();
    report.architecture = base_student.architecture().to_string();
    let clock = Instant::now();
    let sampler = cfg.instrument.then(PeakMemSampler::start);

    let teacher_data = generate_teacher_data(teacher, prompts, cfg, &mut report.cost)?;
    let model = warmup(base_student, &teacher_data, cfg, &mut report)?;

    report.cost.wall_clock_seconds = clock.elapsed().as_secs_f64();
    report.wall_clock_seconds = report.cost.wall_clock_seconds;
    report.peak_mem_bytes = sampler.map(PeakMemSampler::finish).unwrap_or(0);
    Ok((model, report))
}
