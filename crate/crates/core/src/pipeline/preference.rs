//! Preference-set construction and the rejection-source ablation.

use crate::error::{Result, SodaError};
use crate::model::ModelParams;
use crate::objectives::PreferencePair;
use crate::pipeline::{take_snapshot, CostCounters, RejectionSource, TrainConfig};
use crate::sequence::{ResponseSource, SequenceExample};

/// Pairs teacher responses (chosen) against rejection-source responses
/// (rejected), prompt by prompt.
pub fn build_pref_dataset(
    teacher_data: &[SequenceExample],
    negative_data: &[SequenceExample],
) -> Result<Vec<PreferencePair>> {
    if teacher_data.len() != negative_data.len() {
        return Err(SodaError::Alignment(format!(
            "teacher data has {} examples, negatives have {}",
            teacher_data.len(),
            negative_data.len()
        )));
    }
    let mut out = Vec::with_capacity(teacher_data.len());
    for (i, (t, s)) in teacher_data.iter().zip(negative_data).enumerate() {
        if t.prompt != s.prompt {
            return Err(SodaError::Alignment(format!(
                "prompt mismatch at index {i}"
            )));
        }
        out.push(PreferencePair::new(
            t.prompt.clone(),
            t.response.clone(),
            s.response.clone(),
            t.source,
            s.source,
        )?);
    }
    Ok(out)
}

/// Produces the rejected responses for the requested ablation mode.
///
/// - `BaseStudent`: the static snapshot of the untouched base student.
/// - `CrossStudent`: same prompts and seeds, sampled from a different base
///   model; requires `cross_student`.
/// - `Corrupted`: the base student sampled at the corruption temperature and
///   truncated to half the generation budget.
pub fn make_rejection_source(
    mode: RejectionSource,
    cfg: &TrainConfig,
    base_student: &ModelParams,
    cross_student: Option<&ModelParams>,
    prompts: &[Vec<u32>],
    counters: &mut CostCounters,
) -> Result<Vec<SequenceExample>> {
    match mode {
        RejectionSource::BaseStudent => {
            let (_, data) = take_snapshot(base_student, prompts, cfg, counters)?;
            Ok(data)
        }
        RejectionSource::CrossStudent => {
            let cross = cross_student.ok_or_else(|| {
                SodaError::InvalidConfig(
                    "cross_student rejection source requires a second base model".into(),
                )
            })?;
            let (_, data) = take_snapshot(cross, prompts, cfg, counters)?;
            let retagged = data
                .into_iter()
                .map(|mut ex| {
                    ex.source = ResponseSource::CrossStudent;
                    ex
                })
                .collect();
            Ok(retagged)
        }
        RejectionSource::Corrupted => {
            if base_student.version() != 0 {
                return Err(SodaError::StaleBase {
                    version: base_student.version(),
                });
            }
            let truncated_len = (cfg.max_len / 2).max(1);
            let mut out = Vec::with_capacity(prompts.len());
            for (i, prompt) in prompts.iter().enumerate() {
                let seed = crate::numerics::derive_seed(cfg.seed, "snapshot", i as u64);
                let response = base_student.sample_response(
                    prompt,
                    cfg.corrupt_temperature,
                    truncated_len,
                    seed,
                )?;
                out.push(SequenceExample::new(
                    prompt.clone(),
                    response,
                    ResponseSource::Corrupted,
                )?);
            }
            counters.student_generations += prompts.len() as u64;
            Ok(out)
        }
    }
}
