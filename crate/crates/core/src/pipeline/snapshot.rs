//! The one-time static snapshot of the base student.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SodaError};
use crate::model::{Checkpoint, ModelParams};
use crate::numerics::derive_seed;
use crate::pipeline::{CostCounters, TrainConfig};
use crate::sequence::{ResponseSource, SequenceExample};

/// Generation manifest entry: everything needed to reproduce one response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub seed: u64,
    pub temperature: f64,
}

/// Frozen copy of the base student plus the per-prompt generation manifest.
/// Immutable after creation; regeneration from the manifest is byte-exact.
#[derive(Debug, Clone)]
pub struct Snapshot {
    params: ModelParams,
    manifest: Vec<SnapshotRecord>,
    max_len: usize,
}

impl Snapshot {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn manifest(&self) -> &[SnapshotRecord] {
        &self.manifest
    }

    /// Re-samples every response from the manifest. Produces responses
    /// byte-identical to the ones returned by [`take_snapshot`].
    pub fn regenerate(&self, prompts: &[Vec<u32>]) -> Result<Vec<SequenceExample>> {
        if prompts.len() != self.manifest.len() {
            return Err(SodaError::Alignment(format!(
                "manifest covers {} prompts, got {}",
                self.manifest.len(),
                prompts.len()
            )));
        }
        let mut out = Vec::with_capacity(prompts.len());
        for (prompt, record) in prompts.iter().zip(&self.manifest) {
            let response =
                self.params
                    .sample_response(prompt, record.temperature, self.max_len, record.seed)?;
            out.push(SequenceExample::new(
                prompt.clone(),
                response,
                ResponseSource::BaseStudent,
            )?);
        }
        Ok(out)
    }

    pub fn to_payload(&self) -> SnapshotPayload {
        SnapshotPayload {
            checkpoint: self.params.to_checkpoint("q0"),
            manifest: self.manifest.clone(),
            max_len: self.max_len,
        }
    }

    pub fn from_payload(payload: &SnapshotPayload) -> Result<Self> {
        Ok(Self {
            params: ModelParams::from_checkpoint(&payload.checkpoint)?,
            manifest: payload.manifest.clone(),
            max_len: payload.max_len,
        })
    }
}

/// Serialized snapshot: checkpoint plus manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotPayload {
    pub checkpoint: Checkpoint,
    pub manifest: Vec<SnapshotRecord>,
    pub max_len: usize,
}

/// Samples exactly one response per prompt from the untouched base student
/// at the snapshot temperature. Fails with a staleness error if the base
/// model has seen any training update.
pub fn take_snapshot(
    base_student: &ModelParams,
    prompts: &[Vec<u32>],
    cfg: &TrainConfig,
    counters: &mut CostCounters,
) -> Result<(Snapshot, Vec<SequenceExample>)> {
    if base_student.version() != 0 {
        return Err(SodaError::StaleBase {
            version: base_student.version(),
        });
    }
    let mut manifest = Vec::with_capacity(prompts.len());
    let mut data = Vec::with_capacity(prompts.len());
    for (i, prompt) in prompts.iter().enumerate() {
        let seed = derive_seed(cfg.seed, "snapshot", i as u64);
        let response =
            base_student.sample_response(prompt, cfg.snapshot_temperature, cfg.max_len, seed)?;
        manifest.push(SnapshotRecord {
            seed,
            temperature: cfg.snapshot_temperature,
        });
        data.push(SequenceExample::new(
            prompt.clone(),
            response,
            ResponseSource::BaseStudent,
        )?);
    }
    counters.student_generations += prompts.len() as u64;
    Ok((
        Snapshot {
            params: base_student.clone(),
            manifest,
            max_len: cfg.max_len,
        },
        data,
    ))
}
