//! Experiment pipelines: synthetic-teacher worlds, the static snapshot,
//! preference-set construction, warmup, and the SODA / SeqKD / GAD runs with
//! exact generation-cost accounting.

mod gad;
mod preference;
mod prompts;
mod seqkd;
mod snapshot;
mod soda;
mod teacher;
mod warmup;
mod world;

pub use gad::{run_gad, run_gad_full, GadOutput};
pub use preference::{build_pref_dataset, make_rejection_source};
pub use prompts::{synth_heldout_prompts, synth_prompts};
pub use seqkd::run_seqkd;
pub use snapshot::{take_snapshot, Snapshot, SnapshotPayload, SnapshotRecord};
pub use soda::{distill_soda, distill_soda_full, SodaOutput};
pub use teacher::{generate_teacher_data, make_synthetic_teacher, BlackBoxTeacher};
pub use warmup::{warmup, warmup_for_epochs};
pub use world::{build_world, ArchSpec, World};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SodaError};

/// Which distribution supplies the rejected responses for preference pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionSource {
    /// The untouched base student (the standard pipeline).
    BaseStudent,
    /// A base student of a different lineage (different init seed).
    CrossStudent,
    /// The base student sampled hot and truncated to half length.
    Corrupted,
}

impl std::fmt::Display for RejectionSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RejectionSource::BaseStudent => "base_student",
            RejectionSource::CrossStudent => "cross_student",
            RejectionSource::Corrupted => "corrupted",
        };
        f.write_str(s)
    }
}

/// All knobs of a single training run. Defaults pin the reference recipe:
/// beta 0.1, three warmup epochs, one preference epoch, snapshot temperature
/// 0.7, and a one-epoch adversarial warmup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    /// Preference-loss temperature (KL anchor strength).
    pub beta: f64,
    pub warmup_epochs: usize,
    pub dpo_epochs: usize,
    /// Adversarial epochs E.
    pub gad_epochs: usize,
    pub gad_warmup_epochs: usize,
    /// Rollouts K per prompt per adversarial update.
    pub rollouts: usize,
    pub snapshot_temperature: f64,
    /// Temperature for adversarial rollouts and judge sampling.
    pub sample_temperature: f64,
    /// Temperature for the corrupted rejection source (>= 3).
    pub corrupt_temperature: f64,
    pub warmup_lr: f64,
    pub dpo_lr: f64,
    pub gad_gen_lr: f64,
    /// Discriminator lr = generator lr times this ratio.
    pub gad_disc_lr_ratio: f64,
    pub batch_size: usize,
    pub max_len: usize,
    pub prompt_len: usize,
    /// Scale of the teacher's random logits; >= 3 gives low-entropy rows.
    pub teacher_sharpness: f64,
    /// Scale of the base student's random logits.
    pub student_init_scale: f64,
    pub rejection_source: RejectionSource,
    /// Pins the discriminator at zero scores and skips its updates.
    pub freeze_discriminator: bool,
    /// Enables wall-clock and peak-memory instrumentation.
    pub instrument: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            beta: 0.1,
            warmup_epochs: 3,
            dpo_epochs: 1,
            gad_epochs: 3,
            gad_warmup_epochs: 1,
            rollouts: 4,
            snapshot_temperature: 0.7,
            sample_temperature: 1.0,
            corrupt_temperature: 3.0,
            warmup_lr: 0.3,
            dpo_lr: 0.3,
            gad_gen_lr: 0.1,
            gad_disc_lr_ratio: 1.0,
            batch_size: 32,
            max_len: 3,
            prompt_len: 5,
            teacher_sharpness: 4.0,
            student_init_scale: 0.5,
            rejection_source: RejectionSource::BaseStudent,
            freeze_discriminator: false,
            instrument: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("snapshot_temperature", self.snapshot_temperature),
            ("sample_temperature", self.sample_temperature),
            ("warmup_lr", self.warmup_lr),
            ("dpo_lr", self.dpo_lr),
            ("gad_gen_lr", self.gad_gen_lr),
            ("gad_disc_lr_ratio", self.gad_disc_lr_ratio),
            ("teacher_sharpness", self.teacher_sharpness),
            ("student_init_scale", self.student_init_scale),
        ];
        for (name, value) in positive {
            if value <= 0.0 || !value.is_finite() {
                return Err(SodaError::InvalidConfig(format!(
                    "{name} must be > 0, got {value}"
                )));
            }
        }
        if self.corrupt_temperature < 3.0 {
            return Err(SodaError::InvalidConfig(format!(
                "corrupt_temperature must be >= 3.0, got {}",
                self.corrupt_temperature
            )));
        }
        if self.dpo_epochs < 1 {
            return Err(SodaError::InvalidConfig("dpo_epochs must be >= 1".into()));
        }
        if self.gad_epochs < 1 {
            return Err(SodaError::InvalidConfig("gad_epochs must be >= 1".into()));
        }
        if self.rollouts < 2 {
            return Err(SodaError::InvalidConfig(
                "rollouts must be >= 2 for the group baseline".into(),
            ));
        }
        if self.batch_size < 1 {
            return Err(SodaError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.max_len < 1 {
            return Err(SodaError::InvalidConfig("max_len must be >= 1".into()));
        }
        if self.prompt_len < 1 {
            return Err(SodaError::InvalidConfig("prompt_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// Generation and resource accounting for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostCounters {
    pub teacher_queries: u64,
    pub student_generations: u64,
    /// Snapshot generations consumed by the adversarial warmup, reported
    /// separately from the adversarial-phase budget.
    pub warmup_student_generations: u64,
    pub discriminator_params_active: bool,
    pub wall_clock_seconds: f64,
}
