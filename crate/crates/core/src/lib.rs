//! Desk-scale black-box distillation laboratory.
//!
//! Tiny autoregressive language models over an integer vocabulary, the
//! training objectives used for black-box distillation (SFT, DPO with its
//! implicit-reward diagnostics, Bradley-Terry discriminator training, and a
//! group-baseline policy gradient), the SODA / SeqKD / GAD pipelines with
//! exact generation-cost accounting, oracle evaluation against a fully known
//! synthetic teacher, and representation diagnostics (linear CKA, activation
//! entropy and kurtosis).

pub mod error;
pub mod eval;
pub mod gradient;
pub mod hidden;
pub mod model;
pub mod numerics;
pub mod objectives;
pub mod pipeline;
pub mod report;
pub mod repr;
pub mod sequence;
pub mod vocab;

pub use error::{Result, SodaError};
pub use gradient::GradientVector;
pub use hidden::{extract_hidden_states, HiddenStateMatrix};
pub use model::{Architecture, Checkpoint, ModelParams};
pub use objectives::{DpoDiagnostics, PreferencePair};
pub use pipeline::{CostCounters, RejectionSource, Snapshot, TrainConfig};
pub use report::{MetricRow, RunReport};
pub use sequence::{ResponseSource, SequenceExample};
pub use vocab::Vocab;
