//! Experiment configuration: JSON loading with full-field diagnostics,
//! defaults, and validation before any stage runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use soda_core::pipeline::{ArchSpec, TrainConfig};

use crate::error::{CliError, CliResult};

/// Which experiment a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Soda,
    Seqkd,
    Gad,
    Ablation,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Soda => "soda",
            Method::Seqkd => "seqkd",
            Method::Gad => "gad",
            Method::Ablation => "ablation",
        };
        f.write_str(s)
    }
}

/// A fully validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub method: Method,
    pub n_prompts: usize,
    pub vocab_size: u32,
    #[serde(default = "default_architecture")]
    pub architecture: ArchSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_n_heldout")]
    pub n_heldout: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_architecture() -> ArchSpec {
    ArchSpec::Tabular
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_n_heldout() -> usize {
    64
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

const REQUIRED_FIELDS: [&str; 3] = ["method", "n_prompts", "vocab_size"];
const KNOWN_FIELDS: [&str; 8] = [
    "method",
    "n_prompts",
    "vocab_size",
    "architecture",
    "seeds",
    "n_heldout",
    "out_dir",
    "train",
];

impl ExperimentSpec {
    /// Range validation with field paths in every diagnostic.
    pub fn validate(&self) -> CliResult<()> {
        if self.n_prompts < 1 {
            return Err(CliError::config_invalid("n_prompts: must be >= 1"));
        }
        if self.vocab_size < 2 {
            return Err(CliError::config_invalid("vocab_size: must be >= 2"));
        }
        if self.seeds.is_empty() {
            return Err(CliError::config_invalid("seeds: must not be empty"));
        }
        if self.n_heldout < 1 {
            return Err(CliError::config_invalid("n_heldout: must be >= 1"));
        }
        self.train.validate().map_err(|e| {
            let detail = match &e {
                soda_core::SodaError::InvalidConfig(msg) => msg.clone(),
                other => other.to_string(),
            };
            CliError::config_invalid(format!("train.{detail}"))
        })?;
        Ok(())
    }

    /// The output directory, honoring the SODA_OUT_DIR override.
    pub fn effective_out_dir(&self) -> PathBuf {
        match std::env::var_os("SODA_OUT_DIR") {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.out_dir.clone(),
        }
    }
}

/// Loads, fully diagnoses, and validates a config file. Missing required
/// fields are reported all at once; unknown keys and type mismatches carry
/// the offending field.
pub fn load_config(path: &Path) -> CliResult<ExperimentSpec> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::config_not_found(path));
        }
        Err(e) => return Err(e.into()),
    };
    parse_config(&text).map_err(|e| {
        CliError::config_invalid(format!("{}: {}", path.display(), e.message))
    })
}

pub fn parse_config(text: &str) -> CliResult<ExperimentSpec> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| CliError::config_invalid(format!("invalid JSON: {e}")))?;
    let object = value
        .as_object()
        .ok_or_else(|| CliError::config_invalid("config must be a JSON object"))?;

    let missing: Vec<&str> = REQUIRED_FIELDS
        .iter()
        .filter(|f| !object.contains_key(**f))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(CliError::config_invalid(format!(
            "missing required fields: {}",
            missing.join(", ")
        )));
    }
    for key in object.keys() {
        if !KNOWN_FIELDS.contains(&key.as_str()) {
            return Err(CliError::config_invalid(format!("unknown field: {key}")));
        }
    }

    let spec: ExperimentSpec = serde_json::from_value(value)
        .map_err(|e| CliError::config_invalid(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

/// Serializes a spec with all defaults materialized, so that
/// `load(save(spec))` reproduces the spec exactly.
pub fn save_config(spec: &ExperimentSpec, path: &Path) -> CliResult<()> {
    let json = serde_json::to_string_pretty(spec)?;
    crate::io::atomic_write(path, json.as_bytes())?;
    Ok(())
}
