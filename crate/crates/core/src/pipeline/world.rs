//! Deterministic experiment worlds: teacher, students, and prompt sets all
//! derived from one master seed.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ModelParams;
use crate::numerics::derive_seed;
use crate::pipeline::{
    make_synthetic_teacher, synth_heldout_prompts, synth_prompts, TrainConfig,
};
use crate::vocab::Vocab;

/// Student architecture selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ArchSpec {
    Tabular,
    TinyTransformer { d_model: usize, mlp_dim: usize },
}

impl std::fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArchSpec::Tabular => write!(f, "tabular"),
            ArchSpec::TinyTransformer { d_model, mlp_dim } => {
                write!(f, "tiny_transformer(d={d_model},mlp={mlp_dim})")
            }
        }
    }
}

/// Everything an experiment needs, reproducible from (config, seed) alone.
pub struct World {
    pub vocab: Vocab,
    /// Oracle access for evaluation; the training path must wrap it.
    pub teacher_params: ModelParams,
    pub base_student: ModelParams,
    /// Alternate-lineage base student for the rejection-source ablation.
    pub cross_student: ModelParams,
    pub prompts: Vec<Vec<u32>>,
    pub heldout_prompts: Vec<Vec<u32>>,
}

pub fn build_world(
    cfg: &TrainConfig,
    vocab_size: u32,
    arch: ArchSpec,
    n_prompts: usize,
    n_heldout: usize,
) -> Result<World> {
    cfg.validate()?;
    let vocab = Vocab::new(vocab_size)?;
    let teacher_params =
        make_synthetic_teacher(vocab, cfg.teacher_sharpness, derive_seed(cfg.seed, "teacher_init", 0));
    let student = |label_index: u64| -> Result<ModelParams> {
        let seed = derive_seed(cfg.seed, "student_init", label_index);
        match arch {
            ArchSpec::Tabular => Ok(ModelParams::tabular_random(
                vocab,
                cfg.student_init_scale,
                seed,
            )),
            // weight init shrinks with width so activations stay O(scale)
            ArchSpec::TinyTransformer { d_model, mlp_dim } => ModelParams::transformer_random(
                vocab,
                d_model,
                cfg.prompt_len + cfg.max_len + 1,
                mlp_dim,
                cfg.student_init_scale / (d_model as f64).sqrt(),
                seed,
            ),
        }
    };
    let base_student = student(0)?;
    let cross_student = student(1)?;
    let prompts = synth_prompts(vocab, n_prompts, cfg.prompt_len, cfg.seed);
    let heldout_prompts =
        synth_heldout_prompts(vocab, n_heldout, cfg.prompt_len, cfg.seed, &prompts)?;
    Ok(World {
        vocab,
        teacher_params,
        base_student,
        cross_student,
        prompts,
        heldout_prompts,
    })
}
