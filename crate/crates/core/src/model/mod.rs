//! Model parameters for the two toy architectures, plus checkpoint I/O.
//!
//! A `ModelParams` value is immutable for all evaluation purposes; training
//! mutates it only through [`ModelParams::apply_gradient_step`], which bumps
//! the monotone version counter used by the snapshot staleness guard.

mod tabular;
mod transformer;

pub use tabular::TabularLm;
pub use transformer::{TinyTransformer, TransformerDims, N_LAYERS};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SodaError};
use crate::gradient::GradientVector;
use crate::sequence::SequenceExample;
use crate::vocab::Vocab;

/// Architecture descriptor, also used as the checkpoint shape header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Architecture {
    Tabular {
        vocab: u32,
    },
    TinyTransformer {
        vocab: u32,
        d_model: usize,
        n_positions: usize,
        mlp_dim: usize,
    },
}

impl Architecture {
    pub fn vocab_size(&self) -> u32 {
        match self {
            Architecture::Tabular { vocab } => *vocab,
            Architecture::TinyTransformer { vocab, .. } => *vocab,
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Architecture::Tabular { vocab } => write!(f, "tabular(v={vocab})"),
            Architecture::TinyTransformer {
                vocab,
                d_model,
                n_positions,
                mlp_dim,
            } => write!(
                f,
                "tiny_transformer(v={vocab},d={d_model},p={n_positions},mlp={mlp_dim})"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Tabular(TabularLm),
    Transformer(TinyTransformer),
}

/// Parameters of a tiny autoregressive LM (or a discriminator sharing the
/// same body; scoring reads the realized-token logit, mean-pooled over the
/// response).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    body: Body,
    version: u64,
}

impl ModelParams {
    pub fn tabular_uniform(vocab: Vocab) -> Self {
        Self {
            body: Body::Tabular(TabularLm::uniform(vocab)),
            version: 0,
        }
    }

    pub fn tabular_random(vocab: Vocab, scale: f64, seed: u64) -> Self {
        Self {
            body: Body::Tabular(TabularLm::random(vocab, scale, seed)),
            version: 0,
        }
    }

    pub fn tabular_from_logits(vocab: Vocab, logits: Vec<f64>) -> Result<Self> {
        Ok(Self {
            body: Body::Tabular(TabularLm::from_logits(vocab, logits)?),
            version: 0,
        })
    }

    pub fn transformer_random(
        vocab: Vocab,
        d_model: usize,
        n_positions: usize,
        mlp_dim: usize,
        init_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            body: Body::Transformer(TinyTransformer::random(
                vocab,
                d_model,
                n_positions,
                mlp_dim,
                init_scale,
                seed,
            )?),
            version: 0,
        })
    }

    pub fn vocab(&self) -> Vocab {
        match &self.body {
            Body::Tabular(m) => m.vocab(),
            Body::Transformer(m) => m.vocab(),
        }
    }

    pub fn architecture(&self) -> Architecture {
        match &self.body {
            Body::Tabular(m) => Architecture::Tabular {
                vocab: m.vocab().size(),
            },
            Body::Transformer(m) => {
                let d = m.dims();
                Architecture::TinyTransformer {
                    vocab: d.vocab,
                    d_model: d.d_model,
                    n_positions: d.n_positions,
                    mlp_dim: d.mlp_dim,
                }
            }
        }
    }

    pub fn is_tabular(&self) -> bool {
        matches!(self.body, Body::Tabular(_))
    }

    /// Number of completed training updates. Zero means "before any
    /// fine-tuning", which is what the snapshot stage requires.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn param_count(&self) -> usize {
        match &self.body {
            Body::Tabular(m) => m.param_count(),
            Body::Transformer(m) => m.param_count(),
        }
    }

    /// Flattened parameters in the architecture's documented layout order.
    pub fn flat(&self) -> Vec<f64> {
        match &self.body {
            Body::Tabular(m) => m.flat().to_vec(),
            Body::Transformer(m) => m.flat().to_vec(),
        }
    }

    /// Replaces the flattened parameters without touching the version
    /// counter. Used by the finite-difference checker and checkpoint loader.
    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(SodaError::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        match &mut self.body {
            Body::Tabular(m) => m.flat_mut().copy_from_slice(values),
            Body::Transformer(m) => m.flat_mut().copy_from_slice(values),
        }
        Ok(())
    }

    /// One descent step `theta -= lr * grad`, the single mutation path.
    pub fn apply_gradient_step(&mut self, grad: &GradientVector, lr: f64) -> Result<()> {
        if grad.len() != self.param_count() {
            return Err(SodaError::InvalidInput(format!(
                "gradient has {} coordinates, model has {}",
                grad.len(),
                self.param_count()
            )));
        }
        let gs = grad.as_slice();
        let target = match &mut self.body {
            Body::Tabular(m) => m.flat_mut(),
            Body::Transformer(m) => m.flat_mut(),
        };
        for (p, g) in target.iter_mut().zip(gs) {
            *p -= lr * g;
        }
        if !target.iter().all(|x| x.is_finite()) {
            return Err(SodaError::Numerical(
                "parameters became non-finite after update".into(),
            ));
        }
        self.version += 1;
        Ok(())
    }

    /// Next-token log-probabilities conditioned on a non-empty context.
    pub fn next_token_log_probs(&self, context: &[u32]) -> Result<Vec<f64>> {
        match &self.body {
            Body::Tabular(m) => m.next_token_log_probs(context),
            Body::Transformer(m) => m.next_token_log_probs(context),
        }
    }

    /// Sum of log q(token | prefix) over masked response positions; always <= 0.
    pub fn logprob_sequence(&self, ex: &SequenceExample) -> Result<f64> {
        match &self.body {
            Body::Tabular(m) => m.logprob_sequence(ex),
            Body::Transformer(m) => m.logprob_sequence(ex),
        }
    }

    /// Masked log-prob and its gradient with respect to the flat parameters.
    pub fn grad_logprob(&self, ex: &SequenceExample) -> Result<(f64, GradientVector)> {
        match &self.body {
            Body::Tabular(m) => m.grad_logprob(ex),
            Body::Transformer(m) => m.grad_logprob(ex),
        }
    }

    /// Discriminator scalar score for a response.
    pub fn disc_score(&self, ex: &SequenceExample) -> Result<f64> {
        match &self.body {
            Body::Tabular(m) => m.disc_score(ex),
            Body::Transformer(m) => m.disc_score(ex),
        }
    }

    pub fn disc_score_and_grad(&self, ex: &SequenceExample) -> Result<(f64, GradientVector)> {
        match &self.body {
            Body::Tabular(m) => m.disc_score_and_grad(ex),
            Body::Transformer(m) => m.disc_score_and_grad(ex),
        }
    }

    pub(crate) fn as_transformer(&self) -> Result<&TinyTransformer> {
        match &self.body {
            Body::Transformer(m) => Ok(m),
            Body::Tabular(_) => Err(SodaError::UnsupportedArchitecture(
                "operation requires the transformer architecture".into(),
            )),
        }
    }

    /// Temperature sampling of a response: tokens are drawn until EOS or
    /// `max_len`, and the output is identical for identical seeds.
    pub fn sample_response(
        &self,
        prompt: &[u32],
        temperature: f64,
        max_len: usize,
        rng_seed: u64,
    ) -> Result<Vec<u32>> {
        if temperature <= 0.0 || !temperature.is_finite() {
            return Err(SodaError::InvalidConfig(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        if max_len == 0 {
            return Err(SodaError::InvalidConfig("max_len must be >= 1".into()));
        }
        if prompt.is_empty() {
            return Err(SodaError::InvalidInput("prompt must be non-empty".into()));
        }
        self.vocab().check_tokens(prompt)?;
        let eos = self.vocab().eos();
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut context = prompt.to_vec();
        let mut response = Vec::new();
        for _ in 0..max_len {
            let log_probs = self.next_token_log_probs(&context)?;
            let token = sample_tempered(&log_probs, temperature, &mut rng)?;
            response.push(token);
            if token == eos {
                break;
            }
            context.push(token);
        }
        Ok(response)
    }

    // ---- checkpoint io -------------------------------------------------

    /// Serializes to a JSON checkpoint. JSON floats are printed in shortest
    /// round-trip form, so load(save(m)) is bit-exact.
    pub fn to_checkpoint(&self, stage: &str) -> Checkpoint {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            stage: stage.to_string(),
            architecture: self.architecture(),
            version: self.version,
            data: self.flat(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(SodaError::Migration(format!(
                "checkpoint schema {} (current {})",
                ckpt.schema_version, CHECKPOINT_SCHEMA_VERSION
            )));
        }
        let body = match ckpt.architecture {
            Architecture::Tabular { vocab } => {
                let vocab = Vocab::new(vocab)?;
                Body::Tabular(TabularLm::from_logits(vocab, ckpt.data.clone())?)
            }
            Architecture::TinyTransformer {
                vocab,
                d_model,
                n_positions,
                mlp_dim,
            } => {
                let vocab = Vocab::new(vocab)?;
                let dims = TransformerDims {
                    vocab: vocab.size(),
                    d_model,
                    n_positions,
                    mlp_dim,
                };
                Body::Transformer(TinyTransformer::from_flat(vocab, dims, ckpt.data.clone())?)
            }
        };
        Ok(Self {
            body,
            version: ckpt.version,
        })
    }

    /// Hidden state of the last prompt token at an observable layer
    /// (transformer only).
    pub fn last_token_hidden(&self, prompt: &[u32], layer: usize) -> Result<Vec<f64>> {
        self.as_transformer()?.last_token_hidden(prompt, layer)
    }
}

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// On-disk checkpoint payload: architecture tag, shape header, and the flat
/// row-major parameter data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub stage: String,
    pub architecture: Architecture,
    pub version: u64,
    pub data: Vec<f64>,
}

/// Draws one token from softmax(log_probs / temperature) via a single
/// uniform draw over the cumulative distribution.
fn sample_tempered(log_probs: &[f64], temperature: f64, rng: &mut ChaCha8Rng) -> Result<u32> {
    let mut scaled: Vec<f64> = log_probs.iter().map(|lp| lp / temperature).collect();
    crate::numerics::log_softmax(&mut scaled)?;
    let u: f64 = rng.gen::<f64>();
    let mut cum = 0.0;
    for (i, lp) in scaled.iter().enumerate() {
        cum += lp.exp();
        if u < cum {
            return Ok(i as u32);
        }
    }
    Ok((log_probs.len() - 1) as u32)
}
