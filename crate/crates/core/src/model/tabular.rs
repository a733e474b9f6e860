//! Bigram language model backed by a V x V logit table.
//!
//! Row `prev` holds the next-token logits conditioned on the previous token;
//! everything earlier in the context is ignored. Small enough that response
//! distributions can be enumerated exactly, which is what the oracle suite
//! leans on.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SodaError};
use crate::gradient::GradientVector;
use crate::numerics::{log_softmax, standard_normal, NeumaierSum};
use crate::sequence::SequenceExample;
use crate::vocab::Vocab;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularLm {
    vocab: Vocab,
    /// Row-major V x V logits; row = previous token.
    logits: Vec<f64>,
}

impl TabularLm {
    pub fn from_logits(vocab: Vocab, logits: Vec<f64>) -> Result<Self> {
        let v = vocab.size() as usize;
        if logits.len() != v * v {
            return Err(SodaError::InvalidInput(format!(
                "logit table must have {} entries, got {}",
                v * v,
                logits.len()
            )));
        }
        if !logits.iter().all(|x| x.is_finite()) {
            return Err(SodaError::Numerical(
                "logit table contains non-finite entries".into(),
            ));
        }
        Ok(Self { vocab, logits })
    }

    pub fn uniform(vocab: Vocab) -> Self {
        let v = vocab.size() as usize;
        Self {
            vocab,
            logits: vec![0.0; v * v],
        }
    }

    /// Gaussian logits scaled by `scale`; larger scales give sharper rows.
    pub fn random(vocab: Vocab, scale: f64, seed: u64) -> Self {
        let v = vocab.size() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = (0..v * v)
            .map(|_| scale * standard_normal(&mut rng))
            .collect();
        Self { vocab, logits }
    }

    pub fn vocab(&self) -> Vocab {
        self.vocab
    }

    pub fn param_count(&self) -> usize {
        self.logits.len()
    }

    pub fn flat(&self) -> &[f64] {
        &self.logits
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    fn row(&self, prev: u32) -> Result<&[f64]> {
        if !self.vocab.contains(prev) {
            return Err(SodaError::InvalidToken {
                token: prev,
                vocab: self.vocab.size(),
            });
        }
        let v = self.vocab.size() as usize;
        let start = prev as usize * v;
        Ok(&self.logits[start..start + v])
    }

    /// Next-token log-probabilities given a context (only the last token
    /// matters for a bigram model).
    pub fn next_token_log_probs(&self, context: &[u32]) -> Result<Vec<f64>> {
        let prev = *context
            .last()
            .ok_or_else(|| SodaError::InvalidInput("empty context".into()))?;
        let mut row = self.row(prev)?.to_vec();
        log_softmax(&mut row)?;
        Ok(row)
    }

    /// Sum of log q(token | prefix) over masked response positions.
    pub fn logprob_sequence(&self, ex: &SequenceExample) -> Result<f64> {
        self.vocab.check_tokens(&ex.prompt)?;
        self.vocab.check_tokens(&ex.response)?;
        let mut total = NeumaierSum::new();
        let mut prev = *ex.prompt.last().expect("prompt non-empty");
        for (i, &tok) in ex.response.iter().enumerate() {
            if ex.loss_mask[i] {
                let mut row = self.row(prev)?.to_vec();
                log_softmax(&mut row)?;
                total.add(row[tok as usize]);
            }
            prev = tok;
        }
        let value = total.value();
        if !value.is_finite() {
            return Err(SodaError::Numerical(
                "sequence log-probability is non-finite".into(),
            ));
        }
        Ok(value)
    }

    /// Gradient of `logprob_sequence` with respect to the flattened table.
    pub fn grad_logprob(&self, ex: &SequenceExample) -> Result<(f64, GradientVector)> {
        self.vocab.check_tokens(&ex.prompt)?;
        self.vocab.check_tokens(&ex.response)?;
        let v = self.vocab.size() as usize;
        let mut grad = GradientVector::zeros(self.param_count());
        let g = grad.as_mut_slice();
        let mut total = NeumaierSum::new();
        let mut prev = *ex.prompt.last().expect("prompt non-empty");
        for (i, &tok) in ex.response.iter().enumerate() {
            if ex.loss_mask[i] {
                let mut row = self.row(prev)?.to_vec();
                log_softmax(&mut row)?;
                total.add(row[tok as usize]);
                let base = prev as usize * v;
                for c in 0..v {
                    g[base + c] -= row[c].exp();
                }
                g[base + tok as usize] += 1.0;
            }
            prev = tok;
        }
        let value = total.value();
        if !value.is_finite() {
            return Err(SodaError::Numerical(
                "sequence log-probability is non-finite".into(),
            ));
        }
        Ok((value, grad))
    }

    /// Sequence score for discriminator use: the mean, over masked response
    /// positions, of the raw logit assigned to the realized token.
    pub fn disc_score(&self, ex: &SequenceExample) -> Result<f64> {
        self.vocab.check_tokens(&ex.prompt)?;
        self.vocab.check_tokens(&ex.response)?;
        let v = self.vocab.size() as usize;
        let n = ex.masked_len();
        if n == 0 {
            return Err(SodaError::InvalidInput(
                "response has no masked positions to score".into(),
            ));
        }
        let mut total = NeumaierSum::new();
        let mut prev = *ex.prompt.last().expect("prompt non-empty");
        for (i, &tok) in ex.response.iter().enumerate() {
            if ex.loss_mask[i] {
                let value = self.logits[prev as usize * v + tok as usize];
                if !value.is_finite() {
                    return Err(SodaError::Numerical("non-finite score entry".into()));
                }
                total.add(value);
            }
            prev = tok;
        }
        Ok(total.value() / n as f64)
    }

    /// Score plus its gradient with respect to the flattened table.
    pub fn disc_score_and_grad(&self, ex: &SequenceExample) -> Result<(f64, GradientVector)> {
        let score = self.disc_score(ex)?;
        let v = self.vocab.size() as usize;
        let n = ex.masked_len() as f64;
        let mut grad = GradientVector::zeros(self.param_count());
        let g = grad.as_mut_slice();
        let mut prev = *ex.prompt.last().expect("prompt non-empty");
        for (i, &tok) in ex.response.iter().enumerate() {
            if ex.loss_mask[i] {
                g[prev as usize * v + tok as usize] += 1.0 / n;
            }
            prev = tok;
        }
        Ok((score, grad))
    }
}
