//! Synthetic prompt sets: random non-EOS token prefixes, plus a disjoint
//! held-out set for out-of-distribution-style evaluation.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SodaError};
use crate::numerics::derive_seed;
use crate::vocab::Vocab;

/// `n` iid prompts of length `len` over the non-EOS tokens. Duplicates are
/// allowed, as in any real prompt corpus.
pub fn synth_prompts(vocab: Vocab, n: usize, len: usize, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "prompts", 0));
    let content_tokens = vocab.size() - 1;
    (0..n)
        .map(|_| (0..len).map(|_| rng.gen_range(0..content_tokens)).collect())
        .collect()
}

/// `n` prompts disjoint from `exclude` as a set. Errors if the prompt space
/// is too small to find them.
pub fn synth_heldout_prompts(
    vocab: Vocab,
    n: usize,
    len: usize,
    seed: u64,
    exclude: &[Vec<u32>],
) -> Result<Vec<Vec<u32>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "heldout_prompts", 0));
    let content_tokens = vocab.size() - 1;
    let mut seen: HashSet<Vec<u32>> = exclude.iter().cloned().collect();
    let mut out = Vec::with_capacity(n);
    let max_attempts = 1000 * n.max(1);
    let mut attempts = 0;
    while out.len() < n {
        if attempts >= max_attempts {
            return Err(SodaError::InvalidConfig(format!(
                "could not find {n} held-out prompts disjoint from the training set; \
                 increase prompt_len or vocab size"
            )));
        }
        attempts += 1;
        let candidate: Vec<u32> = (0..len).map(|_| rng.gen_range(0..content_tokens)).collect();
        if seen.insert(candidate.clone()) {
            out.push(candidate);
        }
    }
    Ok(out)
}
