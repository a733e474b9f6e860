//! Shared fixtures for the benchmark targets.

use soda_core::objectives::PreferencePair;
use soda_core::pipeline::{synth_prompts, TrainConfig};
use soda_core::{ModelParams, ResponseSource, SequenceExample, Vocab};

pub fn tabular_pair(seed: u64) -> (ModelParams, ModelParams) {
    let vocab = Vocab::new(6).unwrap();
    (
        ModelParams::tabular_random(vocab, 0.5, seed),
        ModelParams::tabular_random(vocab, 4.0, seed + 1),
    )
}

pub fn transformer_model(seed: u64) -> ModelParams {
    ModelParams::transformer_random(Vocab::new(6).unwrap(), 16, 12, 32, 0.3, seed).unwrap()
}

pub fn example_batch(model: &ModelParams, n: usize, seed_base: u64) -> Vec<SequenceExample> {
    let cfg = TrainConfig::default();
    let prompts = synth_prompts(model.vocab(), n, 4, 7);
    prompts
        .into_iter()
        .enumerate()
        .map(|(i, prompt)| {
            let response = model
                .sample_response(&prompt, 1.0, cfg.max_len, seed_base + i as u64)
                .unwrap();
            SequenceExample::new(prompt, response, ResponseSource::Teacher).unwrap()
        })
        .collect()
}

pub fn pref_batch(model: &ModelParams, n: usize) -> Vec<PreferencePair> {
    let chosen = example_batch(model, n, 0);
    let rejected = example_batch(model, n, 100_000);
    chosen
        .into_iter()
        .zip(rejected)
        .map(|(c, r)| {
            PreferencePair::new(
                c.prompt.clone(),
                c.response,
                r.response,
                ResponseSource::Teacher,
                ResponseSource::BaseStudent,
            )
            .unwrap()
        })
        .collect()
}
