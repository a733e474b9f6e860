//! Oracle evaluation against the fully known synthetic teacher: exact or
//! Monte Carlo KL over the response space, a noiseless pairwise judge based
//! on the true teacher log-likelihood, and multi-seed aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SodaError};
use crate::model::ModelParams;
use crate::numerics::{derive_seed, NeumaierSum};
use crate::pipeline::TrainConfig;
use crate::report::EvalRow;
use crate::sequence::{ResponseSource, SequenceExample};

/// How to estimate the mean response-space KL.
#[derive(Debug, Clone, Copy)]
pub enum KlMode {
    /// Exhaustive enumeration of the length-capped response space.
    /// Requires tabular models with vocab <= 8 and max_len <= 3.
    Exact,
    /// Sampling from the student, with a reported standard error.
    MonteCarlo { samples_per_prompt: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy)]
pub struct KlEstimate {
    pub mean: f64,
    /// Standard error for Monte Carlo estimates; exact values carry none.
    pub std_err: Option<f64>,
}

const EXACT_MAX_VOCAB: u32 = 8;
const EXACT_MAX_LEN: usize = 3;

/// Mean over prompts of KL(student(.|x) || teacher(.|x)) over the response
/// space (responses end at EOS or truncate at `max_len`).
pub fn kl_to_teacher(
    student: &ModelParams,
    teacher: &ModelParams,
    prompts: &[Vec<u32>],
    max_len: usize,
    mode: KlMode,
) -> Result<KlEstimate> {
    if prompts.is_empty() {
        return Err(SodaError::InvalidInput("no prompts to evaluate".into()));
    }
    match mode {
        KlMode::Exact => exact_kl(student, teacher, prompts, max_len),
        KlMode::MonteCarlo {
            samples_per_prompt,
            seed,
        } => mc_kl(student, teacher, prompts, max_len, samples_per_prompt, seed),
    }
}

fn exact_kl(
    student: &ModelParams,
    teacher: &ModelParams,
    prompts: &[Vec<u32>],
    max_len: usize,
) -> Result<KlEstimate> {
    if !student.is_tabular() || !teacher.is_tabular() {
        return Err(SodaError::Budget(
            "exact KL requires tabular models".into(),
        ));
    }
    let vocab = student.vocab();
    if vocab.size() > EXACT_MAX_VOCAB || max_len > EXACT_MAX_LEN {
        return Err(SodaError::Budget(format!(
            "exact KL supports vocab <= {EXACT_MAX_VOCAB} and max_len <= {EXACT_MAX_LEN}, \
             got vocab {} and max_len {max_len}",
            vocab.size()
        )));
    }
    // bigram response distributions depend on the prompt only through its
    // last token, so group prompts and weight by multiplicity
    let mut counts = vec![0u64; vocab.size() as usize];
    for p in prompts {
        let last = *p
            .last()
            .ok_or_else(|| SodaError::InvalidInput("empty prompt".into()))?;
        vocab.check_tokens(p)?;
        counts[last as usize] += 1;
    }
    let mut total = NeumaierSum::new();
    for (last, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let mut acc = NeumaierSum::new();
        let mut context = vec![last as u32];
        response_space_kl(student, teacher, &mut context, 0.0, 0.0, max_len, &mut acc)?;
        total.add(acc.value() * count as f64);
    }
    let mean = total.value() / prompts.len() as f64;
    Ok(KlEstimate {
        mean,
        std_err: None,
    })
}

/// Walks every response in the length-capped space, accumulating
/// q(y) * (log q(y) - log p(y)). A response terminates at EOS or at the
/// length cap; the enumerated space has total probability one.
fn response_space_kl(
    student: &ModelParams,
    teacher: &ModelParams,
    context: &mut Vec<u32>,
    lp_student: f64,
    lp_teacher: f64,
    len_left: usize,
    acc: &mut NeumaierSum,
) -> Result<()> {
    let eos = student.vocab().eos();
    let ls = student.next_token_log_probs(context)?;
    let lt = teacher.next_token_log_probs(context)?;
    for token in 0..student.vocab().size() {
        let s = lp_student + ls[token as usize];
        let t = lp_teacher + lt[token as usize];
        if token == eos || len_left == 1 {
            acc.add(s.exp() * (s - t));
        } else {
            context.push(token);
            response_space_kl(student, teacher, context, s, t, len_left - 1, acc)?;
            context.pop();
        }
    }
    Ok(())
}

fn mc_kl(
    student: &ModelParams,
    teacher: &ModelParams,
    prompts: &[Vec<u32>],
    max_len: usize,
    samples_per_prompt: usize,
    seed: u64,
) -> Result<KlEstimate> {
    if samples_per_prompt == 0 {
        return Err(SodaError::InvalidConfig(
            "samples_per_prompt must be >= 1".into(),
        ));
    }
    let n_prompts = prompts.len() as f64;
    let mut mean_total = NeumaierSum::new();
    let mut var_total = NeumaierSum::new();
    for (i, prompt) in prompts.iter().enumerate() {
        let mut values = Vec::with_capacity(samples_per_prompt);
        for k in 0..samples_per_prompt {
            let draw_seed = derive_seed(seed, "mc_kl", (i * samples_per_prompt + k) as u64);
            let response = student.sample_response(prompt, 1.0, max_len, draw_seed)?;
            let ex = SequenceExample::new(prompt.clone(), response, ResponseSource::BaseStudent)?;
            values.push(student.logprob_sequence(&ex)? - teacher.logprob_sequence(&ex)?);
        }
        let mean = crate::numerics::compensated_mean(&values);
        mean_total.add(mean);
        if samples_per_prompt > 1 {
            let mut ss = NeumaierSum::new();
            for v in &values {
                ss.add((v - mean) * (v - mean));
            }
            let sample_var = ss.value() / (samples_per_prompt - 1) as f64;
            var_total.add(sample_var / samples_per_prompt as f64);
        }
    }
    let std_err = if samples_per_prompt > 1 {
        Some((var_total.value() / (n_prompts * n_prompts)).sqrt())
    } else {
        None
    };
    Ok(KlEstimate {
        mean: mean_total.value() / n_prompts,
        std_err,
    })
}

/// Pairwise win-rate in [0, 100] judged by the true teacher log-likelihood.
/// Student and reference sample with paired seeds; ties score half a win, so
/// a model judged against itself lands on exactly 50.
#[allow(clippy::too_many_arguments)]
pub fn judge_win_rate(
    student: &ModelParams,
    reference: &ModelParams,
    teacher: &ModelParams,
    prompts: &[Vec<u32>],
    temperature: f64,
    max_len: usize,
    seed: u64,
) -> Result<f64> {
    if prompts.is_empty() {
        return Err(SodaError::InvalidInput("no prompts to judge".into()));
    }
    let mut wins = NeumaierSum::new();
    for (i, prompt) in prompts.iter().enumerate() {
        let pair_seed = derive_seed(seed, "judge", i as u64);
        let resp_student = student.sample_response(prompt, temperature, max_len, pair_seed)?;
        let resp_reference = reference.sample_response(prompt, temperature, max_len, pair_seed)?;
        let lp_student = teacher.logprob_sequence(&SequenceExample::new(
            prompt.clone(),
            resp_student,
            ResponseSource::BaseStudent,
        )?)?;
        let lp_reference = teacher.logprob_sequence(&SequenceExample::new(
            prompt.clone(),
            resp_reference,
            ResponseSource::Teacher,
        )?)?;
        wins.add(if lp_student > lp_reference {
            1.0
        } else if lp_student < lp_reference {
            0.0
        } else {
            0.5
        });
    }
    Ok(100.0 * wins.value() / prompts.len() as f64)
}

/// One run's oracle scores, as aggregated across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub kl_to_teacher: f64,
    pub judge_score: f64,
    pub n_prompts: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub median: f64,
    pub mean: f64,
    pub iqr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub kl: StatSummary,
    pub judge_score: StatSummary,
    pub n_results: usize,
}

/// Median, mean, and interquartile range per metric across runs.
pub fn aggregate_runs(results: &[EvalResult]) -> Result<EvalSummary> {
    if results.is_empty() {
        return Err(SodaError::InvalidInput("no results to aggregate".into()));
    }
    let kls: Vec<f64> = results.iter().map(|r| r.kl_to_teacher).collect();
    let judges: Vec<f64> = results.iter().map(|r| r.judge_score).collect();
    Ok(EvalSummary {
        kl: summarize(&kls),
        judge_score: summarize(&judges),
        n_results: results.len(),
    })
}

fn summarize(values: &[f64]) -> StatSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
    StatSummary {
        median: quantile(&sorted, 0.5),
        mean: crate::numerics::compensated_mean(values),
        iqr: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
    }
}

/// Linear-interpolation quantile (the h = (n-1)p convention) on sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Standard per-run evaluation: KL and judge score on the in-distribution
/// and held-out prompt sets, with the judge referencing the teacher sampler.
/// Exact KL is used whenever the budget allows, Monte Carlo otherwise.
pub fn standard_eval(
    student: &ModelParams,
    teacher_params: &ModelParams,
    prompts_in: &[Vec<u32>],
    prompts_heldout: &[Vec<u32>],
    cfg: &TrainConfig,
) -> Result<Vec<EvalRow>> {
    let exact_ok = student.is_tabular()
        && teacher_params.is_tabular()
        && student.vocab().size() <= EXACT_MAX_VOCAB
        && cfg.max_len <= EXACT_MAX_LEN;
    let mut rows = Vec::with_capacity(2);
    for (split, prompts) in [("in_dist", prompts_in), ("heldout", prompts_heldout)] {
        let mode = if exact_ok {
            KlMode::Exact
        } else {
            KlMode::MonteCarlo {
                samples_per_prompt: 16,
                seed: derive_seed(cfg.seed, "mc_eval", 0),
            }
        };
        let kl = kl_to_teacher(student, teacher_params, prompts, cfg.max_len, mode)?;
        let judge = judge_win_rate(
            student,
            teacher_params,
            teacher_params,
            prompts,
            cfg.sample_temperature,
            cfg.max_len,
            derive_seed(cfg.seed, "judge_eval", 0),
        )?;
        rows.push(EvalRow {
            split: split.to_string(),
            kl_to_teacher: kl.mean,
            kl_std_err: kl.std_err,
            judge_score: judge,
            n_prompts: prompts.len(),
        });
    }
    Ok(rows)
}
