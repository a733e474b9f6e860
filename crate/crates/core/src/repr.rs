//! Representation diagnostics: layer-wise linear CKA between checkpoints,
//! activation entropy over a value histogram, and activation kurtosis.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SodaError};
use crate::hidden::{extract_hidden_states, HiddenStateMatrix};
use crate::model::{ModelParams, N_LAYERS};
use crate::numerics::NeumaierSum;

/// Histogram resolution for activation entropy.
pub const ENTROPY_BINS: usize = 100;

/// Diagnostics of one candidate checkpoint against the base model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReprReport {
    /// CKA to the base model per observable layer (embedding, attention,
    /// final).
    pub cka_to_base: Vec<f64>,
    pub last_layer_entropy: f64,
    pub last_layer_kurtosis: f64,
    /// Conventions recorded in every report: Pearson kurtosis (normal = 3)
    /// and entropy in nats over an equal-width histogram.
    pub kurtosis_convention: String,
    pub entropy_unit: String,
    pub n_bins: usize,
}

/// Linear CKA of two feature matrices sharing the row count:
/// `||X^T Y||_F^2 / (||X^T X||_F * ||Y^T Y||_F)` after centering each
/// column. Lands in [0, 1]; 1 means identical structure.
pub fn linear_cka(x: &HiddenStateMatrix, y: &HiddenStateMatrix) -> Result<f64> {
    if x.n() != y.n() {
        return Err(SodaError::InvalidInput(format!(
            "row counts differ: {} vs {}",
            x.n(),
            y.n()
        )));
    }
    let xc = x.centered();
    let yc = y.centered();
    let cross = gram_frobenius_sq(&xc, &yc);
    let norm_x = gram_frobenius_sq(&xc, &xc).sqrt();
    let norm_y = gram_frobenius_sq(&yc, &yc).sqrt();
    if norm_x == 0.0 || norm_y == 0.0 {
        return Err(SodaError::DegenerateInput(
            "zero-norm matrix after centering".into(),
        ));
    }
    Ok(cross / (norm_x * norm_y))
}

/// `||A^T B||_F^2` for row-major matrices with equal row counts.
fn gram_frobenius_sq(a: &HiddenStateMatrix, b: &HiddenStateMatrix) -> f64 {
    let n = a.n();
    let mut total = NeumaierSum::new();
    for i in 0..a.d() {
        for j in 0..b.d() {
            let mut entry = NeumaierSum::new();
            for r in 0..n {
                entry.add(a.row(r)[i] * b.row(r)[j]);
            }
            let e = entry.value();
            total.add(e * e);
        }
    }
    total.value()
}

/// Shannon entropy in nats of the value histogram: `n_bins` equal-width bins
/// over the observed min-max range, empty bins contributing zero.
pub fn activation_entropy(values: &[f64], n_bins: usize) -> Result<f64> {
    if n_bins < 2 {
        return Err(SodaError::InvalidConfig("need at least 2 bins".into()));
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(SodaError::DegenerateInput(
            "activation values must be finite".into(),
        ));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if values.len() < 2 || min == max {
        return Err(SodaError::DegenerateInput(
            "need at least 2 distinct values for a histogram".into(),
        ));
    }
    let width = max - min;
    let mut counts = vec![0u64; n_bins];
    for &v in values {
        let idx = (((v - min) / width) * n_bins as f64) as usize;
        counts[idx.min(n_bins - 1)] += 1;
    }
    let total = values.len() as f64;
    let mut h = NeumaierSum::new();
    for &c in &counts {
        if c > 0 {
            let p = c as f64 / total;
            h.add(-p * p.ln());
        }
    }
    Ok(h.value())
}

/// Pearson kurtosis `m4 / m2^2` of the flattened values (normal reference 3).
pub fn activation_kurtosis(values: &[f64]) -> Result<f64> {
    if values.len() < 4 {
        return Err(SodaError::InvalidInput(
            "kurtosis needs at least 4 values".into(),
        ));
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(SodaError::DegenerateInput(
            "activation values must be finite".into(),
        ));
    }
    let mean = crate::numerics::compensated_mean(values);
    let mut m2 = NeumaierSum::new();
    let mut m4 = NeumaierSum::new();
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2.add(d2);
        m4.add(d2 * d2);
    }
    let n = values.len() as f64;
    let m2 = m2.value() / n;
    let m4 = m4.value() / n;
    if m2 == 0.0 {
        return Err(SodaError::DegenerateInput("zero variance".into()));
    }
    Ok(m4 / (m2 * m2))
}

/// Per-candidate representation diagnostics against a base checkpoint:
/// layer-wise CKA plus final-layer entropy and kurtosis. All models must be
/// transformers sharing the base architecture.
pub fn repr_report(
    base: &ModelParams,
    candidates: &[ModelParams],
    prompts: &[Vec<u32>],
) -> Result<Vec<ReprReport>> {
    if prompts.len() < 2 {
        return Err(SodaError::InvalidInput(
            "representation analysis needs at least 2 prompts".into(),
        ));
    }
    let base_arch = base.architecture();
    if base.is_tabular() {
        return Err(SodaError::UnsupportedArchitecture(
            "representation analysis requires the transformer architecture".into(),
        ));
    }
    let base_layers: Vec<HiddenStateMatrix> = (0..N_LAYERS)
        .map(|l| extract_hidden_states(base, prompts, l))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(candidates.len());
    for cand in candidates {
        if cand.architecture() != base_arch {
            return Err(SodaError::UnsupportedArchitecture(format!(
                "candidate architecture {} does not match base {}",
                cand.architecture(),
                base_arch
            )));
        }
        let mut cka = Vec::with_capacity(N_LAYERS);
        let mut final_states = None;
        for (layer, base_h) in base_layers.iter().enumerate() {
            let cand_h = extract_hidden_states(cand, prompts, layer)?;
            cka.push(linear_cka(base_h, &cand_h)?);
            if layer == N_LAYERS - 1 {
                final_states = Some(cand_h);
            }
        }
        let values = final_states.expect("final layer extracted").values().to_vec();
        out.push(ReprReport {
            cka_to_base: cka,
            last_layer_entropy: activation_entropy(&values, ENTROPY_BINS)?,
            last_layer_kurtosis: activation_kurtosis(&values)?,
            kurtosis_convention: "pearson (normal = 3)".to_string(),
            entropy_unit: "nats".to_string(),
            n_bins: ENTROPY_BINS,
        });
    }
    Ok(out)
}
