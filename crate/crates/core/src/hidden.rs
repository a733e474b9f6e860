//! Last-token hidden-state extraction for representation analysis.

use crate::error::{Result, SodaError};
use crate::model::ModelParams;

/// An n x d matrix of last-token hidden states, one row per prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStateMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl HiddenStateMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(SodaError::InvalidInput(
                "hidden-state matrix needs at least 2 rows".into(),
            ));
        }
        let d = rows[0].len();
        let mut values = Vec::with_capacity(n * d);
        for row in &rows {
            if row.len() != d {
                return Err(SodaError::InvalidInput("ragged hidden-state rows".into()));
            }
            values.extend_from_slice(row);
        }
        if !values.iter().all(|x| x.is_finite()) {
            return Err(SodaError::Numerical(
                "hidden states contain non-finite values".into(),
            ));
        }
        Ok(Self { n, d, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column-centered copy (mean-zero per feature).
    pub fn centered(&self) -> HiddenStateMatrix {
        let mut means = vec![0.0; self.d];
        for i in 0..self.n {
            for (m, v) in means.iter_mut().zip(&self.values[i * self.d..(i + 1) * self.d]) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= self.n as f64;
        }
        let mut values = self.values.clone();
        for i in 0..self.n {
            for j in 0..self.d {
                values[i * self.d + j] -= means[j];
            }
        }
        HiddenStateMatrix {
            n: self.n,
            d: self.d,
            values,
        }
    }
}

/// Extracts the last-prompt-token hidden state per prompt at the given
/// observable layer. Transformer checkpoints only.
pub fn extract_hidden_states(
    params: &ModelParams,
    prompts: &[Vec<u32>],
    layer: usize,
) -> Result<HiddenStateMatrix> {
    let mut rows = Vec::with_capacity(prompts.len());
    for p in prompts {
        rows.push(params.last_token_hidden(p, layer)?);
    }
    HiddenStateMatrix::from_rows(rows)
}
