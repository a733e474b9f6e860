//! Flat gradient vectors aligned with a model's parameter layout.

use crate::error::{Result, SodaError};
use crate::numerics::NeumaierSum;

/// A gradient (or any tangent vector) over a model's flattened parameters.
/// The coordinate order matches [`crate::model::ModelParams::flat`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    values: Vec<f64>,
}

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `self += scale * other`. Lengths must match.
    pub fn add_scaled(&mut self, other: &GradientVector, scale: f64) -> Result<()> {
        if self.len() != other.len() {
            return Err(SodaError::InvalidInput(format!(
                "gradient length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Euclidean norm with compensated accumulation.
    pub fn norm(&self) -> f64 {
        let mut s = NeumaierSum::new();
        for &v in &self.values {
            s.add(v * v);
        }
        s.value().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Mean of a non-empty collection of equally shaped gradients, reduced
    /// coordinate-wise with compensated summation so the reduction order is
    /// immaterial beyond 1e-12.
    pub fn mean(gradients: &[GradientVector]) -> Result<GradientVector> {
        let first = gradients
            .first()
            .ok_or_else(|| SodaError::InvalidInput("empty gradient batch".into()))?;
        let n = gradients.len() as f64;
        let mut out = vec![0.0; first.len()];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut s = NeumaierSum::new();
            for g in gradients {
                s.add(g.values[i]);
            }
            *slot = s.value() / n;
        }
        Ok(GradientVector::from_values(out))
    }
}
