//! Central finite-difference verification of analytic gradients.

use crate::error::{Result, SodaError};
use crate::gradient::GradientVector;
use crate::model::ModelParams;

/// Outcome of a finite-difference sweep over every parameter coordinate.
#[derive(Debug, Clone)]
pub struct FiniteDifferenceReport {
    pub n_params: usize,
    pub max_rel_error: f64,
    /// Coordinates whose relative error exceeded the tolerance.
    pub failing_indices: Vec<usize>,
    pub tolerance: f64,
}

impl FiniteDifferenceReport {
    pub fn passed(&self) -> bool {
        self.failing_indices.is_empty()
    }
}

/// Compares `analytic_grad` against central differences of `loss_fn` at
/// `params`. Relative error per coordinate uses a 1e-6 floor so unused
/// coordinates with zero gradient compare cleanly.
pub fn finite_difference_check<F>(
    loss_fn: F,
    params: &ModelParams,
    analytic_grad: &GradientVector,
    h: f64,
    tolerance: f64,
) -> Result<FiniteDifferenceReport>
where
    F: Fn(&ModelParams) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(SodaError::InvalidConfig(format!(
            "finite-difference step must lie in [1e-7, 1e-3], got {h}"
        )));
    }
    if analytic_grad.len() != params.param_count() {
        return Err(SodaError::InvalidInput(
            "gradient length does not match parameter count".into(),
        ));
    }
    let flat = params.flat();
    let mut probe = params.clone();
    let mut max_rel_error: f64 = 0.0;
    let mut failing = Vec::new();
    let mut perturbed = flat.clone();
    for i in 0..flat.len() {
        perturbed[i] = flat[i] + h;
        probe.set_flat(&perturbed)?;
        let plus = loss_fn(&probe)?;
        perturbed[i] = flat[i] - h;
        probe.set_flat(&perturbed)?;
        let minus = loss_fn(&probe)?;
        perturbed[i] = flat[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(SodaError::Numerical(format!(
                "loss became non-finite while perturbing coordinate {i}"
            )));
        }
        let fd = (plus - minus) / (2.0 * h);
        let a = analytic_grad.as_slice()[i];
        let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-6);
        if rel > max_rel_error {
            max_rel_error = rel;
        }
        if rel > tolerance {
            failing.push(i);
        }
    }
    Ok(FiniteDifferenceReport {
        n_params: flat.len(),
        max_rel_error,
        failing_indices: failing,
        tolerance,
    })
}
