//! Plain gradient descent with a cosine-decayed step size.

use crate::error::{Result, SodaError};
use crate::gradient::GradientVector;
use crate::model::ModelParams;

/// `lr(t) = base * 0.5 * (1 + cos(pi * t / total))` for t in `0..total`.
#[derive(Debug, Clone, Copy)]
pub struct CosineSchedule {
    base_lr: f64,
    total_steps: usize,
}

impl CosineSchedule {
    pub fn new(base_lr: f64, total_steps: usize) -> Result<Self> {
        if base_lr <= 0.0 || !base_lr.is_finite() {
            return Err(SodaError::InvalidConfig(format!(
                "learning rate must be positive, got {base_lr}"
            )));
        }
        Ok(Self {
            base_lr,
            total_steps: total_steps.max(1),
        })
    }

    pub fn lr(&self, step: usize) -> f64 {
        let frac = (step as f64 / self.total_steps as f64).min(1.0);
        self.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

/// Single-writer descent loop state. Momentum is off by default.
#[derive(Debug, Clone)]
pub struct GdOptimizer {
    schedule: CosineSchedule,
    momentum: f64,
    velocity: Option<GradientVector>,
    step_idx: usize,
}

impl GdOptimizer {
    pub fn new(schedule: CosineSchedule) -> Self {
        Self {
            schedule,
            momentum: 0.0,
            velocity: None,
            step_idx: 0,
        }
    }

    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = momentum;
        self
    }

    pub fn steps_taken(&self) -> usize {
        self.step_idx
    }

    /// Applies one update, returning the learning rate that was used.
    pub fn step(&mut self, params: &mut ModelParams, grad: &GradientVector) -> Result<f64> {
        if !grad.is_finite() {
            return Err(SodaError::Numerical("non-finite gradient".into()));
        }
        let lr = self.schedule.lr(self.step_idx);
        if self.momentum > 0.0 {
            let velocity = match &mut self.velocity {
                Some(v) => {
                    v.scale(self.momentum);
                    v.add_scaled(grad, 1.0)?;
                    v.clone()
                }
                None => {
                    self.velocity = Some(grad.clone());
                    grad.clone()
                }
            };
            params.apply_gradient_step(&velocity, lr)?;
        } else {
            params.apply_gradient_step(grad, lr)?;
        }
        self.step_idx += 1;
        Ok(lr)
    }
}
