//! Small numerical kernels: stable softmax-family functions, compensated
//! summation, and the seed fan-out hash used for per-item determinism.

use crate::error::{Result, SodaError};

/// log(sigmoid(z)) computed without overflow for large |z|.
pub fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

/// sigmoid(z) = 1 / (1 + exp(-z)).
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// softplus(z) = log(1 + exp(z)), stable for |z| > 30.
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

/// In-place log-softmax of a logit row. Errors if the row is not finite.
pub fn log_softmax(row: &mut [f64]) -> Result<()> {
    let mut max = f64::NEG_INFINITY;
    for v in row.iter() {
        if !v.is_finite() {
            return Err(SodaError::Numerical(
                "non-finite logits in softmax row".into(),
            ));
        }
        if *v > max {
            max = *v;
        }
    }
    if !max.is_finite() {
        return Err(SodaError::Numerical("empty softmax row".into()));
    }
    let mut sum = NeumaierSum::new();
    for v in row.iter() {
        sum.add((v - max).exp());
    }
    let log_z = sum.value().ln() + max;
    for v in row.iter_mut() {
        *v -= log_z;
    }
    Ok(())
}

/// Softmax probabilities of a logit row.
pub fn softmax(row: &[f64]) -> Result<Vec<f64>> {
    let mut out = row.to_vec();
    log_softmax(&mut out)?;
    for v in &mut out {
        *v = v.exp();
    }
    Ok(out)
}

/// Neumaier compensated summation. Reduction order changes the result by far
/// less than 1e-12, which the batch-evaluation contract relies on.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of a slice.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut s = NeumaierSum::new();
    for &v in values {
        s.add(v);
    }
    s.value()
}

/// Compensated mean of a slice.
pub fn compensated_mean(values: &[f64]) -> f64 {
    compensated_sum(values) / values.len() as f64
}

/// Deterministic seed fan-out: splitmix64 over the master seed, an FNV-1a
/// hash of the stage label, and the item index. Stages and items are thereby
/// independently reproducible from the master seed alone.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(splitmix64(master ^ h) ^ index)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Standard normal draw via Box-Muller on the seeded stream.
pub fn standard_normal(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    use rand::Rng;
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
