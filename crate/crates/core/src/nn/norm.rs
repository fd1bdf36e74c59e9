//! Parameter-free layer normalization and streaming moment estimates.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::scalar::Real;

/// Stabilizer added to the variance before taking the square root.
pub const LAYER_NORM_EPS: f64 = 1e-8;

/// Normalizes `x` to zero mean and unit variance. No learned affine.
pub fn layer_norm<T: Real>(x: &[T]) -> Vec<T> {
    let mut y = x.to_vec();
    layer_norm_into(&mut y);
    y
}

/// In-place layer normalization; returns `1 / sqrt(var + eps)`.
pub(crate) fn layer_norm_into<T: Real>(x: &mut [T]) -> T {
    let n = T::lit(x.len() as f64);
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let inv_std = T::one() / (var + T::lit(LAYER_NORM_EPS)).sqrt();
    for v in x.iter_mut() {
        *v = (*v - mean) * inv_std;
    }
    inv_std
}

/// Turns the gradient w.r.t. the normalized output `y` into the gradient
/// w.r.t. the input, in place:
/// `dx = inv_std * (dy - mean(dy) - y * mean(dy * y))`.
pub(crate) fn layer_norm_backward_into<T: Real>(grad: &mut [T], y: &[T], inv_std: T) {
    let n = T::lit(grad.len() as f64);
    let mean_g = grad.iter().copied().sum::<T>() / n;
    let mean_gy = grad.iter().zip(y).map(|(&g, &yv)| g * yv).sum::<T>() / n;
    for (g, &yv) in grad.iter_mut().zip(y) {
        *g = inv_std * (*g - mean_g - yv * mean_gy);
    }
}

/// Welford running mean and variance over vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningMoments {
    count: u64,
    mean: Vec<f64>,
    /// Sum of squared deviations from the running mean.
    m2: Vec<f64>,
}

impl RunningMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    /// Moments that behave as if `count` samples with the given mean and
    /// population variance had already been observed.
    pub fn from_stats(count: u64, mean: &[f64], variance: &[f64]) -> Self {
        Self {
            count,
            mean: mean.to_vec(),
            m2: variance.iter().map(|v| v * count as f64).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        check_len("running moments sample", self.mean.len(), x.len())?;
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
        Ok(())
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Population variance (divides by n); zero before any sample.
    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.mean.len()];
        }
        self.m2
            .iter()
            .map(|s| (s / self.count as f64).max(0.0))
            .collect()
    }

    /// Unbiased sample variance (divides by n - 1); zero below two samples.
    pub fn sample_variance(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        self.m2
            .iter()
            .map(|s| (s / (self.count - 1) as f64).max(0.0))
            .collect()
    }

    pub fn std(&self) -> Vec<f64> {
        self.variance().into_iter().map(f64::sqrt).collect()
    }

    /// `(x - mean) / max(std, floor)` componentwise.
    pub fn scale(&self, x: &[f64], floor: f64) -> Result<Vec<f64>> {
        check_len("running moments scale", self.mean.len(), x.len())?;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(self.std())
            .map(|((&v, &m), s)| (v - m) / s.max(floor))
            .collect())
    }
}
