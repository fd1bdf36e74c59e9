use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

/// Adam optimizer state for one flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Adam<T> {
    /// PyTorch defaults: betas (0.9, 0.999), eps 1e-8.
    pub fn new(num_params: usize, lr: T) -> Self {
        Self::with_hyper(num_params, lr, T::lit(0.9), T::lit(0.999), T::lit(1e-8))
    }

    pub fn with_hyper(num_params: usize, lr: T, beta1: T, beta2: T, eps: T) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: vec![T::zero(); num_params],
            v: vec![T::zero(); num_params],
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Advances the moment estimates with `grads` and returns the
    /// bias-corrected update to add to the parameters. A non-finite gradient
    /// leaves the state untouched.
    pub fn update(&mut self, grads: &[T]) -> Result<Vec<T>> {
        check_len("adam gradient", self.m.len(), grads.len())?;
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i}")));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        let step = self.lr / c1;
        let c2_sqrt = c2.sqrt();
        let mut delta = Vec::with_capacity(grads.len());
        for ((m, v), &g) in self.m.iter_mut().zip(&mut self.v).zip(grads) {
            *m = self.beta1 * *m + (T::one() - self.beta1) * g;
            *v = self.beta2 * *v + (T::one() - self.beta2) * g * g;
            delta.push(-step * *m / (v.sqrt() / c2_sqrt + self.eps));
        }
        Ok(delta)
    }

    /// One optimizer step applied in place.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        check_len("adam parameters", self.m.len(), params.len())?;
        let delta = self.update(grads)?;
        for (p, d) in params.iter_mut().zip(delta) {
            *p = *p + d;
        }
        Ok(())
    }
}
