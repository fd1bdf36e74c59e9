//! Streaming single-sample updates for the probabilistic ensemble:
//! eligibility traces, running observation/target scaling and a
//! backtracking bound on the per-sample loss increase.
//!
//! The trace accumulates the per-member NLL gradient of the current
//! transition; Adam turns the trace into a proposed step, which is then
//! halved until the loss on the current sample rises by at most
//! `kappa_factor * |loss before|`.

use num_traits::Num;
use serde::{Deserialize, Serialize};

use super::ensemble::{model_input, EnsembleModel, DELTA_DIM, INPUT_DIM};
use super::state::{state_diff, Transition};
use crate::error::{check_len, Error, Result};
use crate::nn::RunningMoments;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamXConfig {
    pub gamma_lambda: f64,
    pub shrink: f64,
    pub max_shrinks: usize,
    /// Bound on the loss increase as a multiple of the pre-update loss
    /// magnitude. `f64::INFINITY` disables backtracking.
    pub kappa_factor: f64,
    pub eps_scale: f64,
}

impl Default for StreamXConfig {
    fn default() -> Self {
        Self {
            gamma_lambda: 0.9,
            shrink: 0.5,
            max_shrinks: 10,
            kappa_factor: 2.0,
            eps_scale: 1e-8,
        }
    }
}

impl StreamXConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma_lambda) {
            return Err(Error::Config(format!(
                "gamma_lambda must lie in [0, 1), got {}",
                self.gamma_lambda
            )));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Config("shrink factor must lie in (0, 1)".into()));
        }
        if !(self.kappa_factor >= 0.0) || !(self.eps_scale > 0.0) {
            return Err(Error::Config(
                "kappa_factor must be >= 0 and eps_scale > 0".into(),
            ));
        }
        Ok(())
    }
}

/// `z' = gamma_lambda * z + grad`, in place. Generic so it can be checked
/// in exact arithmetic.
pub fn streamx_trace_update<T: Num + Clone>(z: &mut [T], gamma_lambda: T, grad: &[T]) -> Result<()> {
    check_len("eligibility trace", z.len(), grad.len())?;
    for (zi, g) in z.iter_mut().zip(grad) {
        *zi = gamma_lambda.clone() * zi.clone() + g.clone();
    }
    Ok(())
}

/// `(x - mean) / max(std, eps)` under the running moments.
pub fn streamx_scaled(x: &[f64], moments: &RunningMoments, eps: f64) -> Result<Vec<f64>> {
    moments.scale(x, eps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamXState {
    pub config: StreamXConfig,
    traces: Vec<Vec<f64>>,
    obs: RunningMoments,
    target: RunningMoments,
    /// Step-size multiplier accepted on the last update, per member.
    last_step: Vec<f64>,
    underflows: u64,
}

/// Outcome of one streaming update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StreamXUpdate {
    /// Number of halvings applied per member.
    pub shrinks: Vec<usize>,
    /// Members whose step was abandoned after the maximum number of halvings.
    pub rejected: Vec<usize>,
    pub loss_before: f64,
}

impl StreamXState {
    /// Fresh state whose running moments start from the model's training
    /// normalization, so the pretrained members see the same scaling.
    pub fn new(model: &EnsembleModel, config: StreamXConfig) -> Result<Self> {
        config.validate()?;
        if !model.uses_layer_norm() {
            return Err(Error::Config(
                "stream-x updates need members built with layer normalization".into(),
            ));
        }
        let norm = model.normalizer().ok_or_else(|| {
            Error::Contract("ensemble normalization statistics are not populated".into())
        })?;
        let count = model.train_samples().max(1);
        let sq = |v: &[f64]| v.iter().map(|s| s * s).collect::<Vec<_>>();
        Ok(Self {
            traces: model
                .members()
                .iter()
                .map(|m| vec![0.0; m.num_params()])
                .collect(),
            obs: RunningMoments::from_stats(count, &norm.input_mean, &sq(&norm.input_std)),
            target: RunningMoments::from_stats(count, &norm.output_mean, &sq(&norm.output_std)),
            last_step: vec![1.0; model.members().len()],
            underflows: 0,
            config,
        })
    }

    pub fn traces(&self) -> &[Vec<f64>] {
        &self.traces
    }

    pub fn observation_moments(&self) -> &RunningMoments {
        &self.obs
    }

    pub fn target_moments(&self) -> &RunningMoments {
        &self.target
    }

    pub fn last_step(&self) -> &[f64] {
        &self.last_step
    }

    pub fn underflows(&self) -> u64 {
        self.underflows
    }

    /// Scaled `(input, target)` pair after folding the transition into the
    /// running moments.
    fn observe(&mut self, t: &Transition) -> Result<([f64; INPUT_DIM], [f64; DELTA_DIM])> {
        let raw_x = model_input(&t.s, &t.a);
        let raw_y = state_diff(&t.s_next, &t.s);
        self.obs.update(&raw_x)?;
        self.target.update(&raw_y)?;
        let x = streamx_scaled(&raw_x, &self.obs, self.config.eps_scale)?;
        let y = streamx_scaled(&raw_y, &self.target, self.config.eps_scale)?;
        let mut xa = [0.0; INPUT_DIM];
        let mut ya = [0.0; DELTA_DIM];
        xa.copy_from_slice(&x);
        ya.copy_from_slice(&y);
        Ok((xa, ya))
    }

    /// One streaming update of every member on a single transition.
    pub fn update(&mut self, model: &mut EnsembleModel, t: &Transition) -> Result<StreamXUpdate> {
        if !t.is_finite() {
            return Err(Error::NonFinite("stream-x transition".into()));
        }
        check_len("stream-x traces", model.members().len(), self.traces.len())?;
        let (x, y) = self.observe(t)?;
        let cfg = self.config.clone();
        let k = model.members().len();
        let mut report = StreamXUpdate {
            shrinks: vec![0; k],
            ..Default::default()
        };
        let mut total = 0.0;
        for i in 0..k {
            let (loss0, grad) = EnsembleModel::member_nll_grad(&model.members()[i], &x, &y)?;
            total += loss0;
            if grad.iter().any(|g| !g.is_finite()) {
                report.rejected.push(i);
                continue;
            }
            streamx_trace_update(&mut self.traces[i], cfg.gamma_lambda, &grad)?;
            let proposal = match model.optimizers_mut()[i].update(&self.traces[i]) {
                Ok(d) => d,
                Err(Error::NonFinite(_)) => {
                    report.rejected.push(i);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let kappa = cfg.kappa_factor * loss0.abs();
            let base = model.members()[i].params().to_vec();
            let mut alpha = 1.0;
            let mut accepted = false;
            for attempt in 0..=cfg.max_shrinks {
                let member = &mut model.members_mut()[i];
                for ((p, &b), &d) in member.params_mut().iter_mut().zip(&base).zip(&proposal) {
                    *p = b + alpha * d;
                }
                let loss1 = EnsembleModel::member_nll(member, &x, &y)?;
                if loss1.is_finite() && (kappa.is_infinite() || loss1 - loss0 <= kappa) {
                    report.shrinks[i] = attempt;
                    accepted = true;
                    break;
                }
                if attempt < cfg.max_shrinks {
                    alpha *= cfg.shrink;
                }
            }
            if accepted {
                self.last_step[i] = alpha;
            } else {
                model.members_mut()[i].params_mut().copy_from_slice(&base);
                report.shrinks[i] = cfg.max_shrinks;
                report.rejected.push(i);
                self.underflows += 1;
            }
        }
        report.loss_before = total / k as f64;
        Ok(report)
    }
}
