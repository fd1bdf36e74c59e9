//! Model predictive path integral (MPPI) planning over velocity commands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsModel, UgvAction, UgvState, OMEGA_MAX, V_MAX};
use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MppiConfig {
    pub population: usize,
    pub horizon: usize,
    /// Softmin temperature.
    pub temperature: f64,
    /// Exploration noise std per action dimension, as a fraction of the
    /// dimension's half-range.
    pub noise_sigma: [f64; 2],
    /// Weight of the new weighted average against the previous nominal.
    pub smoothing: f64,
    /// Symmetric bounds `(v, omega)` for sampled actions.
    pub action_bounds: [f64; 2],
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self {
            population: 1000,
            horizon: 15,
            temperature: 0.9,
            noise_sigma: [0.4, 0.4],
            smoothing: 0.6,
            action_bounds: [V_MAX, OMEGA_MAX],
        }
    }
}

impl MppiConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.population == 0 || self.horizon == 0 {
            return bad("population and horizon must be at least 1".into());
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return bad(format!(
                "temperature must be positive, got {}",
                self.temperature
            ));
        }
        if self
            .noise_sigma
            .iter()
            .any(|s| !(*s > 0.0) || !s.is_finite())
        {
            return bad(format!(
                "noise_sigma must be positive, got {:?}",
                self.noise_sigma
            ));
        }
        if !(0.0..=1.0).contains(&self.smoothing) {
            return bad(format!(
                "smoothing must lie in [0, 1], got {}",
                self.smoothing
            ));
        }
        let [v, w] = self.action_bounds;
        if !(v > 0.0 && v <= V_MAX && w > 0.0 && w <= OMEGA_MAX) {
            return bad(format!(
                "action bounds must lie in (0, ({V_MAX}, {OMEGA_MAX})], got {:?}",
                self.action_bounds
            ));
        }
        Ok(())
    }
}

/// Quadratic goal-reaching cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub goal: [f64; 2],
    pub w_dist: f64,
    pub w_ctrl: f64,
    pub w_term: f64,
}

impl CostSpec {
    pub fn new(goal: [f64; 2]) -> Self {
        Self {
            goal,
            w_dist: 1.0,
            w_ctrl: 0.05,
            w_term: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.w_dist, self.w_ctrl, self.w_term];
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || w.iter().all(|&x| x == 0.0) {
            return Err(Error::Config(format!(
                "cost weights must be finite, non-negative and not all zero, got {w:?}"
            )));
        }
        Ok(())
    }

    fn dist_sq(&self, s: &UgvState) -> f64 {
        (s.x - self.goal[0]).powi(2) + (s.y - self.goal[1]).powi(2)
    }

    pub fn running(&self, s: &UgvState, a: &UgvAction) -> f64 {
        self.w_dist * self.dist_sq(s) + self.w_ctrl * (a.v() * a.v() + a.omega() * a.omega())
    }

    pub fn terminal(&self, s: &UgvState) -> f64 {
        self.w_term * self.dist_sq(s)
    }
}

/// `sum_h running(s_h, a_h) + terminal(s_H)`.
pub fn trajectory_cost(states: &[UgvState], actions: &[UgvAction], cost: &CostSpec) -> Result<f64> {
    check_len("trajectory states", actions.len() + 1, states.len())?;
    let running: f64 = states
        .iter()
        .zip(actions)
        .map(|(s, a)| cost.running(s, a))
        .sum();
    Ok(running + cost.terminal(&states[actions.len()]))
}

/// `[s0, f(s0, a0), f(f(s0, a0), a1), ...]`.
pub fn rollout<M: DynamicsModel + ?Sized>(
    model: &M,
    s0: UgvState,
    actions: &[UgvAction],
) -> Result<Vec<UgvState>> {
    let mut states = Vec::with_capacity(actions.len() + 1);
    states.push(s0);
    for a in actions {
        let next = model.predict(states.last().expect("non-empty"), a)?;
        states.push(next);
    }
    Ok(states)
}

/// Nominal action sequence of a receding-horizon plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub actions: Vec<UgvAction>,
}

impl Plan {
    pub fn zeros(horizon: usize) -> Self {
        Self {
            actions: vec![UgvAction::zero(); horizon],
        }
    }

    pub fn first_action(&self) -> UgvAction {
        self.actions
            .first()
            .copied()
            .unwrap_or_else(UgvAction::zero)
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
}

/// Drops the first action and repeats the last one.
pub fn shift_nominal(plan: &Plan) -> Plan {
    let mut actions: Vec<UgvAction> = plan.actions.iter().skip(1).copied().collect();
    if let Some(&last) = plan.actions.last() {
        actions.push(last);
    }
    Plan { actions }
}

/// Weights `exp(-(J_i - min J) / temperature)`, normalized. Non-finite costs
/// get zero weight; `None` when no cost is finite.
pub fn softmin_weights(costs: &[f64], temperature: f64) -> Option<Vec<f64>> {
    let min = costs
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let mut w: Vec<f64> = costs
        .iter()
        .map(|&c| {
            if c.is_finite() {
                (-(c - min) / temperature).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    Some(w)
}

/// Result of one planning call with the diagnostics the tests and the
/// episode loop need.
#[derive(Clone, Debug, PartialEq)]
pub struct MppiOutcome {
    pub plan: Plan,
    /// Cost of the shifted nominal the samples were drawn around.
    pub nominal_cost: f64,
    /// Softmin-weighted mean of the sample costs.
    pub weighted_cost: f64,
    pub min_cost: f64,
    /// Every sample cost was non-finite and the shifted nominal was kept.
    pub fallback: bool,
}

/// One MPPI iteration around the shifted previous nominal.
///
/// Each rollout draws its noise from its own ChaCha stream keyed by a base
/// seed taken from `rng` and the rollout index, so results do not depend on
/// evaluation order.
pub fn mppi_plan<M, R>(
    model: &M,
    s: &UgvState,
    cost: &CostSpec,
    previous: &Plan,
    cfg: &MppiConfig,
    rng: &mut R,
) -> Result<MppiOutcome>
where
    M: DynamicsModel + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    check_len("previous plan horizon", cfg.horizon, previous.horizon())?;
    let nominal = shift_nominal(previous);
    let h_len = cfg.horizon;
    let p = cfg.population;
    let base_seed: u64 = rng.random();
    let std = [
        cfg.noise_sigma[0] * cfg.action_bounds[0],
        cfg.noise_sigma[1] * cfg.action_bounds[1],
    ];

    // row p is the noise-free nominal
    let rows = p + 1;
    let mut samples: Vec<UgvAction> = Vec::with_capacity(rows * h_len);
    for i in 0..p {
        let mut stream = ChaCha8Rng::seed_from_u64(base_seed);
        stream.set_stream(i as u64);
        for a in &nominal.actions {
            let nv: f64 = StandardNormal.sample(&mut stream);
            let nw: f64 = StandardNormal.sample(&mut stream);
            let v = (a.v() + std[0] * nv).clamp(-cfg.action_bounds[0], cfg.action_bounds[0]);
            let w = (a.omega() + std[1] * nw).clamp(-cfg.action_bounds[1], cfg.action_bounds[1]);
            samples.push(UgvAction::new(v, w));
        }
    }
    samples.extend_from_slice(&nominal.actions);

    let mut states = vec![*s; rows];
    let mut costs = vec![0.0; rows];
    let mut step_actions = Vec::with_capacity(rows);
    for h in 0..h_len {
        step_actions.clear();
        step_actions.extend((0..rows).map(|r| samples[r * h_len + h]));
        for ((c, st), a) in costs.iter_mut().zip(&states).zip(&step_actions) {
            *c += cost.running(st, a);
        }
        states = model.predict_batch(&states, &step_actions)?;
    }
    for (c, st) in costs.iter_mut().zip(&states) {
        *c += cost.terminal(st);
        if !c.is_finite() {
            *c = f64::INFINITY;
        }
    }
    let nominal_cost = costs[p];
    let sample_costs = &costs[..p];

    let Some(weights) = softmin_weights(sample_costs, cfg.temperature) else {
        return Ok(MppiOutcome {
            plan: nominal,
            nominal_cost,
            weighted_cost: f64::INFINITY,
            min_cost: f64::INFINITY,
            fallback: true,
        });
    };
    let weighted_cost = weights
        .iter()
        .zip(sample_costs)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, c)| w * c)
        .sum();
    let min_cost = sample_costs.iter().copied().fold(f64::INFINITY, f64::min);

    let beta = cfg.smoothing;
    let mut actions = Vec::with_capacity(h_len);
    for h in 0..h_len {
        let (mut v, mut w) = (0.0, 0.0);
        for (i, &wt) in weights.iter().enumerate() {
            if wt > 0.0 {
                let a = samples[i * h_len + h];
                v += wt * a.v();
                w += wt * a.omega();
            }
        }
        let prev = nominal.actions[h];
        actions.push(UgvAction::new(
            (beta * v + (1.0 - beta) * prev.v()).clamp(-cfg.action_bounds[0], cfg.action_bounds[0]),
            (beta * w + (1.0 - beta) * prev.omega())
                .clamp(-cfg.action_bounds[1], cfg.action_bounds[1]),
        ));
    }
    Ok(MppiOutcome {
        plan: Plan { actions },
        nominal_cost,
        weighted_cost,
        min_cost,
        fallback: false,
    })
}
