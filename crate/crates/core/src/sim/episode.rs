//! The non-episodic waypoint task: plan, optionally correct, act, learn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{active_gains, env_step, waypoint_check, Scenario};
use super::track::TrackMap;
use crate::afm::{AfmModel, MisalignmentMonitor, DEFAULT_ODE_STEPS};
use crate::dynamics::{
    norm3, state_diff, Dubins, DynamicsModel, EnsembleModel, StreamXConfig, StreamXState,
    Transition, UgvState, DEFAULT_DT, DEFAULT_ONLINE_LR,
};
use crate::error::{Error, Result};
use crate::planner::{mppi_plan, CostSpec, MppiConfig, Plan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "AFM")]
    Afm,
    #[serde(rename = "AFM_DR")]
    AfmDr,
    OnlinePE,
    FrozenPE,
    StreamxPE,
    Physics,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Afm,
        Method::AfmDr,
        Method::OnlinePE,
        Method::FrozenPE,
        Method::StreamxPE,
        Method::Physics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Afm => "AFM",
            Method::AfmDr => "AFM_DR",
            Method::OnlinePE => "OnlinePE",
            Method::FrozenPE => "FrozenPE",
            Method::StreamxPE => "StreamxPE",
            Method::Physics => "Physics",
        }
    }

    pub fn uses_afm(self) -> bool {
        matches!(self, Method::Afm | Method::AfmDr)
    }

    pub fn uses_ensemble(self) -> bool {
        self != Method::Physics
    }

    pub fn learns_online(self) -> bool {
        matches!(
            self,
            Method::Afm | Method::AfmDr | Method::OnlinePE | Method::StreamxPE
        )
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub method: Method,
    pub max_steps: usize,
    pub delta_m: f64,
    pub map: TrackMap,
    pub scenario: Scenario,
    pub seed: u64,
    pub dt: f64,
    pub mppi: MppiConfig,
    pub cost: CostWeights,
    pub ode_steps: usize,
    pub regime_error_refresh: bool,
    pub online_lr: f64,
    pub streamx: StreamXConfig,
    pub record_trajectory: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub distance: f64,
    pub control: f64,
    pub terminal: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            distance: 1.0,
            control: 0.05,
            terminal: 10.0,
        }
    }
}

impl CostWeights {
    pub fn spec(&self, goal: [f64; 2]) -> CostSpec {
        CostSpec {
            goal,
            w_dist: self.distance,
            w_ctrl: self.control,
            w_term: self.terminal,
        }
    }
}

impl EpisodeConfig {
    pub fn new(method: Method, map: TrackMap, scenario: Scenario, seed: u64) -> Self {
        Self {
            method,
            max_steps: 5000,
            delta_m: 1.0,
            map,
            scenario,
            seed,
            dt: DEFAULT_DT,
            mppi: MppiConfig::default(),
            cost: CostWeights::default(),
            ode_steps: DEFAULT_ODE_STEPS,
            regime_error_refresh: false,
            online_lr: DEFAULT_ONLINE_LR,
            streamx: StreamXConfig::default(),
            record_trajectory: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if !(self.dt > 0.0)
            || !(self.delta_m >= 0.0)
            || self.ode_steps == 0
            || !(self.online_lr > 0.0)
        {
            return Err(Error::Config(
                "dt, online_lr and ode_steps must be positive, delta_m non-negative".into(),
            ));
        }
        self.map.validate()?;
        self.scenario.validate()?;
        self.mppi.validate()?;
        self.cost.spec([0.0, 0.0]).validate()?;
        self.streamx.validate()
    }
}

/// Models an episode starts from. Each episode works on its own copies.
#[derive(Clone, Debug, Default)]
pub struct EpisodeModels {
    pub ensemble: Option<EnsembleModel>,
    pub afm: Option<AfmModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success_rate: f64,
    pub steps: usize,
    pub reached: usize,
    pub total: usize,
    /// `‖s' ⊖ f(s, a_exec)‖` per step under the model before its update.
    pub losses: Vec<f64>,
    pub flags: Vec<bool>,
    /// Step count at which each reached waypoint was reached.
    pub waypoint_steps: Vec<usize>,
    /// Number of steps that executed a transformed action.
    pub transformed_steps: usize,
    pub skipped_updates: u64,
    pub planner_fallbacks: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<UgvState>,
}

impl EpisodeResult {
    pub fn completed(&self) -> bool {
        self.reached == self.total
    }
}

enum Learner {
    Physics(Dubins),
    Ensemble {
        model: EnsembleModel,
        streamx: Option<StreamXState>,
    },
}

impl Learner {
    fn model(&self) -> &dyn DynamicsModel {
        match self {
            Learner::Physics(d) => d,
            Learner::Ensemble { model, .. } => model,
        }
    }
}

/// Runs one task to completion or until the step budget is spent.
pub fn run_episode(cfg: &EpisodeConfig, models: &EpisodeModels) -> Result<EpisodeResult> {
    cfg.validate()?;
    let method = cfg.method;
    let mut learner = if method.uses_ensemble() {
        let mut model = models.ensemble.clone().ok_or_else(|| {
            Error::Config(format!("method {method} needs a dynamics-model snapshot"))
        })?;
        if (model.dt() - cfg.dt).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "dynamics snapshot was trained with dt = {}, episode uses dt = {}",
                model.dt(),
                cfg.dt
            )));
        }
        model.set_online_lr(cfg.online_lr);
        let streamx = if method == Method::StreamxPE {
            Some(StreamXState::new(&model, cfg.streamx.clone())?)
        } else {
            None
        };
        Learner::Ensemble { model, streamx }
    } else {
        Learner::Physics(Dubins::new(cfg.dt))
    };
    let afm =
        if method.uses_afm() {
            Some(models.afm.clone().ok_or_else(|| {
                Error::Config(format!("method {method} needs a flow-model snapshot"))
            })?)
        } else {
            None
        };

    let total = cfg.map.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut monitor = MisalignmentMonitor::new(cfg.delta_m).with_refresh(cfg.regime_error_refresh);
    let mut plan = Plan::zeros(cfg.mppi.horizon);
    let mut s = cfg.map.start_state();
    let mut reached = 0;
    let mut result = EpisodeResult {
        success_rate: 0.0,
        steps: 0,
        reached: 0,
        total,
        losses: Vec::new(),
        flags: Vec::new(),
        waypoint_steps: Vec::new(),
        transformed_steps: 0,
        skipped_updates: 0,
        planner_fallbacks: 0,
        trajectory: Vec::new(),
    };
    if cfg.record_trajectory {
        result.trajectory.push(s);
    }

    while reached < total && result.steps < cfg.max_steps {
        let cost = cfg.cost.spec(cfg.map.waypoints[reached]);
        let outcome = mppi_plan(learner.model(), &s, &cost, &plan, &cfg.mppi, &mut rng)?;
        result.planner_fallbacks += usize::from(outcome.fallback);
        plan = outcome.plan;
        let a0 = plan.first_action();

        let a_exec = match (&afm, monitor.regime_error()) {
            (Some(flow), Some(e)) => {
                result.transformed_steps += 1;
                flow.transform_action(&s, &a0, &e, cfg.ode_steps)?
            }
            _ => a0,
        };

        let gains = active_gains(&cfg.scenario, reached, total);
        let s_next = env_step(&s, &a_exec, gains, cfg.dt);
        if !s_next.is_finite() {
            return Err(Error::NonFinite(format!(
                "simulator state at step {}",
                result.steps
            )));
        }

        let model = learner.model();
        let predicted_exec = model.predict(&s, &a_exec)?;
        result
            .losses
            .push(norm3(&state_diff(&s_next, &predicted_exec)));
        let predicted_plan = if a_exec == a0 {
            predicted_exec
        } else {
            model.predict(&s, &a0)?
        };
        monitor.step(&predicted_plan, &s_next);
        result.flags.push(monitor.flag());

        if let Learner::Ensemble { model, streamx } = &mut learner {
            let t = Transition {
                s,
                a: a_exec,
                s_next,
            };
            match (method, streamx) {
                (Method::StreamxPE, Some(state)) => {
                    let r = state.update(model, &t)?;
                    result.skipped_updates += r.rejected.len() as u64;
                }
                _ if method.learns_online() => {
                    let r = model.online_update(&t)?;
                    result.skipped_updates += r.skipped_members.len() as u64;
                }
                _ => {}
            }
        }

        s = s_next;
        result.steps += 1;
        if cfg.record_trajectory {
            result.trajectory.push(s);
        }
        while reached < total
            && waypoint_check(&s, cfg.map.waypoints[reached], cfg.map.reach_radius)
        {
            reached += 1;
            result.waypoint_steps.push(result.steps);
        }
    }
    result.reached = reached;
    result.success_rate = reached as f64 / total as f64;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_track() -> TrackMap {
        TrackMap::new(
            "line",
            0.5,
            Some([0.0, 0.0, 0.0]),
            vec![[3.0, 0.0], [6.0, 0.5], [9.0, 0.0]],
        )
        .unwrap()
    }

    fn physics_cfg(map: TrackMap, scenario: Scenario) -> EpisodeConfig {
        let mut cfg = EpisodeConfig::new(Method::Physics, map, scenario, 1);
        cfg.max_steps = 200;
        cfg.mppi.population = 128;
        cfg.mppi.horizon = 8;
        cfg
    }

    #[test]
    fn physics_completes_nominal_line() {
        let cfg = physics_cfg(line_track(), Scenario::nominal());
        let r = run_episode(&cfg, &EpisodeModels::default()).unwrap();
        assert_eq!(r.success_rate, 1.0);
        assert!(r.steps < 60, "{} steps", r.steps);
        assert!(r.losses.iter().all(|&l| l == 0.0));
        assert_eq!(r.trajectory.len(), r.steps + 1);
        assert_eq!(r.waypoint_steps.len(), 3);
    }

    #[test]
    fn budget_exhaustion() {
        let mut cfg = physics_cfg(line_track(), Scenario::nominal());
        cfg.max_steps = 3;
        let r = run_episode(&cfg, &EpisodeModels::default()).unwrap();
        assert_eq!(r.steps, 3);
        assert!(!r.completed());
        assert_eq!(r.success_rate * 3.0, r.reached as f64);
    }

    #[test]
    fn missing_snapshot_is_a_config_error() {
        let mut cfg = physics_cfg(line_track(), Scenario::nominal());
        cfg.method = Method::OnlinePE;
        assert!(matches!(
            run_episode(&cfg, &EpisodeModels::default()),
            Err(Error::Config(_))
        ));
        cfg.method = Method::Afm;
        assert!(matches!(
            run_episode(&cfg, &EpisodeModels::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = physics_cfg(line_track(), Scenario::new(-1.0, 1.0));
        let a = run_episode(&cfg, &EpisodeModels::default()).unwrap();
        let b = run_episode(&cfg, &EpisodeModels::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(
                serde_json::to_string(&m).unwrap(),
                format!("\"{}\"", m.name())
            );
        }
        assert!("Oracle".parse::<Method>().is_err());
    }
}
