use serde::{Deserialize, Serialize};

use crate::dynamics::{unicycle_step, UgvAction, UgvState};
use crate::error::{Error, Result};

/// Control gains applied by the simulator inside a progress window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub v_gain: f64,
    pub omega_gain: f64,
    #[serde(default = "default_onset")]
    pub onset_fraction: f64,
    #[serde(default = "default_revert")]
    pub revert_fraction: f64,
}

fn default_onset() -> f64 {
    0.15
}

fn default_revert() -> f64 {
    0.80
}

/// The eleven gain pairs of the benchmark tables, in table order.
pub const TABLE_GAINS: [(f64, f64); 11] = [
    (-1.0, 2.0),
    (-2.5, 1.0),
    (2.5, 0.05),
    (1.0, -1.0),
    (1.0, -0.5),
    (-1.0, 1.0),
    (-0.5, 1.0),
    (2.0, 2.0),
    (-1.0, -1.0),
    (0.1, -1.5),
    (-0.5, 0.5),
];

impl Scenario {
    pub fn new(v_gain: f64, omega_gain: f64) -> Self {
        Self {
            v_gain,
            omega_gain,
            onset_fraction: default_onset(),
            revert_fraction: default_revert(),
        }
    }

    pub fn nominal() -> Self {
        Self::new(1.0, 1.0)
    }

    pub fn table() -> Vec<Scenario> {
        TABLE_GAINS
            .iter()
            .map(|&(v, w)| Scenario::new(v, w))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_gain.is_finite() && self.omega_gain.is_finite()) {
            return Err(Error::Config("scenario gains must be finite".into()));
        }
        if !(0.0 <= self.onset_fraction
            && self.onset_fraction < self.revert_fraction
            && self.revert_fraction <= 1.0)
        {
            return Err(Error::Config(format!(
                "need 0 <= onset < revert <= 1, got {} and {}",
                self.onset_fraction, self.revert_fraction
            )));
        }
        Ok(())
    }

    pub fn gains(&self) -> (f64, f64) {
        (self.v_gain, self.omega_gain)
    }
}

/// Gains in force given waypoint progress: the scenario's inside
/// `[onset, revert)`, nominal outside.
pub fn active_gains(scenario: &Scenario, reached: usize, total: usize) -> (f64, f64) {
    let progress = reached as f64 / total as f64;
    if progress < scenario.onset_fraction || progress >= scenario.revert_fraction {
        (1.0, 1.0)
    } else {
        scenario.gains()
    }
}

/// Steps at which the gains switched on and back off, given the step index
/// at which each waypoint was reached. `None` for a switch never reached.
pub fn regime_switch_steps(
    scenario: &Scenario,
    waypoint_steps: &[usize],
    total: usize,
) -> (Option<usize>, Option<usize>) {
    let nominal = |k: usize| active_gains(scenario, k, total) == (1.0, 1.0);
    let step_of = |k: usize| {
        if k == 0 {
            Some(0)
        } else {
            waypoint_steps.get(k - 1).copied()
        }
    };
    let Some(k_on) = (0..=total).find(|&k| !nominal(k)) else {
        return (None, None);
    };
    let k_off = (k_on..=total).find(|&k| nominal(k));
    (step_of(k_on), k_off.and_then(step_of))
}

/// True simulator step: the commanded action scaled by the gains, with no
/// re-clamping, integrated by the vehicle model.
pub fn env_step(s: &UgvState, a_cmd: &UgvAction, gains: (f64, f64), dt: f64) -> UgvState {
    unicycle_step(s, gains.0 * a_cmd.v(), gains.1 * a_cmd.omega(), dt)
}

pub fn waypoint_check(s: &UgvState, wp: [f64; 2], radius: f64) -> bool {
    s.distance_to(wp) <= radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::dubins_step;

    #[test]
    fn switch_steps() {
        let sc = Scenario::new(-1.0, 2.0);
        let steps: Vec<usize> = (1..=20).map(|k| 10 * k).collect();
        assert_eq!(regime_switch_steps(&sc, &steps, 20), (Some(30), Some(160)));
        assert_eq!(regime_switch_steps(&sc, &steps[..5], 20), (Some(30), None));
        assert_eq!(regime_switch_steps(&sc, &steps[..2], 20), (None, None));
        assert_eq!(
            regime_switch_steps(&Scenario::nominal(), &steps, 20),
            (None, None)
        );
        let from_start = Scenario {
            onset_fraction: 0.0,
            ..sc
        };
        assert_eq!(regime_switch_steps(&from_start, &steps, 20).0, Some(0));
    }

    #[test]
    fn gain_window() {
        let sc = Scenario::new(-1.0, 2.0);
        assert_eq!(active_gains(&sc, 0, 20), (1.0, 1.0));
        assert_eq!(active_gains(&sc, 2, 20), (1.0, 1.0));
        assert_eq!(active_gains(&sc, 3, 20), (-1.0, 2.0));
        assert_eq!(active_gains(&sc, 10, 20), (-1.0, 2.0));
        assert_eq!(active_gains(&sc, 15, 20), (-1.0, 2.0));
        assert_eq!(active_gains(&sc, 16, 20), (1.0, 1.0));
        assert_eq!(active_gains(&sc, 20, 20), (1.0, 1.0));
        assert_eq!(active_gains(&sc, 4, 5), (1.0, 1.0));
    }

    #[test]
    fn env_step_examples() {
        let s = UgvState::new(0.3, -0.2, 0.7);
        let a = UgvAction::new(0.8, -0.6);
        assert_eq!(env_step(&s, &a, (1.0, 1.0), 0.1), dubins_step(&s, &a, 0.1));
        let back = env_step(
            &UgvState::origin(),
            &UgvAction::new(1.0, 0.0),
            (-1.0, 1.0),
            0.1,
        );
        assert!(back.x < 0.0);
        let fast = env_step(
            &UgvState::origin(),
            &UgvAction::new(1.0, 0.0),
            (2.0, 1.0),
            0.1,
        );
        assert!((fast.x - 0.2).abs() < 1e-15);
        // gains push past the nominal bound
        let far = env_step(
            &UgvState::origin(),
            &UgvAction::new(1.0, 0.0),
            (2.5, 1.0),
            1.0,
        );
        assert_eq!(far.x, 2.5);
    }

    #[test]
    fn reach_boundary_inclusive() {
        let s = UgvState::new(1.0, 0.0, 0.0);
        assert!(waypoint_check(&s, [1.0, 0.0], 0.5));
        assert!(waypoint_check(&s, [1.5, 0.0], 0.5));
        assert!(!waypoint_check(&s, [1.5 + 1e-9, 0.0], 0.5));
    }

    #[test]
    fn table_and_validation() {
        assert_eq!(Scenario::table().len(), 11);
        assert!(Scenario::new(1.0, 1.0).validate().is_ok());
        let mut bad = Scenario::new(1.0, 1.0);
        bad.onset_fraction = 0.9;
        assert!(bad.validate().is_err());
    }
}
