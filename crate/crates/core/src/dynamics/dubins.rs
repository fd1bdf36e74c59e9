use super::state::{UgvAction, UgvState};
use super::DynamicsModel;
use crate::error::Result;

/// Explicit Euler unicycle step with raw (unclamped) velocities.
pub fn unicycle_step(s: &UgvState, v: f64, omega: f64, dt: f64) -> UgvState {
    UgvState::new(
        s.x + v * s.theta.cos() * dt,
        s.y + v * s.theta.sin() * dt,
        s.theta + omega * dt,
    )
}

pub fn dubins_step(s: &UgvState, a: &UgvAction, dt: f64) -> UgvState {
    unicycle_step(s, a.v(), a.omega(), dt)
}

/// The analytic vehicle model used as ground truth and as the physics
/// baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dubins {
    pub dt: f64,
}

impl Dubins {
    pub fn new(dt: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        Self { dt }
    }
}

impl DynamicsModel for Dubins {
    fn predict(&self, s: &UgvState, a: &UgvAction) -> Result<UgvState> {
        Ok(dubins_step(s, a, self.dt))
    }
}
