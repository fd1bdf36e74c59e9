use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

/// Linear velocity bound (m/s).
pub const V_MAX: f64 = 1.0;
/// Angular velocity bound (rad/s).
pub const OMEGA_MAX: f64 = FRAC_PI_2;
/// Control period of the bundled tasks, seconds.
pub const DEFAULT_DT: f64 = 0.75;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Planar pose of the ground vehicle. `theta` is kept in `(-pi, pi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UgvState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl UgvState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    /// `self ⊞ delta`: adds the position delta and wraps the heading.
    pub fn apply_delta(&self, delta: &[f64; 3]) -> Self {
        Self::new(self.x + delta[0], self.y + delta[1], self.theta + delta[2])
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        (self.x - p[0]).hypot(self.y - p[1])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// `a ⊖ b`: componentwise difference with the heading wrapped to the
/// shortest signed arc.
pub fn state_diff(a: &UgvState, b: &UgvState) -> [f64; 3] {
    [a.x - b.x, a.y - b.y, wrap_angle(a.theta - b.theta)]
}

pub fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Heading encoding fed to learned models. Position is left out because the
/// vehicle dynamics are translation invariant.
pub fn state_features(s: &UgvState) -> [f64; 2] {
    [s.theta.cos(), s.theta.sin()]
}

/// Velocity command, clamped into `[-V_MAX, V_MAX] x [-OMEGA_MAX, OMEGA_MAX]`
/// on construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawAction", into = "RawAction")]
pub struct UgvAction {
    v: f64,
    omega: f64,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct RawAction {
    v: f64,
    omega: f64,
}

impl From<RawAction> for UgvAction {
    fn from(r: RawAction) -> Self {
        UgvAction::new(r.v, r.omega)
    }
}

impl From<UgvAction> for RawAction {
    fn from(a: UgvAction) -> Self {
        RawAction {
            v: a.v,
            omega: a.omega,
        }
    }
}

impl UgvAction {
    pub fn new(v: f64, omega: f64) -> Self {
        Self {
            v: clamp_finite(v, V_MAX),
            omega: clamp_finite(omega, OMEGA_MAX),
        }
    }

    pub fn zero() -> Self {
        Self { v: 0.0, omega: 0.0 }
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.v, self.omega]
    }

    /// Components divided by their bounds, so each lies in `[-1, 1]`.
    pub fn normalized(&self) -> [f64; 2] {
        [self.v / V_MAX, self.omega / OMEGA_MAX]
    }

    pub fn from_normalized(n: [f64; 2]) -> Self {
        Self::new(n[0] * V_MAX, n[1] * OMEGA_MAX)
    }
}

fn clamp_finite(x: f64, bound: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-bound, bound)
    }
}

/// One observed step `(s, a, s')`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: UgvState,
    pub a: UgvAction,
    pub s_next: UgvState,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.s.is_finite()
            && self.s_next.is_finite()
            && self.a.v.is_finite()
            && self.a.omega.is_finite()
    }
}
