//! Counterfactual transitions: the next state is produced by one action
//! but registered under another.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{state_diff, DynamicsModel, UgvAction, UgvState, OMEGA_MAX, V_MAX};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualSample {
    pub s: UgvState,
    /// Planned action, registered as the cause of `s_next`.
    pub a0: UgvAction,
    /// Action that actually produced `s_next`.
    pub a1: UgvAction,
    pub s_next: UgvState,
    /// `f0(s, a1) ⊖ f0(s, a0)`.
    pub e: [f64; 3],
}

/// How the intended action is chosen relative to the planned one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum Pairing {
    /// Planned and intended actions drawn independently.
    #[default]
    Independent,
    /// `a1 = (gv * v0, gw * omega0)`, clamped to the action bounds.
    Gains { v: f64, omega: f64 },
}

impl Pairing {
    pub const IDENTITY: Pairing = Pairing::Gains { v: 1.0, omega: 1.0 };

    fn intended<R: Rng + ?Sized>(&self, a0: &UgvAction, rng: &mut R) -> UgvAction {
        match *self {
            Pairing::Independent => uniform_action(rng),
            Pairing::Gains { v, omega } => UgvAction::new(v * a0.v(), omega * a0.omega()),
        }
    }
}

pub fn uniform_action<R: Rng + ?Sized>(rng: &mut R) -> UgvAction {
    UgvAction::new(
        rng.random_range(-V_MAX..=V_MAX),
        rng.random_range(-OMEGA_MAX..=OMEGA_MAX),
    )
}

/// Uniform heading at the origin; position is irrelevant to the dynamics.
pub fn uniform_state<R: Rng + ?Sized>(rng: &mut R) -> UgvState {
    UgvState::new(
        0.0,
        0.0,
        rng.random_range(-std::f64::consts::PI..=std::f64::consts::PI),
    )
}

/// Draws `n` counterfactual samples, evaluating both actions under `f0` in
/// one batch.
pub fn generate_dataset<M, R>(
    f0: &M,
    n: usize,
    pairing: Pairing,
    rng: &mut R,
) -> Result<Vec<CounterfactualSample>>
where
    M: DynamicsModel + ?Sized,
    R: Rng + ?Sized,
{
    let mut states = Vec::with_capacity(2 * n);
    let mut actions = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let s = uniform_state(rng);
        let a0 = uniform_action(rng);
        let a1 = pairing.intended(&a0, rng);
        states.extend([s, s]);
        actions.extend([a1, a0]);
    }
    let next = f0.predict_batch(&states, &actions)?;
    Ok((0..n)
        .map(|i| {
            let (via_a1, via_a0) = (next[2 * i], next[2 * i + 1]);
            CounterfactualSample {
                s: states[2 * i],
                a0: actions[2 * i + 1],
                a1: actions[2 * i],
                s_next: via_a1,
                e: state_diff(&via_a1, &via_a0),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Dubins;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_pairing_has_zero_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = generate_dataset(&Dubins::new(1.0), 50, Pairing::IDENTITY, &mut rng).unwrap();
        assert!(data.iter().all(|d| d.e == [0.0; 3] && d.a0 == d.a1));
    }

    #[test]
    fn stored_error_is_recomputable() {
        let f0 = Dubins::new(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = generate_dataset(&f0, 1000, Pairing::Independent, &mut rng).unwrap();
        assert_eq!(data.len(), 1000);
        for d in &data {
            let e = state_diff(
                &f0.predict(&d.s, &d.a1).unwrap(),
                &f0.predict(&d.s, &d.a0).unwrap(),
            );
            assert_eq!(e, d.e);
            assert_eq!(d.s_next, f0.predict(&d.s, &d.a1).unwrap());
            for a in [d.a0, d.a1] {
                assert!(a.v().abs() <= V_MAX && a.omega().abs() <= OMEGA_MAX);
            }
        }
    }

    #[test]
    fn empty_request_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(
            generate_dataset(&Dubins::new(1.0), 0, Pairing::Independent, &mut rng)
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn gain_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = generate_dataset(
            &Dubins::new(1.0),
            20,
            Pairing::Gains {
                v: -1.0,
                omega: 1.0,
            },
            &mut rng,
        )
        .unwrap();
        for d in data {
            assert_eq!(d.a1.v(), -d.a0.v());
            assert_eq!(d.a1.omega(), d.a0.omega());
        }
    }
}
