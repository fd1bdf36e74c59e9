//! Vehicle state types and every dynamics model used by the planner.

mod dubins;
pub mod ensemble;
mod state;
pub mod streamx;

pub use dubins::{dubins_step, unicycle_step, Dubins};
pub use ensemble::{
    pe_init_train, EnsembleModel, InitTrainConfig, MemberArch, Normalizer, OnlineUpdate,
    TrainReport, DEFAULT_ONLINE_LR,
};
pub use state::{
    norm3, state_diff, state_features, wrap_angle, Transition, UgvAction, UgvState, DEFAULT_DT,
    OMEGA_MAX, V_MAX,
};
pub use streamx::{StreamXConfig, StreamXState, StreamXUpdate};

use crate::error::{check_len, Result};

/// One-step forward model `s' = f(s, a)`.
pub trait DynamicsModel {
    fn predict(&self, s: &UgvState, a: &UgvAction) -> Result<UgvState>;

    fn predict_batch(&self, states: &[UgvState], actions: &[UgvAction]) -> Result<Vec<UgvState>> {
        check_len("batch actions", states.len(), actions.len())?;
        states
            .iter()
            .zip(actions)
            .map(|(s, a)| self.predict(s, a))
            .collect()
    }
}
