//! Action flow matching: counterfactual data, the flow model that maps
//! planned actions to corrected ones, and the misalignment monitor that
//! decides when to apply it.

mod dataset;
mod model;
mod monitor;

pub use dataset::{generate_dataset, uniform_action, uniform_state, CounterfactualSample, Pairing};
pub use model::{
    train_afm, AfmArch, AfmDocument, AfmGrads, AfmModel, AfmTrainConfig, AfmTrainReport,
    ACTION_DIM, AFM_FORMAT, ERROR_DIM,
};
pub use monitor::MisalignmentMonitor;

/// Midpoint steps used by the action transform.
pub const DEFAULT_ODE_STEPS: usize = 10;
