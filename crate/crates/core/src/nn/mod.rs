//! Minimal network substrate: MLPs, losses, Adam, normalization and
//! gradient checking.

mod adam;
pub mod gradcheck;
pub mod loss;
mod mlp;
mod norm;
pub mod snapshot;

pub use adam::Adam;
pub use loss::{gaussian_nll, mse, NllOutput};
pub use mlp::{
    nonzero_count, Activation, Backprop, FinalActivation, LayerShape, Mlp, MlpSpec, Tape,
};
pub use norm::{layer_norm, RunningMoments, LAYER_NORM_EPS};
pub use snapshot::{MlpSnapshot, SNAPSHOT_VERSION};
