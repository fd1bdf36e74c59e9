//! Action flow matching for online dynamics-model realignment.
//!
//! The crate holds the numeric substrate ([`nn`], [`ode`]), the vehicle
//! dynamics models ([`dynamics`]), the sampling planner ([`planner`]), the
//! flow model that corrects planned actions ([`afm`]) and the simulator that
//! ties them together in a continual-learning loop ([`sim`]).

pub mod afm;
pub mod dynamics;
pub mod error;
pub mod nn;
pub mod ode;
pub mod planner;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision network.
pub type Mlp = nn::Mlp<f64>;
/// Double-precision Adam state.
pub type Adam = nn::Adam<f64>;
/// Double-precision network snapshot.
pub type MlpSnapshot = nn::MlpSnapshot<f64>;
