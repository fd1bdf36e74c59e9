//! Ground-truth simulator, waypoint tracks and the continual-learning
//! episode loop.

mod episode;
mod scenario;
mod track;

pub use episode::{run_episode, CostWeights, EpisodeConfig, EpisodeModels, EpisodeResult, Method};
pub use scenario::{
    active_gains, env_step, regime_switch_steps, waypoint_check, Scenario, TABLE_GAINS,
};
pub use track::{TrackMap, BUNDLED_TRACKS, TRACK_FORMAT, TRACK_VERSION};
