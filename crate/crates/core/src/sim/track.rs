//! Waypoint tracks.
//!
//! File format (JSON, meters and radians):
//!
//! ```json
//! {
//!   "format": "afm.track",
//!   "version": 1,
//!   "name": "oval",
//!   "reach_radius": 0.5,
//!   "start": [16.0, 0.0, 1.93],
//!   "waypoints": [[14.7, 3.5], [12.3, 6.3]]
//! }
//! ```
//!
//! `start` is optional; without it the vehicle starts on the first
//! waypoint facing the second, and that first waypoint counts as reached on
//! the first step.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::UgvState;
use crate::error::{Error, Result};

pub const TRACK_FORMAT: &str = "afm.track";
pub const TRACK_VERSION: u32 = 1;

const OVAL: &str = include_str!("../../tracks/oval.json");
const CHICANE: &str = include_str!("../../tracks/chicane.json");

/// Names of the tracks compiled into the crate.
pub const BUNDLED_TRACKS: [&str; 2] = ["oval", "chicane"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackMap {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub reach_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<[f64; 3]>,
    pub waypoints: Vec<[f64; 2]>,
}

impl TrackMap {
    pub fn new(
        name: &str,
        reach_radius: f64,
        start: Option<[f64; 3]>,
        waypoints: Vec<[f64; 2]>,
    ) -> Result<Self> {
        let map = Self {
            format: TRACK_FORMAT.to_string(),
            version: TRACK_VERSION,
            name: name.to_string(),
            reach_radius,
            start,
            waypoints,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("track `{}`: {m}", self.name)));
        if self.format != TRACK_FORMAT || self.version != TRACK_VERSION {
            return bad(format!(
                "expected format {TRACK_FORMAT} version {TRACK_VERSION}, found {} version {}",
                self.format, self.version
            ));
        }
        if self.waypoints.len() < 2 {
            return bad("needs at least 2 waypoints".into());
        }
        if !(self.reach_radius > 0.0) || !self.reach_radius.is_finite() {
            return bad(format!(
                "reach_radius must be positive, got {}",
                self.reach_radius
            ));
        }
        if self
            .waypoints
            .iter()
            .flatten()
            .chain(self.start.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return bad("coordinates must be finite".into());
        }
        if let Some(i) = self.waypoints.windows(2).position(|w| w[0] == w[1]) {
            return bad(format!("waypoints {i} and {} coincide", i + 1));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: Self = serde_json::from_str(text)?;
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn bundled(name: &str) -> Result<Self> {
        match name {
            "oval" => Self::from_json(OVAL),
            "chicane" => Self::from_json(CHICANE),
            other => Err(Error::Config(format!(
                "unknown bundled track `{other}` (available: {})",
                BUNDLED_TRACKS.join(", ")
            ))),
        }
    }

    pub fn start_state(&self) -> UgvState {
        match self.start {
            Some([x, y, theta]) => UgvState::new(x, y, theta),
            None => {
                let [a, b] = [self.waypoints[0], self.waypoints[1]];
                UgvState::new(a[0], a[1], (b[1] - a[1]).atan2(b[0] - a[0]))
            }
        }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }
}
