use serde::{Deserialize, Serialize};

use crate::dynamics::{norm3, state_diff, UgvState};

/// Thresholded one-step prediction error and the regime error handed to the
/// action transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisalignmentMonitor {
    pub delta_m: f64,
    /// Feed the latest error to the transform on every flagged step instead
    /// of the one captured when the flag went up.
    pub refresh: bool,
    flag: bool,
    error: [f64; 3],
    frozen: Option<[f64; 3]>,
}

impl MisalignmentMonitor {
    pub fn new(delta_m: f64) -> Self {
        Self {
            delta_m,
            refresh: false,
            flag: false,
            error: [0.0; 3],
            frozen: None,
        }
    }

    pub fn with_refresh(mut self, refresh: bool) -> Self {
        self.refresh = refresh;
        self
    }

    pub fn flag(&self) -> bool {
        self.flag
    }

    /// Thresholded error of the last step: zero below `delta_m`.
    pub fn error(&self) -> [f64; 3] {
        self.error
    }

    pub fn frozen_error(&self) -> Option<[f64; 3]> {
        self.frozen
    }

    /// Error to condition the transform on, if the flag is up.
    pub fn regime_error(&self) -> Option<[f64; 3]> {
        match (self.flag, self.refresh) {
            (false, _) => None,
            (true, true) => Some(self.error),
            (true, false) => self.frozen,
        }
    }

    /// Compares the observed next state with the model's prediction for the
    /// planned action.
    pub fn step(&mut self, s_pred: &UgvState, s_real: &UgvState) {
        let diff = state_diff(s_real, s_pred);
        self.error = if norm3(&diff) < self.delta_m {
            [0.0; 3]
        } else {
            diff
        };
        let was = self.flag;
        self.flag = norm3(&self.error) > 0.0;
        match (was, self.flag) {
            (false, true) => self.frozen = Some(self.error),
            (true, false) => self.frozen = None,
            _ => {}
        }
    }
}
