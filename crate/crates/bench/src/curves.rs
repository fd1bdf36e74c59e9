use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use afm_core::sim::{Method, Scenario};

use crate::error::{io_err, Result};
use crate::records::{sort_records, EpisodeRecord};

pub const CURVE_HEADER: &str = "step,mean_loss,smoothed_loss,transition_marker";
pub const DEFAULT_WINDOW: usize = 20;

/// Trailing-window mean; the first `window - 1` entries average over the
/// prefix available so far.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..xs.len())
        .map(|i| {
            let win = &xs[(i + 1).saturating_sub(w)..=i];
            win.iter().sum::<f64>() / win.len() as f64
        })
        .collect()
}

/// Per-step mean over the traces that reach that step.
pub fn mean_trace(traces: &[&[f64]]) -> Vec<f64> {
    let len = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let vals: Vec<f64> = traces.iter().filter_map(|t| t.get(i).copied()).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossCurve {
    pub method: Method,
    pub map: String,
    pub scenario: Scenario,
    pub mean_loss: Vec<f64>,
    pub smoothed_loss: Vec<f64>,
    /// Mean step of the intervention onset and reversion over seeds that
    /// reached them, rounded to the nearest step.
    pub onset_step: Option<usize>,
    pub revert_step: Option<usize>,
}

fn mean_step(steps: impl Iterator<Item = Option<usize>>) -> Option<usize> {
    let v: Vec<f64> = steps.flatten().map(|s| s as f64).collect();
    (!v.is_empty()).then(|| (v.iter().sum::<f64>() / v.len() as f64).round() as usize)
}

pub fn loss_curves(records: &[EpisodeRecord], window: usize) -> Vec<LossCurve> {
    let mut ok: Vec<EpisodeRecord> = records.iter().filter(|r| r.is_ok()).cloned().collect();
    sort_records(&mut ok);
    ok.chunk_by(|a, b| {
        a.method == b.method && a.map == b.map && a.scenario.gains() == b.scenario.gains()
    })
    .map(|group| {
        let traces: Vec<&[f64]> = group.iter().map(|r| r.losses.as_slice()).collect();
        let mean_loss = mean_trace(&traces);
        LossCurve {
            method: group[0].method,
            map: group[0].map.clone(),
            scenario: group[0].scenario,
            smoothed_loss: moving_average(&mean_loss, window),
            mean_loss,
            onset_step: mean_step(group.iter().map(|r| r.onset_step)),
            revert_step: mean_step(group.iter().map(|r| r.revert_step)),
        }
    })
    .collect()
}

impl LossCurve {
    pub fn file_name(&self) -> String {
        format!(
            "{}_{}_v{}_w{}.csv",
            self.method, self.map, self.scenario.v_gain, self.scenario.omega_gain
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CURVE_HEADER);
        out.push('\n');
        for (i, (m, s)) in self.mean_loss.iter().zip(&self.smoothed_loss).enumerate() {
            let marker = if Some(i) == self.onset_step {
                "onset"
            } else if Some(i) == self.revert_step {
                "revert"
            } else {
                ""
            };
            let _ = writeln!(out, "{i},{m},{s},{marker}");
        }
        out
    }
}

/// Writes one CSV per (method, map, scenario) into `dir`.
pub fn export_loss_curves(
    records: &[EpisodeRecord],
    window: usize,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut paths = Vec::new();
    for curve in loss_curves(records, window) {
        let path = dir.join(curve.file_name());
        std::fs::write(&path, curve.to_csv()).map_err(io_err(&path))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_window_example() {
        assert_eq!(
            moving_average(&[0.0, 0.0, 10.0, 10.0], 2),
            vec![0.0, 0.0, 5.0, 10.0]
        );
        assert_eq!(moving_average(&[1.0, 2.0, 3.0], 1), vec![1.0, 2.0, 3.0]);
        assert!(moving_average(&[], 5).is_empty());
    }

    #[test]
    fn ragged_mean() {
        let a = [1.0, 2.0, 3.0];
        let b = [3.0];
        assert_eq!(mean_trace(&[&a, &b]), vec![2.0, 2.0, 3.0]);
    }
}
