use std::fmt::Write as _;

use afm_core::sim::Method;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::records::{sort_records, EpisodeRecord};

pub const SUMMARY_HEADER: &str =
    "method,map,v_gain,omega_gain,success_mean,success_std,steps_mean,steps_std";
pub const OVERALL_HEADER: &str = "method,cells,success_mean,steps_mean";

/// Mean and sample (n - 1) standard deviation; the deviation of a single
/// value is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub map: String,
    pub v_gain: f64,
    pub omega_gain: f64,
    pub seeds: usize,
    pub success_mean: f64,
    pub success_std: f64,
    pub steps_mean: f64,
    pub steps_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverallRow {
    pub method: Method,
    pub cells: usize,
    pub success_mean: f64,
    pub steps_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub overall: Vec<OverallRow>,
    /// Cells left out because they failed.
    pub failed: usize,
}

impl Summary {
    pub fn overall_for(&self, method: Method) -> Option<&OverallRow> {
        self.overall.iter().find(|r| r.method == method)
    }

    pub fn row(&self, method: Method, map: &str, gains: (f64, f64)) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.map == map && (r.v_gain, r.omega_gain) == gains)
    }
}

/// Groups successful records by (method, map, gains) and by method.
pub fn aggregate(records: &[EpisodeRecord]) -> Result<Summary> {
    let mut ok: Vec<EpisodeRecord> = records.iter().filter(|r| r.is_ok()).cloned().collect();
    if ok.is_empty() {
        return Err(BenchError::Empty);
    }
    let failed = records.len() - ok.len();
    sort_records(&mut ok);

    let mut rows = Vec::new();
    for group in ok.chunk_by(|a, b| {
        a.method == b.method && a.map == b.map && a.scenario.gains() == b.scenario.gains()
    }) {
        let success: Vec<f64> = group.iter().map(|r| r.success_rate).collect();
        let steps: Vec<f64> = group.iter().map(|r| r.steps as f64).collect();
        let (success_mean, success_std) = mean_std(&success);
        let (steps_mean, steps_std) = mean_std(&steps);
        let first = &group[0];
        rows.push(SummaryRow {
            method: first.method,
            map: first.map.clone(),
            v_gain: first.scenario.v_gain,
            omega_gain: first.scenario.omega_gain,
            seeds: group.len(),
            success_mean,
            success_std,
            steps_mean,
            steps_std,
        });
    }

    let overall = ok
        .chunk_by(|a, b| a.method == b.method)
        .map(|group| {
            let n = group.len() as f64;
            OverallRow {
                method: group[0].method,
                cells: group.len(),
                success_mean: group.iter().map(|r| r.success_rate).sum::<f64>() / n,
                steps_mean: group.iter().map(|r| r.steps as f64).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(Summary {
        rows,
        overall,
        failed,
    })
}

pub fn summary_csv(summary: &Summary) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in &summary.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.map,
            r.v_gain,
            r.omega_gain,
            r.success_mean,
            r.success_std,
            r.steps_mean,
            r.steps_std
        );
    }
    out
}

pub fn overall_csv(summary: &Summary) -> String {
    let mut out = String::from(OVERALL_HEADER);
    out.push('\n');
    for r in &summary.overall {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.method, r.cells, r.success_mean, r.steps_mean
        );
    }
    out
}
