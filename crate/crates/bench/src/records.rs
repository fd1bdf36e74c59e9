use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use afm_core::sim::{regime_switch_steps, EpisodeResult, Method, Scenario};
use serde::{Deserialize, Serialize};

use crate::config::{Cell, SuiteConfig};
use crate::error::{io_err, BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// Outcome of one (method, map, scenario, seed) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub method: Method,
    pub map: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub success_rate: f64,
    pub steps: usize,
    pub reached: usize,
    pub total: usize,
    pub transformed_steps: usize,
    pub flagged_steps: usize,
    pub skipped_updates: u64,
    pub planner_fallbacks: usize,
    pub waypoint_steps: Vec<usize>,
    pub onset_step: Option<usize>,
    pub revert_step: Option<usize>,
    pub losses: Vec<f64>,
}

impl EpisodeRecord {
    pub fn from_result(cell: &Cell, map_name: &str, r: &EpisodeResult) -> Self {
        let (onset_step, revert_step) =
            regime_switch_steps(&cell.scenario, &r.waypoint_steps, r.total);
        Self {
            method: cell.method,
            map: map_name.to_string(),
            scenario: cell.scenario,
            seed: cell.seed,
            status: CellStatus::Ok,
            error: None,
            success_rate: r.success_rate,
            steps: r.steps,
            reached: r.reached,
            total: r.total,
            transformed_steps: r.transformed_steps,
            flagged_steps: r.flags.iter().filter(|&&f| f).count(),
            skipped_updates: r.skipped_updates,
            planner_fallbacks: r.planner_fallbacks,
            waypoint_steps: r.waypoint_steps.clone(),
            onset_step,
            revert_step,
            losses: r.losses.clone(),
        }
    }

    pub fn failed(cell: &Cell, map_name: &str, error: String) -> Self {
        Self {
            method: cell.method,
            map: map_name.to_string(),
            scenario: cell.scenario,
            seed: cell.seed,
            status: CellStatus::Failed,
            error: Some(error),
            success_rate: 0.0,
            steps: 0,
            reached: 0,
            total: 0,
            transformed_steps: 0,
            flagged_steps: 0,
            skipped_updates: 0,
            planner_fallbacks: 0,
            waypoint_steps: Vec::new(),
            onset_step: None,
            revert_step: None,
            losses: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }

    /// Grid coordinates used for ordering and lookup.
    pub fn key(&self) -> (String, String, [u64; 2], u64) {
        (
            self.method.to_string(),
            self.map.clone(),
            [
                self.scenario.v_gain.to_bits(),
                self.scenario.omega_gain.to_bits(),
            ],
            self.seed,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteMetadata {
    pub config_hash: String,
    pub code_version: String,
    pub started: String,
    pub finished: String,
    pub jobs: usize,
    pub cells: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteResults {
    pub metadata: SuiteMetadata,
    pub config: SuiteConfig,
    pub records: Vec<EpisodeRecord>,
}

impl SuiteResults {
    pub fn failed(&self) -> usize {
        self.records.iter().filter(|r| !r.is_ok()).count()
    }
}

/// Orders records by grid coordinates, independent of completion order.
pub fn sort_records(records: &mut [EpisodeRecord]) {
    records.sort_by(|a, b| {
        (
            a.method,
            &a.map,
            a.scenario.v_gain,
            a.scenario.omega_gain,
            a.seed,
        )
            .partial_cmp(&(
                b.method,
                &b.map,
                b.scenario.v_gain,
                b.scenario.omega_gain,
                b.seed,
            ))
            .expect("gains are finite")
    });
}

pub fn record_line(record: &EpisodeRecord) -> Result<String> {
    Ok(serde_json::to_string(record)?)
}

/// Appends one record per line, flushing after each so an interrupted suite
/// keeps everything written so far.
pub struct RecordWriter {
    file: std::fs::File,
    path: std::path::PathBuf,
}

impl RecordWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(io_err(path))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, record: &EpisodeRecord) -> Result<()> {
        let mut line = record_line(record)?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .map_err(io_err(&self.path))?;
        self.file.flush().map_err(io_err(&self.path))
    }
}

pub fn write_records(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    let mut w = RecordWriter::create(path)?;
    for r in records {
        w.append(r)?;
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| BenchError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}
