use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use afm_core::afm::AfmModel;
use afm_core::dynamics::EnsembleModel;
use afm_core::sim::{run_episode, EpisodeModels, Method, TrackMap};

use crate::config::{required_artifacts, resolve_map, SuiteConfig};
use crate::error::{io_err, Result};
use crate::records::{
    sort_records, write_records, EpisodeRecord, RecordWriter, SuiteMetadata, SuiteResults,
};

pub const RECORDS_FILE: &str = "records.ndjson";
pub const RESULTS_FILE: &str = "results.json";

/// Loads the snapshots every method needs. A method whose snapshots cannot
/// be read maps to the error text; its cells are recorded as failed.
pub fn load_models(
    cfg: &SuiteConfig,
) -> BTreeMap<Method, std::result::Result<EpisodeModels, String>> {
    let mut out = BTreeMap::new();
    for &method in &cfg.methods {
        let (dyn_kind, flow_kind) = required_artifacts(method);
        let load = || -> std::result::Result<EpisodeModels, String> {
            let read = |kind: crate::config::ArtifactKind| {
                let path = cfg
                    .artifacts
                    .get(kind)
                    .ok_or_else(|| format!("no `{}` artifact configured", kind.key()))?;
                std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
            };
            let ensemble = match dyn_kind {
                Some(k) => Some(
                    EnsembleModel::from_json(&read(k)?).map_err(|e| format!("{}: {e}", k.key()))?,
                ),
                None => None,
            };
            let afm = match flow_kind {
                Some(k) => {
                    Some(AfmModel::from_json(&read(k)?).map_err(|e| format!("{}: {e}", k.key()))?)
                }
                None => None,
            };
            Ok(EpisodeModels { ensemble, afm })
        };
        out.insert(method, load());
    }
    out
}

/// Runs every cell of the grid on `jobs` worker threads. Records are passed
/// to `on_record` and, when `out_dir` is given, appended to
/// `records.ndjson` as they complete; the file is rewritten in grid order at
/// the end together with `results.json`.
pub fn run_suite(
    cfg: &SuiteConfig,
    jobs: usize,
    out_dir: Option<&Path>,
    mut on_record: impl FnMut(&EpisodeRecord, usize, usize),
) -> Result<SuiteResults> {
    cfg.validate()?;
    let started = chrono::Utc::now().to_rfc3339();
    let maps: BTreeMap<String, TrackMap> = cfg
        .maps
        .iter()
        .map(|m| resolve_map(m).map(|t| (m.clone(), t)))
        .collect::<Result<_>>()?;
    let models = load_models(cfg);
    let cells = cfg.cells();
    let n = cells.len();

    let mut writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            Some(RecordWriter::create(&dir.join(RECORDS_FILE))?)
        }
        None => None,
    };

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<EpisodeRecord>();
    let mut records = Vec::with_capacity(n);
    let mut write_error = None;
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(n.max(1)) {
            let tx = tx.clone();
            let (cells, maps, models, next) = (&cells, &maps, &models, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                let map = &maps[&cell.map];
                let record = match &models[&cell.method] {
                    Err(e) => EpisodeRecord::failed(cell, &map.name, e.clone()),
                    Ok(m) => {
                        let ep =
                            cfg.episode_config(cell.method, map.clone(), cell.scenario, cell.seed);
                        match run_episode(&ep, m) {
                            Ok(r) => EpisodeRecord::from_result(cell, &map.name, &r),
                            Err(e) => EpisodeRecord::failed(cell, &map.name, e.to_string()),
                        }
                    }
                };
                if tx.send(record).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for record in rx {
            if let Some(w) = writer.as_mut() {
                if let Err(e) = w.append(&record) {
                    write_error.get_or_insert(e);
                }
            }
            records.push(record);
            on_record(records.last().unwrap(), records.len(), n);
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }

    sort_records(&mut records);
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    let results = SuiteResults {
        metadata: SuiteMetadata {
            config_hash: cfg.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started,
            finished: chrono::Utc::now().to_rfc3339(),
            jobs,
            cells: n,
            failed,
        },
        config: cfg.clone(),
        records,
    };
    if let Some(dir) = out_dir {
        write_records(&dir.join(RECORDS_FILE), &results.records)?;
        let path = dir.join(RESULTS_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&results)?).map_err(io_err(&path))?;
    }
    Ok(results)
}
