use std::path::{Path, PathBuf};

use afm_core::afm::AfmTrainConfig;
use afm_core::dynamics::{
    InitTrainConfig, MemberArch, StreamXConfig, DEFAULT_DT, DEFAULT_ONLINE_LR,
};
use afm_core::planner::MppiConfig;
use afm_core::sim::{CostWeights, EpisodeConfig, Method, Scenario, TrackMap};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Model and planner sizes. `Desk` keeps a full suite within hours on one
/// core; `Paper` restores the published settings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

impl Scale {
    pub fn from_flag(paper: bool) -> Self {
        if paper {
            Scale::Paper
        } else {
            Scale::Desk
        }
    }

    pub fn dynamics_train(self) -> InitTrainConfig {
        match self {
            Scale::Desk => InitTrainConfig {
                n_samples: 10_000,
                hidden: vec![64, 64],
                ..InitTrainConfig::default()
            },
            Scale::Paper => InitTrainConfig::default(),
        }
    }

    /// Flow-model training. Both scales use Adam with step size 1e-3; at
    /// 1e-2 the loss diverges after a few thousand iterations.
    pub fn afm_train(self) -> AfmTrainConfig {
        let iterations = match self {
            Scale::Desk => 10_000,
            Scale::Paper => 75_000,
        };
        AfmTrainConfig {
            iterations,
            lr: 1e-3,
            ..AfmTrainConfig::default()
        }
    }

    pub fn mppi(self) -> MppiConfig {
        match self {
            Scale::Desk => MppiConfig {
                population: 256,
                horizon: 10,
                ..MppiConfig::default()
            },
            Scale::Paper => MppiConfig::default(),
        }
    }
}

/// Snapshot files, resolved relative to the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifacts {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub afm: Option<PathBuf>,
    /// Dynamics model trained with randomized actuation, used by `AFM_DR`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics_dr: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub afm_dr: Option<PathBuf>,
    /// Layer-normalized ensemble required by `StreamxPE`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics_streamx: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArtifactKind {
    Dynamics,
    Afm,
    DynamicsDr,
    AfmDr,
    DynamicsStreamx,
}

impl ArtifactKind {
    pub fn key(self) -> &'static str {
        match self {
            ArtifactKind::Dynamics => "dynamics",
            ArtifactKind::Afm => "afm",
            ArtifactKind::DynamicsDr => "dynamics_dr",
            ArtifactKind::AfmDr => "afm_dr",
            ArtifactKind::DynamicsStreamx => "dynamics_streamx",
        }
    }
}

/// Snapshots a method starts from: `(dynamics, flow)`.
pub fn required_artifacts(method: Method) -> (Option<ArtifactKind>, Option<ArtifactKind>) {
    match method {
        Method::Afm => (Some(ArtifactKind::Dynamics), Some(ArtifactKind::Afm)),
        Method::AfmDr => (Some(ArtifactKind::DynamicsDr), Some(ArtifactKind::AfmDr)),
        Method::OnlinePE | Method::FrozenPE => (Some(ArtifactKind::Dynamics), None),
        Method::StreamxPE => (Some(ArtifactKind::DynamicsStreamx), None),
        Method::Physics => (None, None),
    }
}

impl Artifacts {
    pub fn get(&self, kind: ArtifactKind) -> Option<&PathBuf> {
        match kind {
            ArtifactKind::Dynamics => self.dynamics.as_ref(),
            ArtifactKind::Afm => self.afm.as_ref(),
            ArtifactKind::DynamicsDr => self.dynamics_dr.as_ref(),
            ArtifactKind::AfmDr => self.afm_dr.as_ref(),
            ArtifactKind::DynamicsStreamx => self.dynamics_streamx.as_ref(),
        }
    }

    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.dynamics,
            &mut self.afm,
            &mut self.dynamics_dr,
            &mut self.afm_dr,
            &mut self.dynamics_streamx,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Per-episode settings shared by every cell of a suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeSettings {
    pub max_steps: usize,
    pub delta_m: f64,
    pub dt: f64,
    pub online_lr: f64,
    pub ode_steps: usize,
    pub regime_error_refresh: bool,
    /// Planner settings; `None` takes the scale default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mppi: Option<MppiConfig>,
    pub cost: CostWeights,
    pub streamx: StreamXConfig,
}

impl Default for EpisodeSettings {
    fn default() -> Self {
        Self {
            max_steps: 5000,
            delta_m: 1.0,
            dt: DEFAULT_DT,
            online_lr: DEFAULT_ONLINE_LR,
            ode_steps: afm_core::afm::DEFAULT_ODE_STEPS,
            regime_error_refresh: false,
            mppi: None,
            cost: CostWeights::default(),
            streamx: StreamXConfig::default(),
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![
        Method::Afm,
        Method::OnlinePE,
        Method::FrozenPE,
        Method::Physics,
    ]
}

fn default_maps() -> Vec<String> {
    vec!["oval".into(), "chicane".into()]
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "Scenario::table")]
    pub scenarios: Vec<Scenario>,
    /// Bundled track names or paths to track files.
    #[serde(default = "default_maps")]
    pub maps: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub scale: Scale,
    #[serde(default)]
    pub episode: EpisodeSettings,
    #[serde(default)]
    pub artifacts: Artifacts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            methods: default_methods(),
            scenarios: Scenario::table(),
            maps: default_maps(),
            seeds: default_seeds(),
            scale: Scale::Desk,
            episode: EpisodeSettings::default(),
            artifacts: Artifacts::default(),
            output: None,
        }
    }
}

/// One cell of the suite grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub map: String,
    pub scenario: Scenario,
    pub seed: u64,
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SuiteConfig = serde_json::from_str(text).map_err(|e| BenchError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(BenchError::Invalid(m));
        if self.methods.is_empty() {
            return invalid("methods must not be empty".into());
        }
        if self.scenarios.is_empty() {
            return invalid("scenarios must not be empty".into());
        }
        if self.maps.is_empty() {
            return invalid("maps must not be empty".into());
        }
        if self.seeds.is_empty() {
            return invalid("seeds must not be empty".into());
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        let probe = self.episode_config(
            self.methods[0],
            TrackMap::bundled("oval")?,
            Scenario::nominal(),
            0,
        );
        probe.validate()?;
        Ok(())
    }

    /// Checks that every map resolves and every needed snapshot file exists.
    pub fn check_references(&self) -> Result<()> {
        for m in &self.maps {
            resolve_map(m)?;
        }
        for &method in &self.methods {
            let (d, f) = required_artifacts(method);
            for kind in [d, f].into_iter().flatten() {
                match self.artifacts.get(kind) {
                    None => {
                        return Err(BenchError::MissingArtifact {
                            method: method.to_string(),
                            key: kind.key(),
                        })
                    }
                    Some(p) if !p.is_file() => return Err(BenchError::ArtifactNotFound(p.clone())),
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }

    pub fn mppi(&self) -> MppiConfig {
        self.episode
            .mppi
            .clone()
            .unwrap_or_else(|| self.scale.mppi())
    }

    pub fn episode_config(
        &self,
        method: Method,
        map: TrackMap,
        scenario: Scenario,
        seed: u64,
    ) -> EpisodeConfig {
        let e = &self.episode;
        let mut cfg = EpisodeConfig::new(method, map, scenario, seed);
        cfg.max_steps = e.max_steps;
        cfg.delta_m = e.delta_m;
        cfg.dt = e.dt;
        cfg.online_lr = e.online_lr;
        cfg.ode_steps = e.ode_steps;
        cfg.regime_error_refresh = e.regime_error_refresh;
        cfg.mppi = self.mppi();
        cfg.cost = e.cost;
        cfg.streamx = e.streamx.clone();
        cfg.record_trajectory = false;
        cfg
    }

    /// Cells in a fixed order: method, map, scenario, seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &method in &self.methods {
            for map in &self.maps {
                for &scenario in &self.scenarios {
                    for &seed in &self.seeds {
                        out.push(Cell {
                            method,
                            map: map.clone(),
                            scenario,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Reads, validates and checks a suite config. Relative artifact paths are
/// taken relative to the file's directory.
pub fn load_config(path: &Path) -> Result<SuiteConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut cfg = SuiteConfig::from_json(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.artifacts.rebase(base);
    cfg.maps = cfg
        .maps
        .iter()
        .map(|m| {
            if TrackMap::bundled(m).is_ok() || Path::new(m).is_absolute() {
                m.clone()
            } else {
                base.join(m).to_string_lossy().into_owned()
            }
        })
        .collect();
    cfg.check_references()?;
    Ok(cfg)
}

/// A bundled track name or a path to a track file.
pub fn resolve_map(name: &str) -> Result<TrackMap> {
    if let Ok(map) = TrackMap::bundled(name) {
        return Ok(map);
    }
    let path = Path::new(name);
    if path.is_file() {
        return Ok(TrackMap::load(path)?);
    }
    Err(BenchError::Invalid(format!(
        "`{name}` is neither a bundled track nor a track file"
    )))
}

/// Dynamics-model variants the `train-dynamics` command can produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DynamicsVariant {
    Standard,
    StreamX,
}

impl DynamicsVariant {
    pub fn arch(self) -> MemberArch {
        match self {
            DynamicsVariant::Standard => MemberArch::Standard,
            DynamicsVariant::StreamX => MemberArch::StreamX { sparsity: 0.9 },
        }
    }
}
