//! Versioned JSON snapshots of network parameters.
//!
//! A network is stored as its [`MlpSpec`] plus the flat parameter vector in
//! the layer layout documented on [`Mlp`]: for each layer, the `fan_in x
//! fan_out` weight matrix in row-major order followed by the `fan_out` bias.

use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpSpec};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSnapshot<T> {
    pub spec: MlpSpec,
    pub params: Vec<T>,
}

/// Standalone single-network document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpDocument<T> {
    pub format: String,
    pub version: u32,
    pub network: MlpSnapshot<T>,
}

pub const MLP_FORMAT: &str = "afm.mlp";

impl<T: Real> Mlp<T> {
    pub fn snapshot(&self) -> MlpSnapshot<T> {
        MlpSnapshot {
            spec: self.spec().clone(),
            params: self.params().to_vec(),
        }
    }

    pub fn from_snapshot(snapshot: MlpSnapshot<T>) -> Result<Self> {
        Mlp::from_params(snapshot.spec, snapshot.params)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = MlpDocument {
            format: MLP_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            network: self.snapshot(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MlpDocument<T> = serde_json::from_str(text)?;
        check_header(&doc.format, doc.version, MLP_FORMAT)?;
        Mlp::from_snapshot(doc.network)
    }
}

pub fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Snapshot(format!(
            "expected a `{expected}` document, found `{format}`"
        )));
    }
    if version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!(
            "unsupported {format} version {version} (supported: {SNAPSHOT_VERSION})"
        )));
    }
    Ok(())
}
