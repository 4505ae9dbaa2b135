//! Run manifests: every file-producing invocation records its resolved
//! command, seeds, inputs, outputs, and timing next to its outputs, so any
//! pipeline can be re-executed bit-exactly with `bitseg rerun`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bitseg::error::{Error, Result};

use crate::spec::CommandSpec;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    /// The resolved command; replaying it reproduces the outputs.
    pub spec: CommandSpec,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Wall-clock duration; excluded from reproducibility comparisons.
    pub duration_ms: u64,
    /// Command-specific facts (e.g. the corrupt command's flip count).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(spec: CommandSpec) -> Self {
        Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: spec.seeds(),
            inputs: spec.inputs(),
            outputs: Vec::new(),
            spec,
            duration_ms: 0,
            extra: BTreeMap::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
        std::fs::write(path, json + "\n").map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            detail: format!("line {}: {e}", e.line()),
        })?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                detail: format!(
                    "unsupported manifest schema version {}",
                    manifest.schema_version
                ),
            });
        }
        Ok(manifest)
    }
}

/// Manifest path convention: `<primary output>.manifest.json` for file
/// outputs, `<dir>/manifest.json` for directory outputs.
pub fn manifest_path_for_file(primary_output: &Path) -> PathBuf {
    let mut name = primary_output.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn manifest_path_for_dir(out_dir: &Path) -> PathBuf {
    out_dir.join("manifest.json")
}
