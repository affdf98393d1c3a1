//! Experiment manifests: everything needed to re-run a command and check
//! that it reproduces its output byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::commands::{execute, spec};
use super::config::Params;
use super::io::sha256_hex;
use crate::error::{Error, Result};

/// Calibrated surrogates for the nonconstructive constants used by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsInForce {
    pub k_star: f64,
    pub c_star: f64,
    pub k1: f64,
}

/// Input files are embedded so the manifest replays without them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub key: String,
    pub path: String,
    pub sha256: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub command: String,
    pub params: Params,
    pub seeds: Vec<u64>,
    pub constants: Option<ConstantsInForce>,
    pub inputs: Vec<InputRecord>,
    pub version: String,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputRecord>,
}

impl ExperimentManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, super::io::to_json(self)?)?;
        Ok(())
    }
}

/// Where the manifest of an output file lives.
pub fn manifest_path(output: &Path) -> std::path::PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    s.into()
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub command: String,
    pub expected: String,
    pub actual: String,
    pub identical: bool,
}

/// Re-runs the manifest's command, with embedded inputs written under
/// `work_dir`, and compares the output digest.
pub fn replay(m: &ExperimentManifest, work_dir: &Path) -> Result<ReplayReport> {
    spec(&m.command).ok_or_else(|| Error::InvalidConfig(format!("unknown command '{}'", m.command)))?;
    std::fs::create_dir_all(work_dir)?;
    let mut params = m.params.clone();
    for inp in &m.inputs {
        if sha256_hex(inp.content.as_bytes()) != inp.sha256 {
            return Err(Error::Precondition(format!("embedded input '{}' does not match its digest", inp.key)));
        }
        let p = work_dir.join(format!("input-{}.csv", inp.key));
        std::fs::write(&p, &inp.content)?;
        params.set(&inp.key, p.to_string_lossy().to_string());
    }
    let out = execute(&m.command, &params)?;
    let actual = sha256_hex(out.content.as_bytes());
    let expected = m.outputs.first().map(|o| o.sha256.clone()).unwrap_or_default();
    Ok(ReplayReport { command: m.command.clone(), identical: actual == expected, expected, actual })
}
