//! Command registry, configuration, manifests and the acceptance battery
//! behind the `pamlab` binary.

pub mod commands;
pub mod config;
pub mod criteria;
pub mod io;
pub mod manifest;
pub mod suite;

use std::path::{Path, PathBuf};
use std::time::Instant;

use commands::{execute, spec, Outcome};
use config::Params;
use manifest::{manifest_path, ExperimentManifest, InputRecord, OutputRecord};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: Outcome,
    pub output: PathBuf,
    pub manifest_file: PathBuf,
    pub manifest: ExperimentManifest,
}

/// Executes a command on resolved parameters, writes its output to `out` and
/// the manifest next to it.
pub fn run(name: &str, params: &Params, out: &Path) -> Result<RunResult> {
    let cmd = spec(name).ok_or_else(|| Error::InvalidConfig(format!("unknown command '{name}'")))?;
    let mut inputs = Vec::new();
    for k in cmd.keys.iter().filter(|k| k.input_file) {
        if let Some(path) = params.opt(k.name) {
            let content = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
            inputs.push(InputRecord {
                key: k.name.into(),
                path: path.into(),
                sha256: io::sha256_hex(content.as_bytes()),
                content,
            });
        }
    }
    let t0 = Instant::now();
    let outcome = execute(name, params)?;
    let wall = t0.elapsed().as_secs_f64();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, &outcome.content)?;
    let manifest = ExperimentManifest {
        command: name.into(),
        params: params.clone(),
        seeds: outcome.seeds.clone(),
        constants: outcome.constants.clone(),
        inputs,
        version: env!("CARGO_PKG_VERSION").into(),
        threads: crate::parallel::threads(),
        wall_clock_seconds: wall,
        outputs: vec![OutputRecord {
            file: out.file_name().map(|f| f.to_string_lossy().to_string()).unwrap_or_default(),
            sha256: io::sha256_hex(outcome.content.as_bytes()),
        }],
    };
    let manifest_file = manifest_path(out);
    manifest.write(&manifest_file)?;
    Ok(RunResult { outcome, output: out.to_path_buf(), manifest_file, manifest })
}
