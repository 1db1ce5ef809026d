use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Check, CliError, Config, Outcome};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    /// Relative to the output directory.
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: Config,
    pub workers: usize,
    pub duration_secs: f64,
    pub exit_code: i32,
    pub checks: Vec<Check>,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<(u64, String)> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok((bytes.len() as u64, digest.iter().map(|b| format!("{b:02x}")).collect()))
}

impl RunManifest {
    pub fn build(
        command: &str,
        cfg: &Config,
        workers: usize,
        duration_secs: f64,
        out_dir: &Path,
        outcome: &Outcome,
        exit_code: i32,
    ) -> Result<Self, CliError> {
        let outputs = outcome
            .files
            .iter()
            .map(|rel| {
                let (bytes, sha256) = sha256_file(&out_dir.join(rel))
                    .map_err(|e| CliError::Numeric(format!("cannot digest {}: {e}", rel.display())))?;
                Ok(OutputDigest { path: rel.clone(), bytes, sha256 })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            config: cfg.clone(),
            workers,
            duration_secs,
            exit_code,
            checks: outcome.checks.clone(),
            outputs,
        })
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Numeric(e.to_string()))?;
        std::fs::write(out_dir.join(MANIFEST_FILE), text + "\n")
            .map_err(|e| CliError::Config(format!("cannot write manifest: {e}")))
    }
}
