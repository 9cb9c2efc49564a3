//! Run manifest: what produced a directory of outputs. Carries no
//! timestamps so identical inputs give byte-identical manifests.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed: cfg.seed,
            config_sha256: cfg.hash(),
            outputs: Vec::new(),
        }
    }

    pub fn file_name(&self) -> String {
        format!("manifest_{}.json", self.command)
    }

    /// Hash `files` and write the manifest into `dir`.
    pub fn write(mut self, dir: &Path, files: &[PathBuf]) -> CliResult<PathBuf> {
        for f in files {
            let bytes = std::fs::read(f).map_err(|e| CliError::io(f, e))?;
            self.outputs.push(OutputFile {
                name: f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                sha256: sha256_hex(&bytes),
            });
        }
        let path = dir.join(self.file_name());
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
