use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::exit::{CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance of an artifact. Reports embed it; every other file gets a
/// `<file>.manifest.json` sidecar that also records the write time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_owned(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            tool_version: TOOL_VERSION.to_owned(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(flatten)]
    pub manifest: RunManifest,
    pub created_unix_ms: u128,
    pub inputs: Vec<String>,
    pub config: RunConfig,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

/// Writes a set of artifacts and their sidecars. Nothing is written until
/// every artifact has been rendered.
pub struct Outputs<'a> {
    manifest: &'a RunManifest,
    config: &'a RunConfig,
    inputs: Vec<String>,
    files: Vec<(PathBuf, Vec<u8>, bool)>,
}

impl<'a> Outputs<'a> {
    pub fn new(manifest: &'a RunManifest, config: &'a RunConfig, inputs: &[&Path]) -> Self {
        Self {
            manifest,
            config,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            files: Vec::new(),
        }
    }

    /// Queues an artifact that gets a sidecar manifest.
    pub fn artifact(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes, true));
    }

    /// Queues a file that carries its manifest inline.
    pub fn report(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes, false));
    }

    pub fn commit(self) -> CliResult<Vec<PathBuf>> {
        let created_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_err(CliError::internal)?
            .as_millis();
        let sidecar = Sidecar {
            manifest: self.manifest.clone(),
            created_unix_ms,
            inputs: self.inputs,
            config: self.config.clone(),
        };
        let mut written = Vec::new();
        for (path, bytes, with_sidecar) in self.files {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)
                    .map_err(|e| CliError::data(format!("{}: {e}", parent.display())))?;
            }
            std::fs::write(&path, bytes)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            if with_sidecar {
                let side = sidecar_path(&path);
                let mut json = serde_json::to_vec_pretty(&sidecar)?;
                json.push(b'\n');
                std::fs::write(&side, json)
                    .map_err(|e| CliError::data(format!("{}: {e}", side.display())))?;
            }
            written.push(path);
        }
        Ok(written)
    }
}
