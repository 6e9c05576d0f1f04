use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use gem_core::io::FORMAT_VERSION;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> CliResult<Self> {
        Ok(Artifact {
            path: path.display().to_string(),
            sha256: file_sha256(path)?,
        })
    }
}

/// Written next to every output as `<output>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: Value) -> Self {
        RunManifest {
            format_version: FORMAT_VERSION,
            command: command.into(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            duration_seconds: 0.0,
        }
    }

    pub fn input(mut self, path: &Path) -> CliResult<Self> {
        self.inputs.push(Artifact::of(path)?);
        Ok(self)
    }

    /// Records `output`, stamps the duration and writes the manifest beside it.
    pub fn finish(mut self, output: &Path, elapsed: Duration) -> CliResult<PathBuf> {
        self.outputs.push(Artifact::of(output)?);
        self.duration_seconds = elapsed.as_secs_f64();
        let path = manifest_path(output);
        let text = serde_json::to_string_pretty(&self).map_err(gem_core::GemError::from)?;
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
