use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use netorder_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A file written by a command, with its content hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to re-run a command and check that it reproduces its
/// outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub cwd: PathBuf,
    pub params: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<Artifact>,
    pub version: String,
    pub wall_time_s: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// `out.ext` -> `out.ext.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub struct ManifestBuilder {
    command: String,
    argv: Vec<String>,
    params: serde_json::Value,
    seeds: Vec<u64>,
    inputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, argv: &[String], params: serde_json::Value, seeds: Vec<u64>) -> Self {
        Self {
            command: command.to_string(),
            argv: argv.to_vec(),
            params,
            seeds,
            inputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    /// Hashes `outputs` and writes the manifest beside the first one.
    pub fn write(&self, outputs: &[&Path]) -> Result<PathBuf> {
        let first = outputs.first().ok_or_else(|| Error::InvalidArgument("manifest without outputs".into()))?;
        let outputs = outputs
            .iter()
            .map(|p| Ok(Artifact { path: p.to_path_buf(), sha256: sha256_file(p)? }))
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command.clone(),
            argv: self.argv.clone(),
            cwd: std::env::current_dir()?,
            params: self.params.clone(),
            seeds: self.seeds.clone(),
            inputs: self.inputs.clone(),
            outputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let path = manifest_path(first);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }
}

pub fn read(path: &Path) -> Result<RunManifest> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
