//! `run_manifest.json`: what a run read, wrote and was configured with.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use l2h_core::config::KeyValues;
use l2h_core::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_bytes(&std::fs::read(path)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Fields that identify a run's content. Timestamps, thread count and input
/// locations are left out so identical runs on identical bytes hash alike.
#[derive(Debug, Clone, Serialize)]
struct Content<'a> {
    command: &'a str,
    config_hash: &'a str,
    config: &'a BTreeMap<String, String>,
    seeds: &'a BTreeMap<String, u64>,
    inputs: Vec<&'a str>,
    outputs: &'a [FileDigest],
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub content_hash: String,
    pub threads: usize,
    /// Wall-clock seconds per stage; like the timestamps, not part of the content hash.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub timings: BTreeMap<String, f64>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Collects manifest data while a command runs.
pub struct Recorder {
    command: String,
    config: KeyValues,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    threads: usize,
    timings: BTreeMap<String, f64>,
    started: u64,
}

impl Recorder {
    pub fn new(command: &str, config: &KeyValues, threads: usize) -> Self {
        Self {
            command: command.to_string(),
            config: config.clone(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            threads,
            timings: BTreeMap::new(),
            started: unix_now(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn timings(&mut self, stages: BTreeMap<&str, f64>) {
        self.timings = stages
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
    }

    /// Hashes every recorded file and writes `run_manifest.json` into `dir`.
    pub fn finish(self, dir: &Path) -> Result<Manifest> {
        let digest = |paths: &[PathBuf], base: Option<&Path>| -> Result<Vec<FileDigest>> {
            paths
                .iter()
                .map(|p| {
                    let shown = base.and_then(|b| p.strip_prefix(b).ok()).unwrap_or(p);
                    Ok(FileDigest {
                        path: shown.to_string_lossy().into_owned(),
                        sha256: sha256_file(p)?,
                    })
                })
                .collect()
        };
        let config_text = self.config.to_text();
        let config_hash = sha256_bytes(config_text.as_bytes());
        let inputs = digest(&self.inputs, None)?;
        let outputs = digest(&self.outputs, Some(dir))?;
        let config = self.config.entries().clone();
        let content = Content {
            command: &self.command,
            config_hash: &config_hash,
            config: &config,
            seeds: &self.seeds,
            inputs: inputs.iter().map(|d| d.sha256.as_str()).collect(),
            outputs: &outputs,
        };
        let content_hash =
            sha256_bytes(&serde_json::to_vec(&content).expect("manifest content serializes"));
        let manifest = Manifest {
            tool: "l2h".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config_hash,
            config,
            seeds: self.seeds,
            inputs,
            outputs,
            content_hash,
            threads: self.threads,
            timings: self.timings,
            started_unix: self.started,
            finished_unix: unix_now(),
        };
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(dir.join("run_manifest.json"), text + "\n")?;
        Ok(manifest)
    }
}
