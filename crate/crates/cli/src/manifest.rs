//! Run manifests: the resolved config, the RNG algorithm id, and a
//! checksum for every emitted artifact. Feeding a manifest back to `run`
//! reproduces the run.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::ExperimentConfig;

pub const MANIFEST_SCHEMA: &str = "banditlab/manifest/v1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub code_version: String,
    pub rng_algorithm: String,
    pub created_unix_ms: u128,
    pub elapsed_ms: u128,
    pub workers: usize,
    pub config: ExperimentConfig,
    pub outputs: Vec<OutputDigest>,
}

impl Manifest {
    pub fn new(config: ExperimentConfig, elapsed_ms: u128) -> Self {
        Manifest {
            schema: MANIFEST_SCHEMA.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            rng_algorithm: banditlab::env::RNG_ALGORITHM.to_string(),
            created_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            elapsed_ms,
            workers: rayon::current_num_threads(),
            config,
            outputs: Vec::new(),
        }
    }

    /// Records one emitted file, path relative to the manifest's directory.
    pub fn record(&mut self, dir: &Path, file: &str) -> Result<()> {
        let path = dir.join(file);
        let bytes = std::fs::read(&path)
            .with_context(|| format!("cannot hash output {}", path.display()))?;
        self.outputs.push(OutputDigest {
            file: file.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
