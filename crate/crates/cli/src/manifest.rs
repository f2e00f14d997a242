//! Run manifest: what was executed, from which config, and what came out.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    /// SHA-256 of the config file bytes (or of the parameter string for
    /// commands without a config file). Recomputing it on read detects a
    /// config that changed after the run.
    pub config_sha256: String,
    pub tool_version: String,
    pub duration_s: f64,
    /// Output files written by the run, relative to the out dir.
    pub outputs: Vec<String>,
    /// Wind-noise seed, when one was in play.
    pub seed: Option<u64>,
    /// `ok`, `unfair`, or `fault`.
    pub status: String,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json)
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    /// Re-hashes the config file and compares against the stored digest.
    pub fn verify_config(&self) -> io::Result<bool> {
        let bytes = std::fs::read(&self.config_path)?;
        Ok(sha256_hex(&bytes) == self.config_sha256)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
