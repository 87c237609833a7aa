//! Reproducibility manifests: every run binds its outputs to the exact
//! config, seeds, and content digests. Replaying the embedded config must
//! reproduce every digest bit-for-bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct RunFlags {
    /// Runs whose reported values depended on a grid-boundary contact.
    pub boundary_contact: u32,
    /// Busemann estimates that fell back past the pairing criterion.
    pub unreliable_estimates: u32,
}

impl RunFlags {
    pub fn any(&self) -> bool {
        self.boundary_contact > 0 || self.unreliable_estimates > 0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub schema: u32,
    pub tool_version: String,
    pub experiment: String,
    pub config_hash: String,
    /// Canonical config text; `verify --manifest` replays it.
    pub config: String,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub outputs: Vec<OutputDigest>,
    /// Digest over the sorted output digests: the one-line identity of the
    /// run's results.
    pub result_digest: String,
    pub flags: RunFlags,
    pub workers: usize,
    pub wall_clock_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn digest_file(path: &Path) -> std::io::Result<OutputDigest> {
    let bytes = fs::read(path)?;
    Ok(OutputDigest {
        file: path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: sha256_hex(&bytes),
    })
}

pub fn result_digest(outputs: &[OutputDigest]) -> String {
    let mut lines: Vec<String> = outputs
        .iter()
        .map(|o| format!("{}  {}", o.sha256, o.file))
        .collect();
    lines.sort();
    sha256_hex(lines.join("\n").as_bytes())
}

impl ExperimentManifest {
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The fields that must be identical across reruns regardless of worker
    /// count or timing.
    pub fn reproducible_identity(&self) -> (String, Vec<u64>, Vec<OutputDigest>, String) {
        (
            self.config_hash.clone(),
            self.seeds.clone(),
            self.outputs.clone(),
            self.result_digest.clone(),
        )
    }
}
