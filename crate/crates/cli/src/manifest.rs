//! Run manifests: the full reproducibility record of one harness run.

use crate::config::ConfigFile;
use crate::HarnessError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicaSeed {
    pub n: usize,
    pub replica: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub master_seed: u64,
    pub config: ConfigFile,
    pub replica_seeds: Vec<ReplicaSeed>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ConfigFile, master_seed: u64) -> RunManifest {
        RunManifest {
            tool: "episcale".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            master_seed,
            config: config.clone(),
            replica_seeds: Vec::new(),
            started_unix: unix_now(),
            finished_unix: 0,
            files: Vec::new(),
        }
    }

    /// Derive and record the stream seed for `(n_index, replica)`.
    /// Stream index is `n_index * 65536 + replica`, hash-split off the
    /// master seed, so any subset of replicas can be reproduced alone.
    pub fn seed_for(&mut self, n: usize, n_index: usize, replica: usize) -> u64 {
        let stream = (n_index as u64) * 65_536 + replica as u64;
        let seed = episcale_core::rng::replica_seed(self.master_seed, stream);
        self.replica_seeds.push(ReplicaSeed { n, replica, seed });
        seed
    }

    /// Digest every data file in the run directory (excluding the manifest
    /// itself) and write the manifest.
    pub fn finalize(mut self, dir: &Path) -> Result<(), HarnessError> {
        self.finished_unix = unix_now();
        let mut names: Vec<String> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n != MANIFEST_NAME)
            .collect();
        names.sort();
        for name in names {
            let bytes = std::fs::read(dir.join(&name))?;
            self.files.push(FileDigest {
                name,
                sha256: hex_digest(&bytes),
            });
        }
        let json = serde_json::to_string_pretty(&self)
            .map_err(|e| HarnessError::Config(format!("manifest serialisation: {e}")))?;
        std::fs::write(dir.join(MANIFEST_NAME), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<RunManifest, HarnessError> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_NAME))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("manifest parse: {e}")))
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in hash {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Map of data-file digests for a run directory (the reproducibility
/// comparison used by reruns and the worker-count independence check).
pub fn data_digests(dir: &Path) -> Result<Vec<FileDigest>, HarnessError> {
    let manifest = RunManifest::load(dir)?;
    Ok(manifest.files)
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
