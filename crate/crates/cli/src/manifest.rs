//! Run manifest: everything needed to reproduce a run bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool_version: String,
    /// SHA-256 of the canonical config serialization.
    pub config_hash: String,
    pub master_seed: u64,
    pub replicas: usize,
    pub replica_seeds: Vec<u64>,
    pub outputs: Vec<OutputEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(config_toml: &str, master_seed: u64, replicas: usize) -> Self {
        Self {
            manifest_version: 1,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(config_toml.as_bytes()),
            master_seed,
            replicas,
            replica_seeds: (0..replicas as u64)
                .map(|r| levypde::seeds::derive(master_seed, r))
                .collect(),
            outputs: Vec::new(),
        }
    }

    pub fn record_output(&mut self, rel_path: &str, bytes: &[u8]) {
        self.outputs.push(OutputEntry {
            path: rel_path.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn write(&self, out_dir: &Path) -> std::io::Result<()> {
        let text = toml::to_string_pretty(self).expect("manifest serializes");
        let mut file = fs::File::create(out_dir.join("manifest.toml"))?;
        file.write_all(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = sha256_hex(b"abc");
        assert_eq!(a, sha256_hex(b"abc"));
        assert_ne!(a, sha256_hex(b"abd"));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn replica_seeds_derive_from_master() {
        let m = RunManifest::new("x", 7, 3);
        assert_eq!(m.replica_seeds.len(), 3);
        assert_eq!(m.replica_seeds[0], levypde::seeds::derive(7, 0));
    }
}
