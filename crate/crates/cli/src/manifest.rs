//! Run manifest: what ran, on which inputs, and what it wrote.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

/// Environment variable that pins the manifest timestamp.
pub const SOURCE_DATE_EPOCH: &str = "SOURCE_DATE_EPOCH";

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    /// SHA-256 over every named input, in the order they were added.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub output_paths: Vec<OutputEntry>,
    /// Seconds since the epoch from `SOURCE_DATE_EPOCH`, 0 when unset, so
    /// reruns stay byte-identical.
    pub timestamp: u64,
    #[serde(skip)]
    hasher: Sha256,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        let timestamp = std::env::var(SOURCE_DATE_EPOCH).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(0);
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        if let Some(s) = seed {
            hasher.update(s.to_le_bytes());
        }
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config_hash: String::new(),
            seed,
            output_paths: Vec::new(),
            timestamp,
            hasher,
        }
    }

    /// Length-prefixed so adjacent inputs cannot alias.
    pub fn hash_input(&mut self, name: &str, bytes: &[u8]) {
        self.hasher.update((name.len() as u64).to_le_bytes());
        self.hasher.update(name.as_bytes());
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
    }

    pub fn add_output(&mut self, path: &Path, bytes: &[u8]) {
        self.output_paths
            .push(OutputEntry { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(bytes)) });
    }

    pub fn to_json(&self) -> String {
        let mut m = self.clone();
        m.config_hash = hex::encode(self.hasher.clone().finalize());
        serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_inputs_and_their_boundaries() {
        let mut a = Manifest::new("x", Some(1));
        a.hash_input("config", b"ab");
        let mut b = Manifest::new("x", Some(1));
        b.hash_input("config", b"a");
        b.hash_input("b", b"");
        let mut c = Manifest::new("x", Some(1));
        c.hash_input("config", b"ab");
        assert_ne!(a.to_json(), b.to_json());
        assert_eq!(a.to_json(), c.to_json());
        let json: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(json["config_hash"].as_str().unwrap().len(), 64);
    }
}
