//! Experiment manifests and the hash every output carries.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Backend, LabError};

/// Everything that determines an experiment's output bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub schema: u32,
    pub kind: String,
    pub artifact_version: String,
    pub backend: Backend,
    /// Largest denominator among the exact inputs, as a decimal string.
    pub denominator_bound: String,
    pub config: serde_json::Value,
}

impl ExperimentManifest {
    pub fn new(kind: &str, backend: Backend, config: serde_json::Value) -> Self {
        let denominator_bound = largest_denominator(&config);
        ExperimentManifest {
            schema: crate::config::SCHEMA_VERSION,
            kind: kind.to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            backend,
            denominator_bound,
            config,
        }
    }

    /// SHA-256 of the canonical JSON (object keys sorted).
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plain data");
        hex::encode(Sha256::digest(bytes))
    }

    /// Writes `manifest.json`; the run-time fields sit outside the hashed part.
    pub fn write(&self, dir: &Path, threads: Option<usize>) -> Result<String, LabError> {
        let hash = self.hash();
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let doc = serde_json::json!({
            "manifest": self,
            "hash": hash,
            "runtime": { "created_unix": created, "threads": threads },
        });
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&doc).expect("plain data"))?;
        Ok(hash)
    }
}

fn largest_denominator(v: &serde_json::Value) -> String {
    let mut best = num_bigint::BigInt::from(1);
    let mut stack = vec![v];
    while let Some(v) = stack.pop() {
        match v {
            serde_json::Value::String(s) => {
                if let Ok(r) = stairtree::scalar::parse_rational(s) {
                    if *r.denom() > best {
                        best = r.denom().clone();
                    }
                }
            }
            serde_json::Value::Array(xs) => stack.extend(xs),
            serde_json::Value::Object(m) => stack.extend(m.values()),
            _ => {}
        }
    }
    best.to_string()
}

/// First line of every CSV output.
pub fn csv_header(hash: &str) -> String {
    format!("# manifest: {hash}\n")
}
