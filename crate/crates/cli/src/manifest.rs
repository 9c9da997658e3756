use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance record written next to every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical JSON of the effective inputs and options.
    pub config_digest: String,
    pub seed: Option<u64>,
    pub version: String,
    pub timestamp: String,
    /// Command line to replay the run.
    pub arguments: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            config_digest: digest(config),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            arguments: std::env::args().collect(),
        }
    }
}

/// serde_json writes object keys in sorted order (no `preserve_order`), so the
/// compact form is canonical.
pub fn digest(config: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(config.to_string().as_bytes()))
}
