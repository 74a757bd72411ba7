use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every set of outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    /// Fully resolved configuration, defaults included.
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileHash>,
    pub started_utc: String,
    pub finished_utc: String,
    pub outputs: Vec<FileHash>,
}

impl RunManifest {
    /// Recognizes a manifest among loaded configuration documents.
    pub fn detect(value: &Value) -> Option<Self> {
        let obj = value.as_object()?;
        if !(obj.contains_key("tool_version") && obj.contains_key("subcommand") && obj.contains_key("config")) {
            return None;
        }
        serde_json::from_value(value.clone()).ok()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
