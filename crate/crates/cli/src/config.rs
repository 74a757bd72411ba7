//! Configuration documents: loading, `--set` overrides and typed parsing.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::manifest::{sha256_hex, FileHash, RunManifest};
use crate::{CliError, CliResult};

/// Reads a JSON file and records its hash among the inputs.
pub fn read_input(path: &Path, inputs: &mut Vec<FileHash>) -> CliResult<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    inputs.push(FileHash {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    });
    Ok(bytes)
}

pub fn parse_json(bytes: &[u8], path: &Path) -> CliResult<Value> {
    serde_json::from_slice(bytes).map_err(|e| {
        let msg = e.to_string();
        let reason = msg.split(" at line ").next().unwrap_or(&msg);
        CliError::Config(format!(
            "malformed JSON in {} at line {}, column {}: {reason}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

/// Loads `path` (an empty object when absent). A manifest contributes its
/// resolved configuration if it was written by the same subcommand.
pub fn load(path: Option<&Path>, subcommand: &str, inputs: &mut Vec<FileHash>) -> CliResult<Value> {
    let Some(path) = path else {
        return Ok(Value::Object(Map::new()));
    };
    let value = parse_json(&read_input(path, inputs)?, path)?;
    if let Some(m) = RunManifest::detect(&value) {
        if m.subcommand != subcommand {
            return Err(CliError::Config(format!(
                "{} is a manifest for `{}`, not `{subcommand}`",
                path.display(),
                m.subcommand
            )));
        }
        return Ok(m.config);
    }
    if !value.is_object() {
        return Err(CliError::Config(format!(
            "{}: top level must be a JSON object",
            path.display()
        )));
    }
    Ok(value)
}

/// Applies `key.path=value` overrides. Values are parsed as JSON and fall back
/// to plain strings.
pub fn apply_overrides(mut value: Value, sets: &[String]) -> CliResult<Value> {
    for item in sets {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(CliError::Config(format!("--set: empty path segment in {key:?}")));
        }
        let mut node = &mut value;
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| CliError::Config(format!("--set {key}: {} is not an object", parts[..i].join("."))))?;
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), parsed.clone());
                break;
            }
            node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
            if node.is_null() {
                *node = Value::Object(Map::new());
            }
        }
    }
    Ok(value)
}

/// Deserializes `value`, naming the offending key on failure.
pub fn parse<T: DeserializeOwned>(value: Value) -> CliResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        if path == "." || path.is_empty() {
            CliError::Config(e.into_inner().to_string())
        } else {
            CliError::Config(format!("key `{path}`: {}", e.into_inner()))
        }
    })
}

pub fn to_value<T: serde::Serialize>(config: &T) -> Value {
    serde_json::to_value(config).expect("configuration types serialize")
}
