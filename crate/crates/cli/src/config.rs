//! Config files, manifests and flag overrides.
//!
//! A config is a TOML table (or a JSON manifest written by a previous run).
//! Flags are merged on top of it before the typed deserialization, so they
//! always win. Field errors carry the offending key path.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::CliError;

/// Loads `path` into a JSON object. Manifests are unwrapped to their `config`
/// after checking they belong to `subcommand`.
pub fn load(path: Option<&Path>, subcommand: &str) -> Result<Map<String, Value>, CliError> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    let value: Value = if is_json {
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
    } else {
        let table: toml::Table = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::to_value(table).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
    };
    let Value::Object(mut map) = value else {
        return Err(CliError::Usage(format!("{}: expected a table at the top level", path.display())));
    };
    if let (Some(Value::String(sub)), Some(_)) = (map.get("subcommand"), map.get("config")) {
        if sub != subcommand {
            return Err(CliError::Usage(format!(
                "{} is a manifest for `{sub}`, not `{subcommand}`",
                path.display()
            )));
        }
        return match map.remove("config") {
            Some(Value::Object(inner)) => Ok(inner),
            _ => Err(CliError::Usage(format!("{}: manifest config is not a table", path.display()))),
        };
    }
    Ok(map)
}

/// Parses `key=value`; the value is read as JSON when possible, else as a string.
pub fn parse_assignment(raw: &str) -> Result<(String, Value), CliError> {
    let (key, val) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE (got `{raw}`)")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Usage(format!("--set expects KEY=VALUE (got `{raw}`)")));
    }
    let val = val.trim();
    let value = serde_json::from_str(val).unwrap_or_else(|_| Value::String(val.to_string()));
    Ok((key.to_string(), value))
}

/// Seeds are never invented.
pub fn require_seed(map: &Map<String, Value>) -> Result<u64, CliError> {
    match map.get("seed") {
        None => Err(CliError::Usage(
            "seed is required: set `seed` in the config or pass --seed".into(),
        )),
        Some(v) => v
            .as_u64()
            .ok_or_else(|| CliError::Usage(format!("seed must be a non-negative integer (got {v})"))),
    }
}

pub fn typed<T: DeserializeOwned>(map: Map<String, Value>, subcommand: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(Value::Object(map)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::Usage(format!("{subcommand} config: {inner}"))
        } else {
            CliError::Usage(format!("{subcommand} config, field `{path}`: {inner}"))
        }
    })
}
