//! TOML configuration with command-line overrides.

use std::path::Path;

use papertab::pipeline::PipelineConfig;
use serde::de::DeserializeOwned;
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

/// Parses `key=value`, reading the value as a TOML literal and falling
/// back to a plain string.
pub fn parse_override(s: &str) -> Result<(String, Value), String> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(format!("bad key `{key}`"));
    }
    let raw = raw.trim();
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Sets `value` at the dotted `key`, creating tables on the way.
pub fn set_path(table: &mut Table, key: &str, value: Value) -> CliResult<()> {
    let mut parts = key.split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{key}: `{part}` is not a section")))?;
    }
    Ok(())
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.parse::<Table>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Deserializes with the failing key path in the error.
pub fn from_table<T: DeserializeOwned>(table: Table) -> CliResult<T> {
    serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::Config(inner.to_string())
        } else {
            CliError::Config(format!("{path}: {inner}"))
        }
    })
}

/// File (if any), then overrides in order, then validation.
pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> CliResult<PipelineConfig> {
    let mut table = match path {
        Some(p) => read_table(p)?,
        None => Table::new(),
    };
    for (k, v) in overrides {
        set_path(&mut table, k, v.clone())?;
    }
    let cfg: PipelineConfig = from_table(table)?;
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}
