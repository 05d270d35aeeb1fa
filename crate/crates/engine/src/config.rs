//! TOML session configuration with command-line overrides.
//!
//! Overrides are `dotted.key=value` pairs; the value is parsed as a TOML value
//! and falls back to a plain string (`method=baseline`).

use std::path::Path;

use anyhow::{bail, Context, Result};
use ioct_sonify_core::SessionConfig;
use serde::Serialize;
use toml::{Table, Value};

fn parse_value(text: &str) -> Value {
    let doc = format!("v = {text}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(text.into())),
        Err(_) => Value::String(text.into()),
    }
}

/// Sets `dotted.key` in `table`, creating intermediate tables.
pub fn set_key(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("bad override key `{key}`");
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => bail!("override `{key}`: `{p}` is not a table"),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Applies `key=value` overrides to a TOML table.
pub fn apply_overrides(table: &mut Table, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .with_context(|| format!("override `{o}` is not key=value"))?;
        set_key(table, k.trim(), parse_value(v.trim()))?;
    }
    Ok(())
}

/// Parses and validates a config from TOML text plus overrides. Unknown keys are errors.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<SessionConfig> {
    let mut table: Table = text.parse().context("config is not valid TOML")?;
    apply_overrides(&mut table, overrides)?;
    let cfg: SessionConfig = Value::Table(table).try_into().context("invalid config")?;
    cfg.validate().context("invalid config")?;
    Ok(cfg)
}

/// Loads a config file (or the defaults when `path` is `None`) and applies overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<SessionConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    Ok(toml::to_string(value)?)
}
