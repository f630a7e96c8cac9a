use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};
use thiserror::Error;

/// A problem with the command line or a config file (exit code 2).
#[derive(Debug, Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

pub const LOCK_FILE: &str = "config.lock.json";

/// Recursively overlays `top` onto `base`; objects merge, anything else
/// replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, t) => *b = t,
    }
}

/// Parses `a.b.c=value`. The value is read as JSON when it parses, as a
/// string otherwise, so `lr=1e-4` is a number and `kind=F` a string.
pub fn parse_override(s: &str) -> Result<Value, ConfigError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override {s:?} is not key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError(format!("override {s:?} has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut out = value;
    for part in key.rsplit('.') {
        let mut m = Map::new();
        m.insert(part.to_string(), out);
        out = Value::Object(m);
    }
    Ok(out)
}

/// Reads a JSON object from `path`.
pub fn read_file(path: &Path) -> Result<Value, ConfigError> {
    let text =
        fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let v: Value =
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(ConfigError(format!(
            "{} does not hold a JSON object",
            path.display()
        )));
    }
    Ok(v)
}

/// `file`, then `overrides`, then `flags`; later layers win.
pub fn overlay(
    file: Option<Value>,
    overrides: &[String],
    flags: Value,
) -> Result<Value, ConfigError> {
    let mut v = file.unwrap_or_else(|| Value::Object(Map::new()));
    for s in overrides {
        merge(&mut v, parse_override(s)?);
    }
    merge(&mut v, flags);
    Ok(v)
}

/// Deserializes `defaults` overlaid with `layers`. Unknown keys fail here
/// because every settings type denies them.
pub fn resolve<S: DeserializeOwned>(mut defaults: Value, layers: Value) -> Result<S, ConfigError> {
    merge(&mut defaults, layers);
    serde_json::from_value(defaults).map_err(|e| ConfigError(e.to_string()))
}

/// Builds a JSON object from the flags that were given.
#[macro_export]
macro_rules! flags {
    ($($key:literal => $value:expr),* $(,)?) => {{
        let mut m = serde_json::Map::new();
        $(
            if let Some(v) = $value {
                m.insert($key.to_string(), serde_json::json!(v));
            }
        )*
        serde_json::Value::Object(m)
    }};
}
