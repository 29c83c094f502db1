//! Config-file ingestion and the reproducibility header.
//!
//! A config file is TOML. Top-level keys set the common options (`seed`,
//! `threads`, `format`); a table named after a subcommand sets that
//! subcommand's parameters using the long flag names:
//!
//! ```toml
//! seed = 7
//!
//! [pilot-sweep]
//! param = "epsilon"
//! grid = [1e-1, 1e-3, 1e-5, 1e-7, 1e-9]
//! n = 30
//! snr-db = 15
//! ```
//!
//! Flags given on the command line override file values.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Environment variable consulted for the seed when neither a flag nor the
/// config file sets one.
pub const SEED_ENV: &str = "TRAINSENS_SEED";

pub fn load_file(path: &Path) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("malformed config {}: {e}", path.display())))
}

fn to_object<T: Serialize>(value: &T) -> Map<String, Value> {
    match serde_json::to_value(value).expect("argument structs serialize") {
        Value::Object(map) => map,
        _ => unreachable!("argument structs serialize to objects"),
    }
}

/// Overlays the non-null entries of `flags` on `file` and decodes the result.
/// Unknown or ill-typed file keys are usage errors.
pub fn merge<T>(file: Option<&toml::Value>, flags: &T, section: &str) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned,
{
    let mut merged = match file {
        Some(v) => {
            let parsed: T = v
                .clone()
                .try_into()
                .map_err(|e| CliError::Usage(format!("config section [{section}]: {e}")))?;
            let known = to_object(&parsed);
            // Every field serializes (absent ones as null), so a file key
            // missing here is not a parameter of this section.
            if let Some(table) = v.as_table() {
                if let Some(bad) = table.keys().find(|k| !known.contains_key(*k)) {
                    return Err(CliError::Usage(format!("config section [{section}]: unknown key '{bad}'")));
                }
            }
            known
        }
        None => Map::new(),
    };
    for (k, v) in to_object(flags) {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Usage(format!("config section [{section}]: {e}")))
}

/// Resolves the seed: flag, then config file, then [`SEED_ENV`], then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not a 64-bit unsigned integer"))),
        Err(_) => Ok(0),
    }
}

/// Comment block recording the tool version, the fully resolved config and
/// the seed. Every output stream and file starts with it.
pub fn header(config: &Value, seed: u64) -> String {
    format!(
        "# trainsens {}\n# config: {}\n# seed: {seed}\n",
        env!("CARGO_PKG_VERSION"),
        config
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(rename_all = "kebab-case")]
    struct Demo {
        n: Option<u32>,
        snr_db: Option<f64>,
    }

    #[test]
    fn flags_override_file() {
        let file: toml::Table = toml::from_str("n = 30\nsnr-db = 15.0").unwrap();
        let flags = Demo { n: None, snr_db: Some(20.0) };
        let got = merge(Some(&toml::Value::Table(file)), &flags, "demo").unwrap();
        assert_eq!(got, Demo { n: Some(30), snr_db: Some(20.0) });
    }

    #[test]
    fn unknown_file_keys_are_usage_errors() {
        let file: toml::Table = toml::from_str("bogus = 1").unwrap();
        let err = merge(Some(&toml::Value::Table(file)), &Demo::default(), "demo").unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
    }

    #[test]
    fn explicit_seed_wins() {
        assert_eq!(resolve_seed(Some(3), Some(9)).unwrap(), 3);
        assert_eq!(resolve_seed(None, Some(9)).unwrap(), 9);
    }
}
