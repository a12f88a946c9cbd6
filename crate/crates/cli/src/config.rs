//! Config files: TOML, or JSON when the extension says so or TOML parsing
//! fails on text that looks like a JSON object.

use dyn4d_core::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

/// Parses a config from text. Missing fields take their defaults.
pub fn parse<T: DeserializeOwned>(text: &str, json: bool) -> Result<T, Error> {
    if json {
        return serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON config: {e}")));
    }
    match toml::from_str(text) {
        Ok(v) => Ok(v),
        Err(e) if text.trim_start().starts_with('{') => {
            serde_json::from_str(text).map_err(|je| Error::Config(format!("invalid config (TOML: {e}; JSON: {je})")))
        }
        Err(e) => Err(Error::Config(format!("invalid TOML config: {e}"))),
    }
}

/// Loads a config file, or the defaults when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Error> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    parse(&text, json)
}

/// Hex SHA-256 of the config's canonical JSON form.
pub fn hash<T: Serialize>(config: &T) -> Result<String, Error> {
    let value = serde_json::to_value(config)?;
    let digest = Sha256::digest(serde_json::to_vec(&value)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
