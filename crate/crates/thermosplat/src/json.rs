//! JSON documents: scene, config and the small sidecars.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thermosplat_core::config::Config;
use thermosplat_core::scene::Scene;

use crate::error::{Error, Result};

/// Parses `path`; errors carry the dotted field path of the first violation.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    from_str(path, &text)
}

pub fn from_str<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        if at == "." {
            Error::format(path, e.inner().to_string())
        } else {
            Error::format(path, format!("at `{at}`: {}", e.inner()))
        }
    })
}

/// Pretty JSON with a trailing newline. Floats use the shortest text that
/// reads back to the same bits.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let scene: Scene = read_json(path)?;
    scene.validate().map_err(|e| Error::format(path, e.to_string()))?;
    Ok(scene)
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    scene.validate()?;
    write_json(path, scene)
}

/// Defaults overlaid with the file at `path`, if any.
pub fn load_config(path: Option<&Path>) -> Result<Config> {
    let cfg = match path {
        Some(p) => {
            if !p.is_file() {
                return Err(Error::format(p, "config file not found"));
            }
            read_json(p)?
        }
        None => Config::default(),
    };
    Ok(cfg)
}

/// Every leaf of the default config as `(dotted.key, json value)`.
pub fn config_keys() -> Vec<(String, String)> {
    let value = serde_json::to_value(Config::default()).expect("default config serializes");
    let mut out = Vec::new();
    flatten("", &value, &mut out);
    out
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, child, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}
