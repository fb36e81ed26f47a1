//! `--config FILE` support: a TOML table per subcommand whose keys are the
//! long flag names. Flags given on the command line win.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Reads `[section]` of a TOML file as JSON, or an empty table.
pub fn load_section(path: &Path, section: &str) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let doc: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let Some(v) = doc.get(section) else {
        return Ok(Map::new());
    };
    let v = serde_json::to_value(v)?;
    match v {
        Value::Object(m) => Ok(m),
        _ => bail!("config {}: [{section}] must be a table", path.display()),
    }
}

/// Overlays command-line values (non-null) on config values.
pub fn merge<T: Serialize + DeserializeOwned>(cli: &T, config: Map<String, Value>, section: &str) -> Result<T> {
    let Value::Object(cli_map) = serde_json::to_value(cli)? else {
        bail!("arguments must serialize to a table");
    };
    for k in config.keys() {
        if !cli_map.contains_key(k) {
            bail!("config [{section}]: unknown key `{k}`");
        }
    }
    let mut out = config;
    for (k, v) in cli_map {
        let keep_config = v.is_null() || (v == Value::Bool(false) && out.contains_key(&k));
        if !keep_config {
            out.insert(k, v);
        } else {
            out.entry(k).or_insert(Value::Null);
        }
    }
    serde_json::from_value(Value::Object(out)).with_context(|| format!("config [{section}]"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    #[serde(rename_all = "kebab-case")]
    struct A {
        blur: Option<f64>,
        gamma: Option<f64>,
        visible_only: bool,
    }

    #[test]
    fn cli_overrides_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[render]\nblur = 40\ngamma = 1.8\nvisible-only = true\n").unwrap();
        let cfg = load_section(&p, "render").unwrap();
        let cli = A {
            blur: Some(10.0),
            gamma: None,
            visible_only: false,
        };
        let m = merge(&cli, cfg, "render").unwrap();
        assert_eq!(
            m,
            A {
                blur: Some(10.0),
                gamma: Some(1.8),
                visible_only: true
            }
        );
    }

    #[test]
    fn unknown_key_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[render]\nblurr = 40\n").unwrap();
        let cfg = load_section(&p, "render").unwrap();
        let cli = A {
            blur: None,
            gamma: None,
            visible_only: false,
        };
        let e = merge(&cli, cfg, "render").unwrap_err();
        assert!(e.to_string().contains("blurr"));
    }
}
