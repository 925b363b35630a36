//! `--config` files: a JSON object whose keys mirror the long flag names
//! (with `_` for `-`). Keys may sit at the top level or under a section named
//! after the subcommand; flags given on the command line win.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use pixelpde_core::Error;

pub fn load(path: &Path) -> Result<Value, Error> {
    let text = std::fs::read_to_string(path)?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
    }
    Ok(v)
}

/// Overlays the non-null fields of `cli` on the config keys for `section`.
pub fn merge<T: Serialize + DeserializeOwned>(cli: &T, config: Option<&Value>, section: &str) -> Result<T, Error> {
    let mut base = Map::new();
    if let Some(Value::Object(top)) = config {
        for (k, v) in top {
            if !v.is_object() {
                base.insert(k.clone(), v.clone());
            }
        }
        if let Some(Value::Object(sec)) = top.get(section) {
            for (k, v) in sec {
                base.insert(k.clone(), v.clone());
            }
        }
    }
    if let Value::Object(over) = serde_json::to_value(cli)? {
        for (k, v) in over {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| Error::Config(format!("configuration: {e}")))
}
