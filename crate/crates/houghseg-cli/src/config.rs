//! Optional flat key=value config file. Precedence: command-line flags,
//! then config file, then built-in defaults.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use houghseg::{Error, Result};

pub struct FileConfig {
    map: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::Format(format!(
                        "{}:{}: expected `key = value`",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                map.insert(k.trim().replace('-', "_"), v.trim().to_string());
            }
        }
        Ok(FileConfig { map })
    }

    /// Flag value, else config-file value, else the default.
    pub fn resolve<T: FromStr + Clone>(&self, flag: &Option<T>, key: &str, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v.clone());
        }
        match self.map.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map_err(|_| Error::Config(format!("config key `{key}`: bad value `{raw}`"))),
            None => Ok(default),
        }
    }

    /// Flag value, else config-file value, required.
    pub fn require<T: FromStr + Clone>(&self, flag: &Option<T>, key: &str) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v.clone());
        }
        match self.map.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map_err(|_| Error::Config(format!("config key `{key}`: bad value `{raw}`"))),
            None => Err(Error::Config(format!(
                "missing required option `--{}` (or config key `{key}`)",
                key.replace('_', "-")
            ))),
        }
    }
}
