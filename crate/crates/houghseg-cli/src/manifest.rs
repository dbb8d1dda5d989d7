//! Run manifests: a JSON snapshot of what a command did, written atomically
//! (temp file + rename) on completion.

use std::path::{Path, PathBuf};
use std::time::Duration;

use houghseg::{Error, Result};
use serde::Serialize;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_time_secs: 0.0,
        }
    }

    pub fn write(mut self, path: &Path, elapsed: Duration) -> Result<()> {
        self.wall_time_secs = elapsed.as_secs_f64();
        let bytes = serde_json::to_vec_pretty(&self)
            .map_err(|e| Error::Format(format!("manifest serialisation: {e}")))?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
