//! Run manifests: enough to reproduce any run bit-for-bit given the inputs.

use std::path::Path;

use anyhow::Result;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_snapshot: serde_json::Value,
    pub input_files: Vec<String>,
    pub started: String,
    pub finished: String,
    pub exit_code: i32,
}

pub struct RunClock {
    started: String,
}

impl RunClock {
    pub fn start() -> Self {
        Self {
            started: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn finish<C: Serialize>(
        self,
        config: &C,
        input_files: Vec<String>,
        exit_code: i32,
    ) -> Result<RunManifest> {
        Ok(RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_snapshot: serde_json::to_value(config)?,
            input_files,
            started: self.started,
            finished: chrono::Utc::now().to_rfc3339(),
            exit_code,
        })
    }
}

pub fn write_manifest(manifest: &RunManifest, out_dir: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(out_dir.join("manifest.json"), text + "\n")?;
    Ok(())
}
