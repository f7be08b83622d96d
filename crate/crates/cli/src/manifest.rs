//! Run manifest written alongside outputs.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the input file bytes; stable for identical inputs.
    pub config_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub tool_version: String,
    pub duration_seconds: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, input: &Path) -> Result<(Self, Instant), CliError> {
        let bytes = std::fs::read(input)
            .map_err(|e| CliError::io(&format!("reading {}", input.display()), e))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok((
            Self {
                command: command.to_string(),
                config_digest: format!("sha256:{hex}"),
                seed: None,
                threads: None,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                duration_seconds: 0.0,
                outputs: Vec::new(),
            },
            Instant::now(),
        ))
    }

    pub fn finish(mut self, started: Instant, out_dir: &Path) -> Result<(), CliError> {
        self.duration_seconds = started.elapsed().as_secs_f64();
        let path = out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self)
            .map_err(|e| CliError::Runtime(format!("manifest: {e}")))?;
        std::fs::write(&path, text + "\n")
            .map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
    }
}
