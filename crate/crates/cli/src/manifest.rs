//! Run manifest: enough provenance to rerun a command and audit its output.
//!
//! Every bundle gets a `manifest.json` recording the subcommand, every knob
//! the run used (flag-provided or default), digests of all file inputs, the
//! seed, and the tool version. Identical manifests (modulo the two
//! wall-clock fields) imply identical bundles.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Effective configuration, one entry per knob.
    pub config: BTreeMap<String, String>,
    /// SHA-256 over `config` rendered as `key=value` lines in key order.
    pub config_digest: String,
    /// SHA-256 per input file, keyed by the path as given.
    pub input_digests: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Wall-clock bounds (Unix seconds); the only fields that legitimately
    /// differ between reruns of the same command.
    pub started_unix: f64,
    pub finished_unix: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config: BTreeMap::new(),
            config_digest: String::new(),
            input_digests: BTreeMap::new(),
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: now_unix(),
            finished_unix: 0.0,
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    /// Digest one input file into the manifest.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.input_digests
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Seal the manifest and write it as `manifest.json` in `out_dir`.
    pub fn write(mut self, out_dir: &Path) -> Result<()> {
        let rendered: String = self
            .config
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        self.config_digest = sha256_hex(rendered.as_bytes());
        self.finished_unix = now_unix();
        let json = serde_json::to_string_pretty(&self)?;
        let path = out_dir.join("manifest.json");
        fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
