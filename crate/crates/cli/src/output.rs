//! Output directory handling and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Collects every file a command writes so the manifest can list them.
pub struct OutputDir {
    root: PathBuf,
    artifacts: Vec<String>,
}

#[derive(Serialize)]
struct Artifact {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Seeds {
    synth: u64,
    groups: u64,
    train: u64,
}

#[derive(Serialize)]
struct Versions {
    poplab: &'static str,
    manifest_format: u32,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    extra_config_hashes: Vec<String>,
    seeds: Seeds,
    versions: Versions,
    artifacts: Vec<Artifact>,
    /// Seconds since the Unix epoch; the only nondeterministic field.
    created_unix: u64,
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)
            .with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.record(name);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Registers a file written by some other routine.
    pub fn record(&mut self, name: &str) {
        self.artifacts.push(name.to_owned());
    }

    /// Writes `config.json` and `manifest.json`. `extra` holds the hashes of
    /// any further configs the command consumed.
    pub fn finish(
        mut self,
        command: &str,
        config: &ExperimentConfig,
        extra: &[&ExperimentConfig],
    ) -> Result<()> {
        self.write_json("config.json", config)?;
        let mut artifacts = Vec::with_capacity(self.artifacts.len());
        for name in &self.artifacts {
            let path = self.path(name);
            let bytes =
                fs::read(&path).with_context(|| format!("reading back {}", path.display()))?;
            artifacts.push(Artifact {
                path: name.clone(),
                sha256: hex_sha256(&bytes),
            });
        }
        let manifest = Manifest {
            command,
            config_hash: config.hash(),
            extra_config_hashes: extra.iter().map(|c| c.hash()).collect(),
            seeds: Seeds {
                synth: config.synth.seed,
                groups: config.groups.seed,
                train: config.train.seed,
            },
            versions: Versions {
                poplab: env!("CARGO_PKG_VERSION"),
                manifest_format: 1,
            },
            artifacts,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.path("manifest.json");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Empty cell for `None`; otherwise the shortest round-trip form, switching
/// to exponent notation for very small or large magnitudes.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}
