//! Output files: provenance headers, checksums and overwrite protection.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tms_core::{CostTable, SimConfig};

/// Bad input from the user: missing seed, existing output, unreadable
/// config. Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Who wrote a file, with which parameters and seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(cfg: &SimConfig, seed: Option<u64>) -> Self {
        Provenance {
            tool: "tms".into(),
            version: tms_core::VERSION.into(),
            config_hash: sha256_hex(cfg.to_flat().to_canonical_string().as_bytes()),
            seed,
        }
    }

    /// Hash over the simulation config and the cost table together.
    pub fn with_cost_table(cfg: &SimConfig, table: &CostTable) -> Self {
        let mut text = cfg.to_flat().to_canonical_string();
        text.push_str(&table.to_flat().to_canonical_string());
        Provenance {
            config_hash: sha256_hex(text.as_bytes()),
            ..Self::new(cfg, None)
        }
    }

    /// First line of every CSV written by the tool.
    pub fn csv_comment(&self) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        format!(
            "# {} {} config={} seed={}\n",
            self.tool, self.version, self.config_hash, seed
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory that refuses to clobber files unless forced.
pub struct OutDir {
    dir: PathBuf,
    force: bool,
}

impl OutDir {
    pub fn new(dir: &Path, force: bool) -> Self {
        OutDir {
            dir: dir.to_path_buf(),
            force,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Fails before any work is done if an output already exists.
    pub fn claim(&self, names: &[&str]) -> Result<()> {
        if self.force {
            return Ok(());
        }
        for name in names {
            let p = self.path(name);
            if p.exists() {
                return Err(usage(format!(
                    "{} already exists (pass --force to overwrite)",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)
            .with_context(|| format!("creating {}", self.dir.display()))?;
        let p = self.path(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

/// A CSV body prefixed by the provenance comment.
pub fn csv_with_header(
    prov: &Provenance,
    body: impl FnOnce(&mut Vec<u8>) -> tms_core::Result<()>,
) -> Result<Vec<u8>> {
    let mut buf = prov.csv_comment().into_bytes();
    body(&mut buf)?;
    Ok(buf)
}

pub fn load_config(path: Option<&Path>) -> Result<SimConfig> {
    match path {
        None => Ok(SimConfig::defaults()),
        Some(p) => {
            if !p.is_file() {
                return Err(usage(format!("config file {} not found", p.display())));
            }
            SimConfig::load(p).with_context(|| format!("loading {}", p.display()))
        }
    }
}

pub fn require_seed(seed: Option<u64>, command: &str) -> Result<u64> {
    seed.ok_or_else(|| usage(format!("`tms {command}` needs --seed (or TMS_SEED)")))
}
