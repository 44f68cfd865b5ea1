//! Atomic artifact writes with a run manifest beside each output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use curekit::io::sha256_hex;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    /// sha256 of each input file.
    pub inputs: BTreeMap<String, String>,
    pub output_sha256: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Writes via a temporary file in the target directory and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Context shared by every artifact of one invocation.
pub struct Run {
    pub command: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
}

impl Run {
    pub fn input(&mut self, path: &Path) -> anyhow::Result<Vec<u8>> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    /// The output goes to `out` plus its manifest, or to stdout without one.
    pub fn emit(&self, out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
        let Some(out) = out else {
            std::io::stdout().write_all(bytes)?;
            return Ok(());
        };
        write_atomic(out, bytes)?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.clone(),
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            inputs: self.inputs.clone(),
            output_sha256: sha256_hex(bytes),
            created_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        let mut text = serde_json::to_vec_pretty(&manifest)?;
        text.push(b'\n');
        write_atomic(&manifest_path(out), &text)
    }
}
