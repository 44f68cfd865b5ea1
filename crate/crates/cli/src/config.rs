//! Tool configuration document and flag overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use curekit::augment::AugPolicy;
use curekit::curriculum::CurriculumConfig;
use curekit::evalkit::ParseMode;
use curekit::judge::EndpointConfig;
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

/// Input files named by the config; subcommand flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub records: Option<PathBuf>,
    pub triplets: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolConfig {
    pub version: u32,
    pub seed: Option<u64>,
    pub paths: Paths,
    pub curriculum: CurriculumConfig,
    pub augment: AugPolicy,
    pub judge: EndpointConfig,
    pub parse_mode: ParseMode,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig {
            version: CONFIG_VERSION,
            seed: None,
            paths: Paths::default(),
            curriculum: CurriculumConfig::default(),
            augment: AugPolicy::default(),
            judge: EndpointConfig::default(),
            parse_mode: ParseMode::Strict,
        }
    }
}

impl ToolConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(ToolConfig::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ToolConfig = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if cfg.version != CONFIG_VERSION {
            bail!("unsupported config version {} (expected {CONFIG_VERSION})", cfg.version);
        }
        Ok(cfg)
    }

    /// sha256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        curekit::io::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
