//! Optional TOML configuration. Command-line flags override every value.
//!
//! ```toml
//! [train]
//! profile = "desk"          # or "full"
//! synthetic = 256
//! validation = 32
//! [train.plan]              # any TrainPlan field, applied over the profile
//! batch_size = 4
//! [train.generator]         # any GeneratorSpec field
//! upsampler = "nearest_then_conv"
//! [train.discriminator]
//! head = "gap"
//!
//! [serve]
//! addr = "127.0.0.1:8080"
//! models = "models"
//!
//! [bench]
//! runs = 50
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tilesr_core::models::{DiscriminatorSpec, GeneratorSpec, Upsampler};
use tilesr_core::TrainPlan;

use crate::server::ServeConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Narrow networks and short schedules for CPU training.
    #[default]
    Desk,
    /// Full-width networks and the full-length schedule.
    Full,
}

impl Profile {
    pub fn plan(self) -> TrainPlan {
        match self {
            Profile::Desk => TrainPlan::desk(),
            Profile::Full => TrainPlan::full(),
        }
    }

    pub fn generator(self, upsampler: Upsampler, use_bn: bool) -> GeneratorSpec {
        match self {
            Profile::Desk => GeneratorSpec::desk(upsampler, use_bn),
            Profile::Full => GeneratorSpec {
                upsampler,
                use_bn,
                ..GeneratorSpec::default()
            },
        }
    }

    pub fn discriminator(self) -> DiscriminatorSpec {
        match self {
            Profile::Desk => DiscriminatorSpec::desk(),
            Profile::Full => DiscriminatorSpec::gap(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub profile: Profile,
    /// Directory of RGB PNGs or a `.jsonl` channel manifest.
    pub data: Option<PathBuf>,
    /// Synthetic image count when `data` is absent.
    pub synthetic: Option<usize>,
    pub validation: Option<usize>,
    pub out: Option<PathBuf>,
    pub plan: toml::Table,
    pub generator: toml::Table,
    pub discriminator: toml::Table,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSection {
    pub runs: usize,
    pub warmup: usize,
    pub threads: usize,
    pub tile: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        let d = tilesr_core::bench::BenchOptions::default();
        BenchSection {
            runs: d.runs,
            warmup: d.warmup,
            threads: d.threads,
            tile: 64,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub train: TrainSection,
    pub serve: ServeConfig,
    pub bench: BenchSection,
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// `base` with every key of `patch` replaced.
pub fn overlay<T: Serialize + DeserializeOwned>(base: &T, patch: &toml::Table) -> anyhow::Result<T> {
    let mut table = toml::Table::try_from(base).context("serializing defaults")?;
    for (k, v) in patch {
        table.insert(k.clone(), v.clone());
    }
    toml::Value::Table(table).try_into().context("applying configuration")
}
