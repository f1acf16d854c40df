//! The flat run configuration shared by `train` and `verify`.
//!
//! A configuration document is TOML with one `key = value` per line. Every
//! key is optional; the defaults below apply to anything left out, and
//! unknown keys are rejected. `--set key=value` overrides are applied after
//! the file is read.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use so3krates::model::ModelConfig;
use so3krates::parallel::Execution;
use so3krates::training::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Feature width.
    pub features: usize,
    pub n_layers: usize,
    pub l_max: usize,
    /// Euclidean cutoff in Angstrom.
    pub r_cut: f64,
    /// Radial basis size.
    pub n_rbf: usize,
    /// Feature attention heads.
    pub heads: usize,
    pub kappa: f64,
    pub poly_order: u32,
    pub use_nonlocal: bool,
    pub use_spherical_filter: bool,
    pub radial_hidden: usize,
    pub spherical_hidden: usize,

    /// Force weight of the loss.
    pub beta: f64,
    pub lr: f64,
    pub decay_factor: f64,
    pub decay_interval: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub valid_every: usize,
    /// Evaluate batch members on the thread pool.
    pub parallel: bool,

    /// Directory with `train.xyz` and optionally `valid.xyz`.
    pub data_dir: PathBuf,
    /// Run directory for checkpoints, metrics and the echoed config.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        RunConfig {
            features: m.features,
            n_layers: m.n_layers,
            l_max: m.l_max,
            r_cut: m.r_cut,
            n_rbf: m.n_rbf,
            heads: m.heads,
            kappa: m.kappa,
            poly_order: m.poly_order,
            use_nonlocal: m.use_nonlocal,
            use_spherical_filter: m.use_spherical_filter,
            radial_hidden: m.radial_hidden,
            spherical_hidden: m.spherical_hidden,
            beta: t.beta,
            lr: t.lr,
            decay_factor: t.decay_factor,
            decay_interval: t.decay_interval,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: t.seed,
            valid_every: t.valid_every,
            parallel: true,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("run"),
        }
    }
}

impl RunConfig {
    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            features: self.features,
            n_layers: self.n_layers,
            l_max: self.l_max,
            r_cut: self.r_cut,
            n_rbf: self.n_rbf,
            heads: self.heads,
            kappa: self.kappa,
            poly_order: self.poly_order,
            use_nonlocal: self.use_nonlocal,
            use_spherical_filter: self.use_spherical_filter,
            radial_hidden: self.radial_hidden,
            spherical_hidden: self.spherical_hidden,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            beta: self.beta,
            lr: self.lr,
            decay_factor: self.decay_factor,
            decay_interval: self.decay_interval,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            valid_every: self.valid_every,
            execution: if self.parallel {
                Execution::Parallel
            } else {
                Execution::Sequential
            },
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model().validate()?;
        self.train().validate()?;
        Ok(())
    }

    /// Parses a configuration document.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self, CliError> {
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults) and applies `key=value`
    /// overrides. Override values are read as TOML values, falling back to
    /// plain strings.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override {item:?} is not key=value")))?;
            let key = key.trim();
            let value = value.trim();
            let parsed = format!("v = {value}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(value.to_string()));
            table.insert(key.to_string(), parsed);
        }
        Self::from_table(table)
    }

    /// The effective configuration as a TOML document with every key.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain fields serialize")
    }

    /// SHA-256 of [`RunConfig::to_toml`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}
