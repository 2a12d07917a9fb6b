use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{CategoricalEncoding, SyntheticSpec};
use crate::error::{Error, Result};
use crate::graph::{Mode, ModelConfig};

fn default_buckets() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Generate in memory from a spec.
    Synthetic(SyntheticSpec),
    /// Splits previously written by `gen-data`.
    SyntheticCsv {
        dir: PathBuf,
        #[serde(default = "default_buckets")]
        sparse_buckets: usize,
        #[serde(default = "default_buckets")]
        user_vocab: usize,
    },
    /// Directory holding `census-income.data` and `census-income.test`.
    Census {
        dir: PathBuf,
        #[serde(default)]
        encoding: CategoricalEncoding,
    },
}

impl DatasetSource {
    pub fn tag(&self) -> &'static str {
        match self {
            DatasetSource::Synthetic(_) => "synthetic",
            DatasetSource::SyntheticCsv { .. } => "synthetic_csv",
            DatasetSource::Census { .. } => "census",
        }
    }

    pub fn default_epochs(&self) -> usize {
        match self {
            DatasetSource::Census { .. } => 10,
            _ => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub model: ModelConfig,
    /// Defaults to 5 for synthetic data and 10 for census.
    pub epochs: Option<usize>,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<u64>,
    pub batch_size: usize,
    /// Extra test evaluations every this many steps; epochs always end with one.
    pub eval_every: Option<u64>,
    /// Record telemetry every this many steps.
    pub telemetry_stride: u64,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Synthetic(SyntheticSpec::default()),
            model: ModelConfig::default(),
            epochs: None,
            max_steps: None,
            batch_size: 256,
            eval_every: None,
            telemetry_stride: 1,
            out: PathBuf::from("runs"),
            seeds: vec![0],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or_else(|| self.dataset.default_epochs())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        if self.batch_size == 0 || self.epochs() == 0 || self.telemetry_stride == 0 {
            return Err(Error::config("batch_size, epochs and telemetry_stride must be positive"));
        }
        if self.eval_every == Some(0) || self.max_steps == Some(0) {
            return Err(Error::config("eval_every and max_steps must be positive when set"));
        }
        if self.model.mode.uses_ppnet() {
            let has_user = match &self.dataset {
                DatasetSource::Synthetic(spec) => spec.user_id_column,
                DatasetSource::SyntheticCsv { .. } => true, // checked against the file header on load
                DatasetSource::Census { .. } => false,
            };
            if !has_user {
                return Err(Error::config(format!(
                    "mode {} needs a personalized id column; the {} dataset has none \
                     (synthetic data can add one with user_id_column)",
                    self.model.mode,
                    self.dataset.tag()
                )));
            }
        }
        Ok(())
    }

    /// The config a single-seed run actually uses.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seeds = vec![seed];
        c.model.seed = seed;
        c
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed-{seed}"))
    }
}

/// Command-line values that replace config file entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub rho: Option<f64>,
    pub cos_theta: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(m) = self.mode {
            cfg.model.mode = m;
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(g) = self.gamma {
            cfg.model.gamma = g;
        }
        if let Some(r) = self.rho {
            cfg.model.rho = r;
        }
        if let Some(c) = self.cos_theta {
            match &mut cfg.dataset {
                DatasetSource::Synthetic(spec) => spec.cos_theta = c,
                other => {
                    return Err(Error::config(format!(
                        "cos_theta only applies to generated synthetic data, not {}",
                        other.tag()
                    )))
                }
            }
        }
        Ok(())
    }
}
