use std::fs;
use std::path::{Path, PathBuf};

use boed_core::engine::{CampaignConfig, EarlyStop, RunHeader, SelectionMode, Strategy};
use boed_core::metrics::PredictiveOptions;
use boed_core::models::ModelConfig;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{CliError, CliResult};

/// Training settings that replace the per-model defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub steps: Option<usize>,
    pub batch: Option<usize>,
    pub learning_rate: Option<f64>,
    pub final_learning_rate: Option<f64>,
    /// Absent keeps the model default, `null` disables early stopping.
    #[serde(default, deserialize_with = "present")]
    pub early_stop: Option<Option<EarlyStop>>,
    pub prior_pool: Option<usize>,
}

fn present<'de, D, T>(d: D) -> Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    T::deserialize(d).map(Some)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictiveSection {
    pub mixture: Option<usize>,
    pub outer: Option<usize>,
    /// Settings at which `compare` evaluates the predictive KL.
    pub grid_points: Option<usize>,
}

/// The JSON configuration read by `run` and `compare`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Strategy for `run`.
    #[serde(default)]
    pub strategy: Option<Strategy>,
    /// Strategies for `compare`.
    #[serde(default)]
    pub strategies: Vec<Strategy>,
    pub steps: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainOverrides,
    pub grid_points: Option<usize>,
    pub eig_batch: Option<usize>,
    pub selection: Option<SelectionMode>,
    pub info_gain_samples: Option<usize>,
    pub summary_samples: Option<usize>,
    pub snapshots: Option<bool>,
    #[serde(default)]
    pub predictive: PredictiveSection,
    /// Cumulative information gain that `compare` counts steps to.
    pub ig_threshold: Option<f64>,
    pub out: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// What a config file resolves to: either a config or the effective
/// configuration embedded in an earlier run's header.
#[derive(Clone, Debug)]
pub enum ConfigSource {
    Run(Box<RunConfig>),
    Header(Box<CampaignConfig>),
}

fn parse_error(path: &Path, e: serde_json::Error) -> CliError {
    // serde_json reports "... at line L column C"
    CliError::Config(format!("{}: {e}", path.display()))
}

impl ConfigSource {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> CliResult<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error(origin, e))?;
        if value.get("format").is_some() {
            let header: RunHeader = serde_json::from_value(value).map_err(|e| parse_error(origin, e))?;
            return Ok(ConfigSource::Header(Box::new(header.config)));
        }
        // Re-parse the text so errors carry line and column.
        let config: RunConfig = serde_json::from_str(text).map_err(|e| parse_error(origin, e))?;
        config.validate()?;
        Ok(ConfigSource::Run(Box::new(config)))
    }

    /// Campaigns for `run`, one per seed.
    pub fn run_plan(&self) -> CliResult<Vec<CampaignConfig>> {
        match self {
            ConfigSource::Header(c) => Ok(vec![(**c).clone()]),
            ConfigSource::Run(r) => {
                let strategy = r
                    .strategy
                    .ok_or_else(|| CliError::Config("`run` needs a `strategy`".into()))?;
                r.seeds.iter().map(|&s| r.campaign(strategy, s)).collect()
            }
        }
    }

    pub fn out_dir(&self) -> Option<&Path> {
        match self {
            ConfigSource::Run(r) => r.out.as_deref(),
            ConfigSource::Header(_) => None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        match ConfigSource::parse(text, Path::new("<config>"))? {
            ConfigSource::Run(r) => Ok(*r),
            ConfigSource::Header(_) => Err(CliError::Config("expected a run config, found a run header".into())),
        }
    }

    fn validate(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("`seeds` must not be empty".into()));
        }
        let mut unique = self.seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != self.seeds.len() {
            return Err(CliError::Config("`seeds` contains duplicates".into()));
        }
        if let Some(t) = self.ig_threshold {
            if !(t > 0.0) {
                return Err(CliError::Config("`ig_threshold` must be positive".into()));
            }
        }
        self.model.build()?;
        Ok(())
    }

    /// The effective campaign configuration for one strategy and seed.
    pub fn campaign(&self, strategy: Strategy, seed: u64) -> CliResult<CampaignConfig> {
        let mut c = CampaignConfig::new(self.model.clone(), strategy, self.steps, seed);
        let t = &self.train;
        if let Some(v) = t.steps {
            c.train.steps = v;
        }
        if let Some(v) = t.batch {
            c.train.batch = v;
        }
        if let Some(v) = t.learning_rate {
            c.train.learning_rate = v;
        }
        if t.final_learning_rate.is_some() {
            c.train.final_learning_rate = t.final_learning_rate;
        }
        if let Some(v) = &t.early_stop {
            c.train.early_stop = v.clone();
        }
        if let Some(v) = t.prior_pool {
            c.train.prior_pool = v;
        }
        if let Some(v) = self.grid_points {
            c.grid_points = v;
        }
        if let Some(v) = self.eig_batch {
            c.eig_batch = v;
        }
        if let Some(v) = self.selection {
            c.selection = v;
        }
        if let Some(v) = self.info_gain_samples {
            c.info_gain_samples = v;
        }
        if let Some(v) = self.summary_samples {
            c.summary_samples = v;
        }
        if let Some(v) = self.snapshots {
            c.snapshots = v;
        }
        // Surface invalid combinations as config errors before any work.
        boed_core::engine::Campaign::new(c.clone(), boed_core::ExecMode::Sequential)?;
        Ok(c)
    }

    pub fn predictive_options(&self) -> PredictiveOptions {
        let d = PredictiveOptions::default();
        PredictiveOptions {
            mixture: self.predictive.mixture.unwrap_or(d.mixture),
            outer: self.predictive.outer.unwrap_or(d.outer),
        }
    }
}
