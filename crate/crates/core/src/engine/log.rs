use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::campaign::CampaignConfig;
use super::chain::{ChainRecord, PriorChain};
use crate::error::{Error, Result};
use crate::flow::ConditionalFlow;
use crate::metrics::PosteriorSummary;
use crate::models::{ExperimentModel, GaussianPrior};

pub const HEADER_FILE: &str = "header.json";
pub const LOG_FILE: &str = "log.jsonl";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const FORMAT: &str = "boed-run/1";

/// One line of `log.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based measurement index.
    pub step: usize,
    pub x: f64,
    pub y: Vec<f64>,
    /// `[x, eig]` pairs; empty unless the step scanned settings.
    pub eig_grid: Vec<[f64; 2]>,
    #[serde(default)]
    pub eig_stderr: Vec<f64>,
    pub realized_ig: f64,
    pub realized_ig_stderr: f64,
    pub posterior_mean: Vec<f64>,
    pub posterior_std: Vec<f64>,
    pub posterior_q05: Vec<f64>,
    pub posterior_q50: Vec<f64>,
    pub posterior_q95: Vec<f64>,
    pub loss_final: f64,
    /// Loss means over consecutive 500-iteration windows never increased.
    pub loss_monotone: bool,
    pub train_steps: usize,
    pub restarted: bool,
    pub wall_s: f64,
}

/// Contents of `header.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub format: String,
    /// Effective configuration with all defaults resolved.
    pub config: CampaignConfig,
    pub model: String,
    pub param_dim: usize,
    pub setting_domain: (f64, f64),
    pub prior: GaussianPrior,
    pub prior_summary: PosteriorSummary,
    /// Modelling choices not fixed by the method, with the alternatives.
    pub choices: Vec<String>,
    pub started_unix_s: u64,
}

pub fn snapshot_stem(dir: &Path, step: usize) -> PathBuf {
    dir.join(SNAPSHOT_DIR).join(format!("step_{step:04}"))
}

/// Re-serializes a log line without its wall-clock field.
pub fn without_timing(line: &str) -> Result<String> {
    let mut v: serde_json::Value = serde_json::from_str(line)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("wall_s");
    }
    Ok(serde_json::to_string(&v)?)
}

/// A run directory read back from disk.
#[derive(Clone, Debug)]
pub struct RunLog {
    pub dir: PathBuf,
    pub header: RunHeader,
    pub records: Vec<StepRecord>,
}

impl RunLog {
    /// Opens a run directory, or the directory holding a given `log.jsonl`.
    pub fn open(path: &Path) -> Result<Self> {
        let dir = if path.is_dir() {
            path.to_path_buf()
        } else {
            path.parent().map(Path::to_path_buf).unwrap_or_default()
        };
        let header: RunHeader = serde_json::from_slice(&fs::read(dir.join(HEADER_FILE))?)?;
        if header.format != FORMAT {
            return Err(Error::invalid(format!("unsupported run format `{}`", header.format)));
        }
        let file = fs::File::open(dir.join(LOG_FILE))?;
        let mut records = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Ok(RunLog { dir, header, records })
    }

    pub fn model(&self) -> Result<Box<dyn ExperimentModel>> {
        self.header.config.model.build()
    }

    pub fn true_lambda(&self) -> &[f64] {
        self.header.config.model.true_lambda()
    }

    /// The flow trained at `step` (1-based), before conditioning.
    pub fn flow_at(&self, step: usize) -> Result<ConditionalFlow> {
        let stem = snapshot_stem(&self.dir, step);
        if !stem.with_extension("flow").exists() {
            return Err(Error::Snapshot(format!("no snapshot for step {step} in {}", self.dir.display())));
        }
        ConditionalFlow::load(&stem)
    }

    /// The prior after `step` measurements.
    pub fn chain_at(&self, step: usize) -> Result<PriorChain> {
        if step > self.records.len() {
            return Err(Error::invalid(format!(
                "step {step} requested, log has {} steps",
                self.records.len()
            )));
        }
        let mut chain = PriorChain::new(self.header.prior.clone());
        for rec in &self.records[..step] {
            let flow = Arc::new(self.flow_at(rec.step)?);
            chain.push(ChainRecord::new(flow, rec.x, rec.y.clone()))?;
        }
        Ok(chain)
    }
}
