use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::chain::{ChainRecord, PriorChain};
use super::log::{snapshot_stem, RunHeader, StepRecord, FORMAT, HEADER_FILE, LOG_FILE, SNAPSHOT_DIR};
use super::scan::{eig_scan, linspace, EigCurve};
use super::strategy::{select_x, Strategy};
use super::train::{train_posterior, TrainConfig, TrainReport, XSource};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::flow::{ConditionalFlow, FlowConfig};
use crate::metrics::{posterior_summary, realized_info_gain, PosteriorSummary};
use crate::models::{ExperimentModel, ModelConfig};
use crate::rng::{Purpose, StreamKey};

/// How the active strategy picks its setting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Amortized training over the whole domain, then an EIG grid scan.
    #[default]
    Grid,
    /// Adam on the setting jointly with the flow. Needs reparameterizable
    /// observations.
    Gradient,
}

/// Everything that determines a campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub model: ModelConfig,
    pub strategy: Strategy,
    pub steps: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub grid_points: usize,
    pub eig_batch: usize,
    pub selection: SelectionMode,
    pub info_gain_samples: usize,
    pub summary_samples: usize,
    pub snapshots: bool,
}

impl CampaignConfig {
    /// Per-model defaults: cavity 241 grid points, qubit 101, conjugate 41.
    pub fn new(model: ModelConfig, strategy: Strategy, steps: usize, seed: u64) -> Self {
        let (train, grid_points) = match model {
            ModelConfig::Cavity(_) => (TrainConfig::cavity(), 241),
            ModelConfig::Qubit(_) => (TrainConfig::qubit(), 101),
            ModelConfig::Conjugate(_) => (TrainConfig::conjugate(), 41),
        };
        CampaignConfig {
            model,
            strategy,
            steps,
            seed,
            train,
            grid_points,
            eig_batch: 1024,
            selection: SelectionMode::Grid,
            info_gain_samples: 4096,
            summary_samples: 4096,
            snapshots: true,
        }
    }

    fn validate(&self, model: &dyn ExperimentModel) -> Result<()> {
        self.strategy.validate(model.setting_domain())?;
        if self.grid_points < 2 || self.eig_batch < 2 || self.info_gain_samples < 2 {
            return Err(Error::invalid("grid_points, eig_batch and info_gain_samples must be at least 2"));
        }
        if self.summary_samples < 100 {
            return Err(Error::invalid("summary_samples must be at least 100"));
        }
        if self.selection == SelectionMode::Gradient {
            let probe = vec![0.0; model.param_dim()];
            let noise = vec![0.0; model.observation().dim()];
            if model.reparameterized(&probe, model.setting_domain().0, &noise).is_none() {
                return Err(Error::invalid(format!(
                    "gradient selection needs reparameterizable observations; {} has none",
                    model.name()
                )));
            }
        }
        Ok(())
    }
}

/// Diagnostics of one measurement step beyond what goes in the log.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub record: StepRecord,
    pub curve: Option<EigCurve>,
    pub report: TrainReport,
    pub flow: Arc<ConditionalFlow>,
}

/// An in-memory campaign: prior chain, warm-start flow and history.
pub struct Campaign {
    config: CampaignConfig,
    model: Box<dyn ExperimentModel>,
    truth: Vec<f64>,
    chain: PriorChain,
    flow: ConditionalFlow,
    history: Vec<StepRecord>,
    exec: ExecMode,
}

impl Campaign {
    pub fn new(config: CampaignConfig, exec: ExecMode) -> Result<Self> {
        let model = config.model.build()?;
        config.validate(model.as_ref())?;
        let prior = model.prior();
        let flow = ConditionalFlow::init(
            FlowConfig::new(model.param_dim()),
            model.context_spec(),
            prior.standardizer(),
            config.seed,
        )?;
        Ok(Campaign {
            truth: config.model.true_lambda().to_vec(),
            chain: PriorChain::new(prior),
            model,
            flow,
            config,
            history: Vec::new(),
            exec,
        })
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    pub fn model(&self) -> &dyn ExperimentModel {
        self.model.as_ref()
    }

    pub fn chain(&self) -> &PriorChain {
        &self.chain
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    fn key(&self, purpose: Purpose) -> StreamKey {
        StreamKey::new(self.config.seed, self.chain.step() as u64, purpose)
    }

    /// Summary of the current prior (the latest posterior).
    pub fn summary(&self) -> Result<PosteriorSummary> {
        posterior_summary(
            &self.chain,
            self.config.summary_samples,
            None,
            self.key(Purpose::Summary),
            self.exec,
        )
    }

    pub fn header(&self) -> Result<RunHeader> {
        Ok(RunHeader {
            format: FORMAT.into(),
            config: self.config.clone(),
            model: self.model.name().into(),
            param_dim: self.model.param_dim(),
            setting_domain: self.model.setting_domain(),
            prior: self.model.prior(),
            prior_summary: self.summary()?,
            choices: declared_choices(&self.config),
            started_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }

    /// Train, choose a setting, measure, and condition.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let start = Instant::now();
        let s = self.chain.step();
        let model = self.model.as_ref();
        let (lo, hi) = model.setting_domain();
        let gradient = self.config.selection == SelectionMode::Gradient && self.config.strategy == Strategy::Active;
        let source = if gradient {
            let init = self.history.last().map_or(0.5 * (lo + hi), |r| r.x);
            XSource::Trainable {
                init,
                learning_rate: 1e-2 * (hi - lo),
            }
        } else {
            XSource::Uniform
        };
        let (trained, report) = train_posterior(
            &self.chain,
            model,
            &self.flow,
            &self.config.train,
            source,
            self.key(Purpose::PriorSample),
            self.exec,
        )?;
        let eig_key = self.key(Purpose::EigPrior);
        let (x, curve) = if gradient {
            let x = report.setting.unwrap_or(0.5 * (lo + hi));
            let curve = eig_scan(&self.chain, model, &trained, &[x], self.config.eig_batch, eig_key, self.exec)?;
            (x, Some(curve))
        } else {
            let curve = if self.config.strategy == Strategy::Active {
                let grid = linspace(lo, hi, self.config.grid_points);
                Some(eig_scan(&self.chain, model, &trained, &grid, self.config.eig_batch, eig_key, self.exec)?)
            } else {
                None
            };
            let x = select_x(
                self.config.strategy,
                (lo, hi),
                curve.as_ref().map(|c| (c.xs.as_slice(), c.values.as_slice())),
                s,
                self.key(Purpose::Selection),
            )?;
            (x, curve)
        };
        let y = model.simulate(&self.truth, x, &mut self.key(Purpose::Measurement).rng(0))?;
        let flow = Arc::new(trained);
        let ig = realized_info_gain(
            &flow,
            &self.chain,
            x,
            &y,
            self.config.info_gain_samples,
            self.key(Purpose::InfoGain),
            self.exec,
        )?;
        self.chain.push(ChainRecord::new(flow.clone(), x, y.clone()))?;
        self.flow = (*flow).clone();
        let summary = self.summary()?;
        let (eig_grid, eig_stderr) = match &curve {
            Some(c) => (
                c.xs.iter().zip(&c.values).map(|(&x, &v)| [x, v]).collect(),
                c.stderr.clone(),
            ),
            None => (Vec::new(), Vec::new()),
        };
        let record = StepRecord {
            step: s + 1,
            x,
            y,
            eig_grid,
            eig_stderr,
            realized_ig: ig.value,
            realized_ig_stderr: ig.stderr,
            posterior_mean: summary.mean,
            posterior_std: summary.std,
            posterior_q05: summary.q05,
            posterior_q50: summary.q50,
            posterior_q95: summary.q95,
            loss_final: report.loss_final,
            loss_monotone: report.windows_nonincreasing,
            train_steps: report.steps,
            restarted: report.restarted,
            wall_s: start.elapsed().as_secs_f64(),
        };
        self.history.push(record.clone());
        Ok(StepOutcome {
            record,
            curve,
            report,
            flow,
        })
    }
}

fn declared_choices(config: &CampaignConfig) -> Vec<String> {
    let mut out = vec![
        "prior: newest conditioned flow is the density (alternative: composing all flows as transport maps)".into(),
        "warm start: each step's flow starts from the previous step's parameters (alternative: fresh initialization)".into(),
        "eig heatmap: one flow amortized over the setting domain (alternative: retraining per setting)".into(),
        format!(
            "training prior draws: pool of {} samples per step once the prior is a flow",
            config.train.prior_pool
        ),
        "eig scan: common prior draws and noise streams across settings".into(),
    ];
    if config.selection == SelectionMode::Gradient {
        out.push("selection: setting optimized by Adam jointly with the flow".into());
    }
    out
}

/// Runs a campaign into `out_dir`: `header.json`, `log.jsonl` (one line per
/// step, flushed as it is produced) and flow snapshots. Returns the finished
/// campaign.
pub fn run_campaign(config: &CampaignConfig, out_dir: &Path, exec: ExecMode) -> Result<Campaign> {
    let mut campaign = Campaign::new(config.clone(), exec)?;
    fs::create_dir_all(out_dir)?;
    if config.snapshots {
        fs::create_dir_all(out_dir.join(SNAPSHOT_DIR))?;
    }
    let header = campaign.header()?;
    fs::write(out_dir.join(HEADER_FILE), serde_json::to_vec_pretty(&header)?)?;
    let mut log = fs::File::create(out_dir.join(LOG_FILE))?;
    for _ in 0..config.steps {
        let outcome = campaign.step()?;
        if config.snapshots {
            outcome.flow.save(&snapshot_stem(out_dir, outcome.record.step))?;
        }
        let mut line = serde_json::to_string(&outcome.record)?;
        line.push('\n');
        log.write_all(line.as_bytes())?;
        log.flush()?;
    }
    Ok(campaign)
}
