use std::fs;
use std::path::{Path, PathBuf};

use boed_core::engine::{
    eig_scan, linspace, run_campaign, CampaignConfig, EigCurve, PriorChain, RunLog, Strategy,
};
use boed_core::metrics::{cumulative_info_gain, predictive_kl, summarize_samples, HistogramSpec};
use boed_core::rng::{Purpose, StreamKey};
use boed_core::ExecMode;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigSource, RunConfig};
use crate::error::{CliError, CliResult};

fn resolve_out(flag: Option<&Path>, source: &ConfigSource) -> CliResult<PathBuf> {
    flag.or(source.out_dir())
        .map(Path::to_path_buf)
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `out`".into()))
}

/// Runs one campaign per seed into `<out>/seed_<seed>`. Returns the run
/// directories.
pub fn cmd_run(config: &Path, out: Option<&Path>, exec: ExecMode) -> CliResult<Vec<PathBuf>> {
    let source = ConfigSource::load(config)?;
    let out = resolve_out(out, &source)?;
    let plan = source.run_plan()?;
    let dirs: Vec<PathBuf> = plan.iter().map(|c| out.join(format!("seed_{}", c.seed))).collect();
    let results = exec.map(plan.len(), |i| run_campaign(&plan[i], &dirs[i], exec).map(|_| ()));
    for r in results {
        r?;
    }
    Ok(dirs)
}

fn path_label(s: &Strategy) -> String {
    s.label().replace('(', "_").replace(')', "")
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean and standard error across seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedStat {
    pub mean: f64,
    pub stderr: f64,
}

impl SeedStat {
    fn of(v: &[f64]) -> Self {
        let (mean, stderr) = mean_stderr(v);
        SeedStat { mean, stderr }
    }
}

/// Per-seed results of one strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: String,
    pub seeds: Vec<u64>,
    /// `cumulative[seed][step]`, step 0 included.
    pub cumulative: Vec<Vec<f64>>,
    pub final_cumulative_ig: SeedStat,
    /// First step whose cumulative gain reaches the threshold; runs that
    /// never reach it count as `steps + 1`.
    pub steps_to_threshold: Option<Vec<usize>>,
    pub mean_steps_to_threshold: Option<SeedStat>,
}

/// What `compare` writes to `compare_summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub steps: usize,
    pub ig_threshold: Option<f64>,
    pub strategies: Vec<StrategyResult>,
    pub predictive: PredictiveNote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveNote {
    pub direction: String,
    pub mixture: usize,
    pub outer: usize,
    pub count_observations: String,
    pub grid_points: usize,
}

fn steps_to(cumulative: &[f64], threshold: f64) -> usize {
    cumulative
        .iter()
        .position(|&c| c >= threshold)
        .unwrap_or(cumulative.len())
}

/// Runs every strategy × seed cell into `<out>/<strategy>/seed_<seed>` and
/// writes `cumulative_ig.csv`, `predictive_kl.csv`, `steps_to_threshold.csv`
/// (with an `ig_threshold`) and `compare_summary.json`.
pub fn cmd_compare(config: &Path, out: Option<&Path>, exec: ExecMode) -> CliResult<CompareSummary> {
    let source = ConfigSource::load(config)?;
    let out = resolve_out(out, &source)?;
    let ConfigSource::Run(rc) = &source else {
        return Err(CliError::Config("`compare` needs a run config, not a run header".into()));
    };
    compare(rc, &out, exec)
}

struct Cell {
    strategy: usize,
    config: CampaignConfig,
    dir: PathBuf,
}

pub fn compare(rc: &RunConfig, out: &Path, exec: ExecMode) -> CliResult<CompareSummary> {
    if rc.strategies.is_empty() {
        return Err(CliError::Config("`compare` needs a non-empty `strategies` list".into()));
    }
    let mut cells = Vec::new();
    for (si, s) in rc.strategies.iter().enumerate() {
        for &seed in &rc.seeds {
            cells.push(Cell {
                strategy: si,
                config: rc.campaign(*s, seed)?,
                dir: out.join(path_label(s)).join(format!("seed_{seed}")),
            });
        }
    }
    let model = rc.model.build()?;
    let truth = rc.model.true_lambda().to_vec();
    let (lo, hi) = model.setting_domain();
    let options = rc.predictive_options();
    let pred_grid = linspace(lo, hi, rc.predictive.grid_points.unwrap_or(25));

    // (cumulative series, predictive KL per grid point)
    type CellOut = (Vec<f64>, Vec<(f64, f64)>);
    let results = exec.map(cells.len(), |i| -> CliResult<CellOut> {
        let cell = &cells[i];
        let campaign = run_campaign(&cell.config, &cell.dir, exec)?;
        let gains: Vec<f64> = campaign.history().iter().map(|r| r.realized_ig).collect();
        let mut cumulative = vec![0.0];
        cumulative.extend(cumulative_info_gain(&gains));
        let key = StreamKey::new(cell.config.seed, rc.steps as u64, Purpose::Predictive);
        let kl = pred_grid
            .iter()
            .enumerate()
            .map(|(g, &x)| {
                predictive_kl(campaign.chain(), campaign.model(), &truth, x, options, key.child(g as u64), exec)
                    .map(|e| (e.value, e.stderr))
            })
            .collect::<boed_core::Result<Vec<_>>>()?;
        Ok((cumulative, kl))
    });
    let results = results.into_iter().collect::<CliResult<Vec<_>>>()?;

    fs::create_dir_all(out)?;
    let mut cum_csv = csv::Writer::from_path(out.join("cumulative_ig.csv"))?;
    cum_csv.write_record(["step", "strategy", "mean", "stderr"])?;
    let mut kl_csv = csv::Writer::from_path(out.join("predictive_kl.csv"))?;
    kl_csv.write_record(["strategy", "seed", "x", "kl", "stderr"])?;
    let mut thr_csv = match rc.ig_threshold {
        Some(_) => {
            let mut w = csv::Writer::from_path(out.join("steps_to_threshold.csv"))?;
            w.write_record(["strategy", "seed", "steps", "reached"])?;
            Some(w)
        }
        None => None,
    };

    let mut strategies = Vec::new();
    for (si, s) in rc.strategies.iter().enumerate() {
        let label = s.label();
        let mine: Vec<(&Cell, &CellOut)> = cells
            .iter()
            .zip(&results)
            .filter(|(c, _)| c.strategy == si)
            .collect();
        let cumulative: Vec<Vec<f64>> = mine.iter().map(|(_, r)| r.0.clone()).collect();
        for step in 0..=rc.steps {
            let at: Vec<f64> = cumulative.iter().map(|c| c[step]).collect();
            let stat = SeedStat::of(&at);
            cum_csv.write_record([step.to_string(), label.clone(), stat.mean.to_string(), stat.stderr.to_string()])?;
        }
        for (cell, (_, kl)) in &mine {
            for (x, (v, se)) in pred_grid.iter().zip(kl) {
                kl_csv.write_record([label.clone(), cell.config.seed.to_string(), x.to_string(), v.to_string(), se.to_string()])?;
            }
        }
        let finals: Vec<f64> = cumulative.iter().map(|c| c[rc.steps]).collect();
        let (steps_to_threshold, mean_steps) = match rc.ig_threshold {
            Some(t) => {
                let st: Vec<usize> = cumulative.iter().map(|c| steps_to(c, t)).collect();
                if let Some(w) = thr_csv.as_mut() {
                    for ((cell, _), &k) in mine.iter().zip(&st) {
                        w.write_record([
                            label.clone(),
                            cell.config.seed.to_string(),
                            k.to_string(),
                            (k <= rc.steps).to_string(),
                        ])?;
                    }
                }
                let as_f: Vec<f64> = st.iter().map(|&k| k as f64).collect();
                (Some(st), Some(SeedStat::of(&as_f)))
            }
            None => (None, None),
        };
        strategies.push(StrategyResult {
            strategy: label,
            seeds: rc.seeds.clone(),
            cumulative,
            final_cumulative_ig: SeedStat::of(&finals),
            steps_to_threshold,
            mean_steps_to_threshold: mean_steps,
        });
    }
    cum_csv.flush()?;
    kl_csv.flush()?;
    if let Some(mut w) = thr_csv {
        w.flush()?;
    }
    let summary = CompareSummary {
        steps: rc.steps,
        ig_threshold: rc.ig_threshold,
        strategies,
        predictive: PredictiveNote {
            direction: "KL(P(y|x) || P(y|lambda_true, x)), P(y|x) a mixture over posterior draws".into(),
            mixture: options.mixture,
            outer: options.outer,
            count_observations: "exact sum over all counts".into(),
            grid_points: pred_grid.len(),
        },
    };
    fs::write(out.join("compare_summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}

/// Plot data that `replay` can produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReplayKind {
    EigHeatmap,
    PosteriorEvolution,
    ResponseBand,
    Corner,
}

#[derive(Clone, Debug)]
pub struct ReplayOptions {
    pub kind: ReplayKind,
    /// Steps to emit; `None` picks a per-kind default.
    pub steps: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
    /// Posterior draws per step for response bands.
    pub samples: usize,
    pub bins: usize,
}

/// Parses `"0,5,15"` or `"all"`.
pub fn parse_steps(text: &str) -> Result<Option<Vec<usize>>, String> {
    if text.trim() == "all" {
        return Ok(None);
    }
    text.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad step `{p}`: {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn chain_for(log: &RunLog, step: usize) -> CliResult<PriorChain> {
    if step > log.records.len() {
        return Err(CliError::Config(format!(
            "step {step} requested, log has {} steps",
            log.records.len()
        )));
    }
    Ok(log.chain_at(step)?)
}

/// Writes CSV plot data for a run log. Returns the files written.
pub fn cmd_replay(log_path: &Path, opts: &ReplayOptions, exec: ExecMode) -> CliResult<Vec<PathBuf>> {
    let log = RunLog::open(log_path).map_err(|e| CliError::Config(format!("{}: {e}", log_path.display())))?;
    let out = opts.out.clone().unwrap_or_else(|| log.dir.join("replay"));
    fs::create_dir_all(&out)?;
    let n = log.records.len();
    let all: Vec<usize> = (0..=n).collect();
    let last = vec![n];
    match opts.kind {
        ReplayKind::EigHeatmap => {
            let steps = opts.steps.clone().unwrap_or_else(|| (1..=n).collect());
            eig_heatmap(&log, &steps, &out, exec)
        }
        ReplayKind::PosteriorEvolution => {
            posterior_evolution(&log, opts.steps.as_deref().unwrap_or(&all), opts.bins, &out, exec)
        }
        ReplayKind::ResponseBand => {
            let default = if n == 0 { vec![0] } else { vec![0, n] };
            response_band(&log, opts.steps.as_deref().unwrap_or(&default), opts.samples, &out, exec)
        }
        ReplayKind::Corner => corner(&log, opts.steps.as_deref().unwrap_or(&last), opts.bins, &out, exec),
    }
}

fn replay_key(log: &RunLog, step: usize) -> StreamKey {
    StreamKey::new(log.header.config.seed, step as u64, Purpose::Replay)
}

fn eig_heatmap(log: &RunLog, steps: &[usize], out: &Path, exec: ExecMode) -> CliResult<Vec<PathBuf>> {
    let cfg = &log.header.config;
    let (lo, hi) = log.header.setting_domain;
    let grid = linspace(lo, hi, cfg.grid_points);
    let model = log.model()?;
    let mut rows = Vec::new();
    for &step in steps {
        if step == 0 || step > log.records.len() {
            return Err(CliError::Config(format!(
                "eig-heatmap steps run from 1 to {}, got {step}",
                log.records.len()
            )));
        }
        let rec = &log.records[step - 1];
        let curve = if rec.eig_grid.len() == grid.len() {
            EigCurve {
                xs: rec.eig_grid.iter().map(|p| p[0]).collect(),
                values: rec.eig_grid.iter().map(|p| p[1]).collect(),
                stderr: rec.eig_stderr.clone(),
            }
        } else {
            // Not scanned during the run: rescan the step's flow.
            let chain = chain_for(log, step - 1)?;
            let flow = log.flow_at(step)?;
            eig_scan(&chain, model.as_ref(), &flow, &grid, cfg.eig_batch, replay_key(log, step), exec)?
        };
        rows.push((step, curve));
    }
    let wide = out.join("eig_heatmap.csv");
    let mut w = csv::Writer::from_path(&wide)?;
    let mut header = vec!["step".to_string()];
    header.extend(grid.iter().map(|x| x.to_string()));
    w.write_record(&header)?;
    for (step, curve) in &rows {
        let mut r = vec![step.to_string()];
        r.extend(curve.normalized().iter().map(|v| v.to_string()));
        w.write_record(&r)?;
    }
    w.flush()?;
    let long = out.join("eig_curves.csv");
    let mut w = csv::Writer::from_path(&long)?;
    w.write_record(["step", "x", "eig", "stderr", "normalized"])?;
    for (step, curve) in &rows {
        let norm = curve.normalized();
        for i in 0..curve.xs.len() {
            let se = curve.stderr.get(i).copied().unwrap_or(f64::NAN);
            w.write_record([
                step.to_string(),
                curve.xs[i].to_string(),
                curve.values[i].to_string(),
                se.to_string(),
                norm[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(vec![wide, long])
}

fn posterior_evolution(
    log: &RunLog,
    steps: &[usize],
    bins: usize,
    out: &Path,
    exec: ExecMode,
) -> CliResult<Vec<PathBuf>> {
    let stats = out.join("posterior_evolution.csv");
    let mut w = csv::Writer::from_path(&stats)?;
    w.write_record(["step", "dim", "mean", "std", "q05", "q50", "q95"])?;
    let marg = out.join("posterior_marginals.csv");
    let mut m = csv::Writer::from_path(&marg)?;
    m.write_record(["step", "dim", "lo", "hi", "density"])?;
    let d = log.header.param_dim;
    for &step in steps {
        let chain = chain_for(log, step)?;
        let (mean, std, q05, q50, q95) = if step == 0 {
            let s = &log.header.prior_summary;
            (&s.mean, &s.std, &s.q05, &s.q50, &s.q95)
        } else {
            let r = &log.records[step - 1];
            (&r.posterior_mean, &r.posterior_std, &r.posterior_q05, &r.posterior_q50, &r.posterior_q95)
        };
        for i in 0..d {
            w.write_record([
                step.to_string(),
                i.to_string(),
                mean[i].to_string(),
                std[i].to_string(),
                q05[i].to_string(),
                q50[i].to_string(),
                q95[i].to_string(),
            ])?;
        }
        let spec = HistogramSpec::around_prior(&chain, bins);
        let n = log.header.config.summary_samples;
        let (samples, _) = chain.sample(n, replay_key(log, step), exec);
        let summary = summarize_samples(&samples, d, Some(&spec))?;
        for h in &summary.marginals {
            let width = (h.hi - h.lo) / h.counts.len() as f64;
            for (b, &c) in h.counts.iter().enumerate() {
                let lo = h.lo + b as f64 * width;
                m.write_record([
                    step.to_string(),
                    h.dim.to_string(),
                    lo.to_string(),
                    (lo + width).to_string(),
                    (c as f64 / (n as f64 * width)).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    m.flush()?;
    Ok(vec![stats, marg])
}

fn response_band(log: &RunLog, steps: &[usize], samples: usize, out: &Path, exec: ExecMode) -> CliResult<Vec<PathBuf>> {
    if samples == 0 {
        return Err(CliError::Config("--samples must be at least 1".into()));
    }
    let model = log.model()?;
    let (lo, hi) = log.header.setting_domain;
    let grid = linspace(lo, hi, log.header.config.grid_points);
    let path = out.join("response_band.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["step", "sample", "x", "component", "value"])?;
    let truth = model.response_grid(log.true_lambda(), &grid)?;
    let d = log.header.param_dim;
    for &step in steps {
        let chain = chain_for(log, step)?;
        let (lambda, _) = chain.sample(samples, replay_key(log, step), exec);
        let curves = exec
            .map(samples, |m| model.response_grid(&lambda[m * d..(m + 1) * d], &grid))
            .into_iter()
            .collect::<boed_core::Result<Vec<_>>>()?;
        let mut emit = |label: String, curve: &[Vec<f64>]| -> CliResult<()> {
            for (x, r) in grid.iter().zip(curve) {
                for (c, v) in r.iter().enumerate() {
                    w.write_record([step.to_string(), label.clone(), x.to_string(), c.to_string(), v.to_string()])?;
                }
            }
            Ok(())
        };
        for (m, curve) in curves.iter().enumerate() {
            emit(m.to_string(), curve)?;
        }
        emit("truth".into(), &truth)?;
    }
    w.flush()?;
    Ok(vec![path])
}

fn corner(log: &RunLog, steps: &[usize], bins: usize, out: &Path, exec: ExecMode) -> CliResult<Vec<PathBuf>> {
    let marg = out.join("corner_marginals.csv");
    let mut m = csv::Writer::from_path(&marg)?;
    m.write_record(["step", "dim", "bin", "lo", "hi", "count"])?;
    let pairs = out.join("corner_pairs.csv");
    let mut p = csv::Writer::from_path(&pairs)?;
    p.write_record(["step", "dim_i", "dim_j", "bin_i", "bin_j", "count"])?;
    let d = log.header.param_dim;
    for &step in steps {
        let chain = chain_for(log, step)?;
        let spec = HistogramSpec::around_prior(&chain, bins);
        let (samples, _) = chain.sample(log.header.config.summary_samples, replay_key(log, step), exec);
        let s = summarize_samples(&samples, d, Some(&spec))?;
        for h in &s.marginals {
            let width = (h.hi - h.lo) / bins as f64;
            for (b, c) in h.counts.iter().enumerate() {
                let lo = h.lo + b as f64 * width;
                m.write_record([
                    step.to_string(),
                    h.dim.to_string(),
                    b.to_string(),
                    lo.to_string(),
                    (lo + width).to_string(),
                    c.to_string(),
                ])?;
            }
        }
        for h in &s.pairs {
            for a in 0..h.bins {
                for b in 0..h.bins {
                    p.write_record([
                        step.to_string(),
                        h.dims.0.to_string(),
                        h.dims.1.to_string(),
                        a.to_string(),
                        b.to_string(),
                        h.counts[a * h.bins + b].to_string(),
                    ])?;
                }
            }
        }
    }
    m.flush()?;
    p.flush()?;
    Ok(vec![marg, pairs])
}
