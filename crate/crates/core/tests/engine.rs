use std::sync::Arc;

use boed_core::engine::{
    ba_loss, eig_scan, linspace, run_campaign, train_posterior, without_timing, Campaign, CampaignConfig,
    ChainRecord, GridPosterior, PriorChain, RunLog, Strategy, TrainConfig, XSource,
};
use boed_core::flow::{ConditionalFlow, FlowConfig};
use boed_core::models::{
    CavityArray, ConjugateConfig, ConjugateGaussian, ExperimentModel, ModelConfig,
};
use boed_core::rng::{Purpose, StreamKey};
use boed_core::ExecMode;
use proptest::prelude::*;

const HALF_LN2: f64 = 0.346_573_590_279_972_6;

fn fresh_flow(model: &dyn ExperimentModel, seed: u64) -> ConditionalFlow {
    ConditionalFlow::init(
        FlowConfig::new(model.param_dim()),
        model.context_spec(),
        model.prior().standardizer(),
        seed,
    )
    .unwrap()
}

fn train_cfg(steps: usize, batch: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch,
        ..TrainConfig::conjugate()
    }
}

#[test]
fn learning_rate_anneals_to_its_floor() {
    let mut c = train_cfg(100, 8);
    assert_eq!(c.learning_rate_at(50), 1e-3);
    c.final_learning_rate = Some(1e-5);
    assert_eq!(c.learning_rate_at(0), 1e-3);
    assert!((c.learning_rate_at(50) - 0.5 * (1e-3 + 1e-5)).abs() < 1e-15);
    assert_eq!(c.learning_rate_at(100), 1e-5);
    assert_eq!(c.learning_rate_at(500), 1e-5);
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn normal_log_density(x: f64, m: f64, s: f64) -> f64 {
    let u = (x - m) / s;
    -0.5 * u * u - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

// Sequential grid updates against a single update with both likelihoods.
fn recursion_gap(obs: &[(f64, f64)], sigma0: f64, sigma: f64) -> f64 {
    let points = linspace(-8.0, 8.0, 2001);
    let prior = GridPosterior::new(points, |l| normal_log_density(l, 0.0, sigma0));
    let mut seq = prior.clone();
    for &(_, y) in obs {
        seq = seq.update(|l| normal_log_density(y, l, sigma));
    }
    let batch = prior.update(|l| obs.iter().map(|&(_, y)| normal_log_density(y, l, sigma)).sum());
    seq.total_variation(&batch)
}

#[test]
fn grid_recursion_equals_batch_update() {
    assert!(recursion_gap(&[(0.0, 0.7), (0.0, -1.3)], 1.0, 1.0) < 1e-10);
}

#[test]
fn grid_posterior_matches_conjugate_update() {
    let model = ConjugateGaussian::new(1.0, 0.5).unwrap();
    let obs = [(0.0, 0.4), (0.0, 0.9), (0.0, 0.1)];
    let points = linspace(-8.0, 8.0, 4001);
    let mut g = GridPosterior::new(points, |l| normal_log_density(l, 0.0, 1.0));
    for &(_, y) in &obs {
        g = g.update(|l| normal_log_density(y, l, 0.5));
    }
    let (m, s) = model.posterior(&obs);
    assert!((g.mean() - m).abs() < 1e-8);
    assert!((g.std() - s).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn grid_recursion_holds_for_any_outcomes(ys in prop::collection::vec(-3.0f64..3.0, 2..5), sigma in 0.3f64..2.0) {
        let obs: Vec<(f64, f64)> = ys.iter().map(|&y| (0.0, y)).collect();
        prop_assert!(recursion_gap(&obs, 1.0, sigma) < 1e-10);
    }
}

#[test]
fn step_zero_prior_is_the_base_prior() {
    let model = CavityArray::new(vec![2.733, 2.615], 0.5, 0.5, 0.05).unwrap();
    let chain = PriorChain::new(model.prior());
    let n = 20_000;
    let (lambda, logp) = chain.sample(n, StreamKey::new(3, 0, Purpose::PriorSample), ExecMode::Parallel);
    for i in 0..3 {
        let col: Vec<f64> = lambda.iter().skip(i).step_by(3).copied().collect();
        let (m, s) = mean_std(&col);
        assert!(m.abs() < 4.0 / (n as f64).sqrt(), "mean {m}");
        assert!((s - 1.0).abs() < 0.03, "std {s}");
    }
    let again = chain.log_prob(&lambda, n, ExecMode::Sequential).unwrap();
    assert_eq!(logp, again);
}

#[test]
fn conditioned_chain_reports_flow_density() {
    let model = ConjugateGaussian::new(1.0, 1.0).unwrap();
    let mut chain = PriorChain::new(model.prior());
    let mut flow = fresh_flow(&model, 5);
    let mut params = flow.params().to_vec();
    let mut k = 0.0f64;
    for p in params.iter_mut() {
        let data: Vec<f64> = p.data().iter().map(|v| { k += 1.0; v + 0.05 * (k * 0.37).sin() }).collect();
        *p = boed_core::diff::Tensor::new(p.shape(), data).unwrap();
    }
    flow.set_params(params).unwrap();
    let flow = Arc::new(flow);
    chain.push(ChainRecord::new(flow.clone(), 0.3, vec![1.1])).unwrap();
    let n = 500;
    let (lambda, logp) = chain.sample(n, StreamKey::new(1, 1, Purpose::PriorSample), ExecMode::Parallel);
    let ctx = flow.encode(0.3, &[1.1]);
    for b in 0..n {
        let direct = flow.log_prob(&lambda[b..b + 1], &ctx).unwrap();
        assert!((direct - logp[b]).abs() < 1e-9);
    }
    assert_eq!(chain.log_prob(&lambda, n, ExecMode::Parallel).unwrap().len(), n);
}

#[test]
fn prior_as_posterior_carries_no_information() {
    let model = ConjugateGaussian::new(1.0, 1.0).unwrap();
    let chain = PriorChain::new(model.prior());
    let flow = fresh_flow(&model, 0);
    let out = ba_loss(&chain, &model, &flow, XSource::Uniform, 4096, StreamKey::new(0, 0, Purpose::Evaluation), ExecMode::Parallel).unwrap();
    assert!(out.eig.abs() < 1e-10, "eig {}", out.eig);
    let entropy = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    // loss is the prior entropy estimate; its spread matches a chi-square term
    let se = (0.5f64 / 4096.0).sqrt();
    assert!((out.loss - entropy).abs() < 3.0 * se, "loss {}", out.loss);
}

#[test]
fn trained_bound_approaches_half_log_two_from_below() {
    let model = ConjugateGaussian::new(1.0, 1.0).unwrap();
    let chain = PriorChain::new(model.prior());
    let (flow, report) = train_posterior(
        &chain,
        &model,
        &fresh_flow(&model, 1),
        &train_cfg(2000, 512),
        XSource::Fixed(0.0),
        StreamKey::new(1, 0, Purpose::PriorSample),
        ExecMode::Parallel,
    )
    .unwrap();
    assert!(report.losses.iter().all(|l| l.is_finite()));
    let est = ba_loss(&chain, &model, &flow, XSource::Fixed(0.0), 16_384, StreamKey::new(1, 0, Purpose::Evaluation), ExecMode::Parallel).unwrap();
    assert!(est.eig > HALF_LN2 - 0.05, "eig {} ± {}", est.eig, est.eig_stderr);
    assert!(est.eig < HALF_LN2 + 3.0 * est.eig_stderr, "eig {} ± {}", est.eig, est.eig_stderr);
}

#[test]
fn annealed_conditional_mean_tracks_the_conjugate_posterior() {
    let model = ConjugateGaussian::new(1.0, 1.0).unwrap();
    let chain = PriorChain::new(model.prior());
    let (flow, _) = train_posterior(
        &chain,
        &model,
        &fresh_flow(&model, 1),
        &TrainConfig {
            final_learning_rate: Some(1e-5),
            ..train_cfg(2000, 512)
        },
        XSource::Fixed(0.0),
        StreamKey::new(1, 0, Purpose::PriorSample),
        ExecMode::Parallel,
    )
    .unwrap();
    // posterior mean is y/2
    for y in linspace(-2.0, 2.0, 9) {
        let ctx = flow.encode(0.0, &[y]);
        let (s, _) = flow.sample(&ctx, 8000, StreamKey::new(1, 0, Purpose::Replay));
        let (m, _) = mean_std(&s);
        let (exact, _) = model.posterior(&[(0.0, y)]);
        assert!((m - exact).abs() < 0.05, "y {y}: mean {m} vs {exact}");
    }
}

#[test]
fn independent_observations_give_zero_information() {
    let model = ConjugateGaussian::with_shape(1.0, 1.0, 0.0, 0.0).unwrap();
    let chain = PriorChain::new(model.prior());
    let (flow, _) = train_posterior(
        &chain,
        &model,
        &fresh_flow(&model, 2),
        &TrainConfig {
            final_learning_rate: Some(1e-5),
            ..train_cfg(1000, 512)
        },
        XSource::Uniform,
        StreamKey::new(2, 0, Purpose::PriorSample),
        ExecMode::Parallel,
    )
    .unwrap();
    let est = ba_loss(&chain, &model, &flow, XSource::Uniform, 16_384, StreamKey::new(2, 0, Purpose::Evaluation), ExecMode::Parallel).unwrap();
    assert!(est.eig.abs() < 3.0 * est.eig_stderr, "eig {} ± {}", est.eig, est.eig_stderr);
    let curve = eig_scan(&chain, &model, &flow, &linspace(-1.0, 1.0, 11), 4096, StreamKey::new(2, 0, Purpose::EigPrior), ExecMode::Parallel).unwrap();
    for (v, s) in curve.values.iter().zip(&curve.stderr) {
        assert!(v.abs() < 3.0 * s, "value {v} ± {s}");
    }
}

#[test]
fn eig_scan_peaks_at_least_noisy_setting() {
    let model = ConjugateGaussian::with_shape(1.0, 1.0, 1.0, 1.0).unwrap();
    let chain = PriorChain::new(model.prior());
    let (flow, _) = train_posterior(
        &chain,
        &model,
        &fresh_flow(&model, 3),
        &train_cfg(3000, 512),
        XSource::Uniform,
        StreamKey::new(3, 0, Purpose::PriorSample),
        ExecMode::Parallel,
    )
    .unwrap();
    let grid = linspace(-1.0, 1.0, 21);
    let curve = eig_scan(&chain, &model, &flow, &grid, 4096, StreamKey::new(3, 0, Purpose::EigPrior), ExecMode::Parallel).unwrap();
    let best = boed_core::engine::argmax_first(&curve.values).unwrap();
    assert_eq!(grid[best], 0.0, "curve {:?}", curve.values);
    for (x, v) in grid.iter().zip(&curve.values) {
        assert!(*v < model.mutual_information(*x) + 0.03, "x {x}: {v}");
    }
}

fn conjugate_config(strategy: Strategy, steps: usize, seed: u64) -> CampaignConfig {
    let mut c = CampaignConfig::new(ModelConfig::Conjugate(ConjugateConfig::default()), strategy, steps, seed);
    c.train.steps = 400;
    c.train.batch = 256;
    c.grid_points = 11;
    c.eig_batch = 256;
    c.info_gain_samples = 512;
    c.summary_samples = 1024;
    c
}

#[test]
fn campaigns_are_reproducible() {
    let run = |exec| {
        let mut c = Campaign::new(conjugate_config(Strategy::Active, 2, 11), exec).unwrap();
        c.step().unwrap();
        c.step().unwrap();
        c.history()
            .iter()
            .map(|r| without_timing(&serde_json::to_string(r).unwrap()).unwrap())
            .collect::<Vec<_>>()
    };
    let a = run(ExecMode::Parallel);
    assert_eq!(a, run(ExecMode::Parallel));
    assert_eq!(a, run(ExecMode::Sequential));
}

#[test]
fn conjugate_posterior_contracts_every_step() {
    let mut config = conjugate_config(Strategy::Random, 3, 4);
    config.train.steps = 1500;
    config.train.batch = 512;
    config.summary_samples = 8192;
    let mut c = Campaign::new(config, ExecMode::Parallel).unwrap();
    let mut prev = c.summary().unwrap().std[0];
    for _ in 0..3 {
        let r = c.step().unwrap().record;
        assert!(r.posterior_std[0] < prev, "{} !< {prev}", r.posterior_std[0]);
        prev = r.posterior_std[0];
    }
}

#[test]
fn one_step_matches_conjugate_posterior() {
    let model = ConjugateGaussian::new(1.0, 1.0).unwrap();
    let mut config = conjugate_config(Strategy::Fixed(0.0), 1, 6);
    config.train.steps = 3000;
    config.train.batch = 512;
    config.train.final_learning_rate = Some(1e-5);
    let mut c = Campaign::new(config, ExecMode::Parallel).unwrap();
    let rec = c.step().unwrap().record;
    let (m, s) = model.posterior(&[(rec.x, rec.y[0])]);
    let n = 20_000;
    let (draws, _) = c.chain().sample(n, StreamKey::new(6, 9, Purpose::Replay), ExecMode::Parallel);
    let (em, es) = mean_std(&draws);
    let se_mean = s / (n as f64).sqrt();
    let se_std = s / (2.0 * n as f64).sqrt();
    assert!((em - m).abs() < 3.0 * se_mean, "mean {em} vs {m}");
    assert!((es - s).abs() < 3.0 * se_std, "std {es} vs {s}");
}

#[test]
fn run_directory_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config = conjugate_config(Strategy::Active, 2, 8);
    let mut live = Campaign::new(config.clone(), ExecMode::Parallel).unwrap();
    live.step().unwrap();
    live.step().unwrap();
    let finished = run_campaign(&config, dir.path(), ExecMode::Parallel).unwrap();
    let history = finished.history();
    let log = RunLog::open(&dir.path().join("log.jsonl")).unwrap();
    assert_eq!(log.records.len(), 2);
    assert_eq!(log.header.config, config);
    for (a, b) in log.records.iter().zip(history) {
        assert_eq!(a.realized_ig, b.realized_ig);
        assert_eq!(a.y, b.y);
    }
    let key = StreamKey::new(0, 0, Purpose::Replay);
    let restored = log.chain_at(2).unwrap();
    assert_eq!(restored.step(), 2);
    assert_eq!(
        restored.sample(64, key, ExecMode::Parallel),
        live.chain().sample(64, key, ExecMode::Parallel)
    );
    assert!(log.chain_at(3).is_err());
}

#[test]
fn zero_steps_log_only_the_prior() {
    let dir = tempfile::tempdir().unwrap();
    let config = conjugate_config(Strategy::Random, 0, 1);
    run_campaign(&config, dir.path(), ExecMode::Parallel).unwrap();
    let log = RunLog::open(dir.path()).unwrap();
    assert!(log.records.is_empty());
    assert_eq!(std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap(), "");
    assert!((log.header.prior_summary.std[0] - 1.0).abs() < 0.05);
}
