//! Information gain, predictive divergence and posterior summaries.

use serde::{Deserialize, Serialize};

use crate::engine::PriorChain;
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::flow::{ConditionalFlow, CHUNK_SIZE};
use crate::models::{ExperimentModel, ObservationKind};
use crate::rng::StreamKey;

/// A Monte Carlo estimate and its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from_samples(values: &[f64]) -> Self {
        let (value, stderr) = crate::engine::mean_stderr(values);
        Estimate { value, stderr }
    }
}

/// `E_{λ ~ Q(·|y, x)} [log Q(λ | y, x) - log P_{n-1}(λ)]`, the divergence of
/// the new posterior from the prior it was trained against.
pub fn realized_info_gain(
    posterior: &ConditionalFlow,
    prior: &PriorChain,
    x: f64,
    y: &[f64],
    n_samples: usize,
    key: StreamKey,
    exec: ExecMode,
) -> Result<Estimate> {
    if n_samples < 2 {
        return Err(Error::invalid("need at least 2 samples"));
    }
    let ctx = posterior.encode(x, y);
    let d = posterior.dim();
    let z = crate::flow::standard_normal_rows(key, n_samples, d);
    let parts = exec.map(n_samples.div_ceil(CHUNK_SIZE), |c| {
        let lo = c * CHUNK_SIZE;
        let hi = (lo + CHUNK_SIZE).min(n_samples);
        posterior.push_forward_shared(&z[lo * d..hi * d], &ctx, hi - lo)
    });
    let mut lambda = Vec::with_capacity(n_samples * d);
    let mut log_q = Vec::with_capacity(n_samples);
    for (l, q) in parts {
        lambda.extend(l);
        log_q.extend(q);
    }
    let log_p = prior.log_prob(&lambda, n_samples, exec)?;
    let gains: Vec<f64> = log_q.iter().zip(&log_p).map(|(q, p)| q - p).collect();
    Ok(Estimate::from_samples(&gains))
}

/// Running totals of per-step information gains.
pub fn cumulative_info_gain(per_step: &[f64]) -> Vec<f64> {
    let mut total = 0.0;
    per_step
        .iter()
        .map(|v| {
            total += v;
            total
        })
        .collect()
}

/// Sample sizes for [`predictive_kl`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveOptions {
    /// Posterior draws forming the predictive mixture.
    pub mixture: usize,
    /// Outer draws of y for continuous observations.
    pub outer: usize,
}

impl Default for PredictiveOptions {
    fn default() -> Self {
        PredictiveOptions {
            mixture: 256,
            outer: 2048,
        }
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `KL(P(y|x) ‖ P(y|λ*, x))` where `P(y|x)` mixes the likelihood over
/// posterior draws from `posterior`.
pub fn predictive_kl(
    posterior: &PriorChain,
    model: &dyn ExperimentModel,
    truth: &[f64],
    x: f64,
    options: PredictiveOptions,
    key: StreamKey,
    exec: ExecMode,
) -> Result<Estimate> {
    if options.mixture == 0 {
        return Err(Error::invalid("mixture needs at least one draw"));
    }
    let (samples, _) = posterior.sample(options.mixture, key.child(0), exec);
    predictive_kl_from_samples(&samples, model, truth, x, options, key.child(1))
}

/// [`predictive_kl`] for an explicit set of posterior draws (row-major). The
/// result depends on the set of rows, not their order.
pub fn predictive_kl_from_samples(
    samples: &[f64],
    model: &dyn ExperimentModel,
    truth: &[f64],
    x: f64,
    options: PredictiveOptions,
    key: StreamKey,
) -> Result<Estimate> {
    let d = model.param_dim();
    if samples.is_empty() || samples.len() % d != 0 {
        return Err(Error::shape("predictive", "samples are not whole rows"));
    }
    let mut rows: Vec<&[f64]> = samples.chunks(d).collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let m = rows.len();
    let responses: Vec<Vec<f64>> = rows.iter().map(|r| model.response(r, x)).collect::<Result<_>>()?;
    let true_response = model.response(truth, x)?;
    let log_m = (m as f64).ln();
    let mut lls = vec![0.0; m];
    let mut mixture_log = |y: &[f64]| -> Result<f64> {
        for (l, r) in lls.iter_mut().zip(&responses) {
            *l = model.log_likelihood_at(y, r, x)?;
        }
        Ok(log_sum_exp(&lls) - log_m)
    };
    match model.observation() {
        ObservationKind::Counts { shots } => {
            let mut kl = 0.0;
            for k in 0..=shots {
                let y = [k as f64];
                let lmix = mixture_log(&y)?;
                if lmix == f64::NEG_INFINITY {
                    continue;
                }
                let ltrue = model.log_likelihood_at(&y, &true_response, x)?;
                kl += lmix.exp() * (lmix - ltrue);
            }
            Ok(Estimate { value: kl, stderr: 0.0 })
        }
        ObservationKind::Continuous { dim } => {
            if options.outer < 2 {
                return Err(Error::invalid("need at least 2 outer draws"));
            }
            let mut y = vec![0.0; dim];
            let mut terms = Vec::with_capacity(options.outer);
            for o in 0..options.outer {
                let mut rng = key.rng(o as u64);
                model.sample_observation(&responses[o % m], x, &mut rng, &mut y);
                let lmix = mixture_log(&y)?;
                let ltrue = model.log_likelihood_at(&y, &true_response, x)?;
                terms.push(lmix - ltrue);
            }
            Ok(Estimate::from_samples(&terms))
        }
    }
}

/// Counts on a regular grid over `[lo, hi]`; samples outside are dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram1d {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

/// Joint counts for dimensions `(i, j)`; `counts[a * bins + b]` is bin `a`
/// of dimension `i` and bin `b` of dimension `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub dims: (usize, usize),
    pub range_i: (f64, f64),
    pub range_j: (f64, f64),
    pub bins: usize,
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bins: usize,
    /// Per-dimension `(lo, hi)`.
    pub ranges: Vec<(f64, f64)>,
}

impl HistogramSpec {
    /// `mean ± 4 std` of the base prior in each dimension.
    pub fn around_prior(chain: &PriorChain, bins: usize) -> Self {
        let base = chain.base();
        HistogramSpec {
            bins,
            ranges: base
                .mean
                .iter()
                .zip(&base.std)
                .map(|(m, s)| (m - 4.0 * s, m + 4.0 * s))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub samples: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub q05: Vec<f64>,
    pub q50: Vec<f64>,
    pub q95: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub marginals: Vec<Histogram1d>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<Histogram2d>,
}

/// Linear interpolation between order statistics of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> Option<usize> {
    if !(v >= lo && v <= hi) {
        return None;
    }
    Some((((v - lo) / (hi - lo)) * bins as f64).floor().min(bins as f64 - 1.0) as usize)
}

/// Summary statistics of row-major samples, with optional histograms.
pub fn summarize_samples(samples: &[f64], dim: usize, histograms: Option<&HistogramSpec>) -> Result<PosteriorSummary> {
    let n = samples.len() / dim;
    if n < 2 || samples.len() % dim != 0 {
        return Err(Error::invalid("summary needs at least 2 whole rows"));
    }
    let mut mean = Vec::with_capacity(dim);
    let mut std = Vec::with_capacity(dim);
    let (mut q05, mut q50, mut q95) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..dim {
        let mut col: Vec<f64> = samples.iter().skip(i).step_by(dim).copied().collect();
        let m = col.iter().sum::<f64>() / n as f64;
        let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        mean.push(m);
        std.push(v.sqrt());
        col.sort_by(f64::total_cmp);
        q05.push(quantile(&col, 0.05));
        q50.push(quantile(&col, 0.50));
        q95.push(quantile(&col, 0.95));
    }
    let (mut marginals, mut pairs) = (Vec::new(), Vec::new());
    if let Some(spec) = histograms {
        if spec.ranges.len() != dim || spec.bins == 0 {
            return Err(Error::invalid("histogram ranges do not match dimension"));
        }
        for i in 0..dim {
            let (lo, hi) = spec.ranges[i];
            let mut counts = vec![0u64; spec.bins];
            for row in samples.chunks(dim) {
                if let Some(b) = bin_of(row[i], lo, hi, spec.bins) {
                    counts[b] += 1;
                }
            }
            marginals.push(Histogram1d { dim: i, lo, hi, counts });
        }
        for i in 0..dim {
            for j in i + 1..dim {
                let (ri, rj) = (spec.ranges[i], spec.ranges[j]);
                let mut counts = vec![0u64; spec.bins * spec.bins];
                for row in samples.chunks(dim) {
                    if let (Some(a), Some(b)) = (
                        bin_of(row[i], ri.0, ri.1, spec.bins),
                        bin_of(row[j], rj.0, rj.1, spec.bins),
                    ) {
                        counts[a * spec.bins + b] += 1;
                    }
                }
                pairs.push(Histogram2d {
                    dims: (i, j),
                    range_i: ri,
                    range_j: rj,
                    bins: spec.bins,
                    counts,
                });
            }
        }
    }
    Ok(PosteriorSummary {
        samples: n,
        mean,
        std,
        q05,
        q50,
        q95,
        marginals,
        pairs,
    })
}

/// Summary of `n_samples` draws from the chain's current distribution.
pub fn posterior_summary(
    chain: &PriorChain,
    n_samples: usize,
    histograms: Option<&HistogramSpec>,
    key: StreamKey,
    exec: ExecMode,
) -> Result<PosteriorSummary> {
    if n_samples < 100 {
        return Err(Error::invalid("posterior summary needs at least 100 samples"));
    }
    let (samples, _) = chain.sample(n_samples, key, exec);
    summarize_samples(&samples, chain.dim(), histograms)
}
