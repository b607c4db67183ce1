use serde::{Deserialize, Serialize};

use super::chain::PriorChain;
use super::train::mean_stderr;
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::flow::ConditionalFlow;
use crate::models::ExperimentModel;
use crate::rng::StreamKey;

/// Expected information gain estimated on a grid of settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigCurve {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl EigCurve {
    /// Values divided by the curve maximum, negatives clipped to zero. A curve
    /// with no positive value normalizes to all zeros.
    pub fn normalized(&self) -> Vec<f64> {
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > 0.0) {
            return vec![0.0; self.values.len()];
        }
        self.values.iter().map(|v| v.max(0.0) / max).collect()
    }
}

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// For every grid setting, the mean over `batch` prior draws of
/// `log Q(λ | y, x) - log P_n(λ)` with `y` simulated at `x`. The same prior
/// draws and noise streams are reused across the grid.
pub fn eig_scan(
    chain: &PriorChain,
    model: &dyn ExperimentModel,
    flow: &ConditionalFlow,
    grid: &[f64],
    batch: usize,
    key: StreamKey,
    exec: ExecMode,
) -> Result<EigCurve> {
    if batch == 0 || grid.is_empty() {
        return Err(Error::invalid("eig scan needs a non-empty grid and batch ≥ 1"));
    }
    let d = chain.dim();
    let obs = model.observation().dim();
    let (lambda, log_prior) = chain.sample(batch, key.child(0), exec);
    // responses[b][g]
    let responses: Vec<Vec<Vec<f64>>> = exec
        .map(batch, |b| model.response_grid(&lambda[b * d..(b + 1) * d], grid))
        .into_iter()
        .collect::<Result<_>>()?;
    let noise_key = key.child(1);
    let spec = flow.context_spec();
    let w = spec.width();
    let per_x = exec.map(grid.len(), |g| -> Result<(f64, f64)> {
        let x = grid[g];
        let mut ctx = vec![0.0; batch * w];
        let mut y = vec![0.0; obs];
        for b in 0..batch {
            let mut rng = noise_key.rng(b as u64);
            model.sample_observation(&responses[b][g], x, &mut rng, &mut y);
            spec.encode_into(x, &y, &mut ctx[b * w..(b + 1) * w]);
        }
        let log_q = flow.log_prob_batch(&lambda, &ctx, batch)?;
        let gains: Vec<f64> = log_q.iter().zip(&log_prior).map(|(q, p)| q - p).collect();
        Ok(mean_stderr(&gains))
    });
    let mut values = Vec::with_capacity(grid.len());
    let mut stderr = Vec::with_capacity(grid.len());
    for r in per_x {
        let (m, s) = r?;
        values.push(m);
        stderr.push(s);
    }
    Ok(EigCurve {
        xs: grid.to_vec(),
        values,
        stderr,
    })
}
