use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::flow::{ConditionalFlow, CHUNK_SIZE};
use crate::models::GaussianPrior;
use crate::rng::StreamKey;

/// A trained flow together with the measurement it is conditioned on.
#[derive(Clone, Debug)]
pub struct ChainRecord {
    pub flow: Arc<ConditionalFlow>,
    pub x: f64,
    pub y: Vec<f64>,
    ctx: Vec<f64>,
}

impl ChainRecord {
    pub fn new(flow: Arc<ConditionalFlow>, x: f64, y: Vec<f64>) -> Self {
        let ctx = flow.encode(x, &y);
        ChainRecord { flow, x, y, ctx }
    }

    /// Encoded context of the conditioning measurement.
    pub fn context(&self) -> &[f64] {
        &self.ctx
    }
}

/// The prior at step n: the base prior when no measurement has been made,
/// otherwise the newest flow conditioned on its own measurement. Older
/// records are kept for replay.
#[derive(Clone, Debug)]
pub struct PriorChain {
    base: GaussianPrior,
    records: Vec<ChainRecord>,
}

impl PriorChain {
    pub fn new(base: GaussianPrior) -> Self {
        PriorChain {
            base,
            records: Vec::new(),
        }
    }

    pub fn base(&self) -> &GaussianPrior {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Number of conditioning records.
    pub fn step(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> &[ChainRecord] {
        &self.records
    }

    pub fn newest(&self) -> Option<&ChainRecord> {
        self.records.last()
    }

    pub fn push(&mut self, record: ChainRecord) -> Result<()> {
        if record.flow.dim() != self.dim() {
            return Err(Error::shape("chain", "flow dimension differs from prior"));
        }
        self.records.push(record);
        Ok(())
    }

    /// `n` draws and their log-densities. Draw `b` uses stream `b` of `key`.
    pub fn sample(&self, n: usize, key: StreamKey, exec: ExecMode) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        match self.newest() {
            None => {
                let rows = exec.map(n, |b| {
                    let mut rng = key.rng(b as u64);
                    let mut row = vec![0.0; d];
                    self.base.sample_into(&mut rng, &mut row);
                    let lp = self.base.log_prob(&row);
                    (row, lp)
                });
                let mut lambda = Vec::with_capacity(n * d);
                let mut logp = Vec::with_capacity(n);
                for (row, lp) in rows {
                    lambda.extend_from_slice(&row);
                    logp.push(lp);
                }
                (lambda, logp)
            }
            Some(rec) => {
                let z = crate::flow::standard_normal_rows(key, n, d);
                let chunks = n.div_ceil(CHUNK_SIZE);
                let parts = exec.map(chunks, |c| {
                    let lo = c * CHUNK_SIZE;
                    let hi = (lo + CHUNK_SIZE).min(n);
                    rec.flow.push_forward_shared(&z[lo * d..hi * d], rec.context(), hi - lo)
                });
                let mut lambda = Vec::with_capacity(n * d);
                let mut logp = Vec::with_capacity(n);
                for (l, p) in parts {
                    lambda.extend(l);
                    logp.extend(p);
                }
                (lambda, logp)
            }
        }
    }

    /// `log P_n(λ)` for `n` rows.
    pub fn log_prob(&self, lambda: &[f64], n: usize, exec: ExecMode) -> Result<Vec<f64>> {
        let d = self.dim();
        if lambda.len() != n * d {
            return Err(Error::shape("chain", format!("{} values for {n} rows", lambda.len())));
        }
        match self.newest() {
            None => Ok(lambda.chunks(d).map(|r| self.base.log_prob(r)).collect()),
            Some(rec) => {
                let chunks = n.div_ceil(CHUNK_SIZE);
                let parts = exec.map(chunks, |c| {
                    let lo = c * CHUNK_SIZE;
                    let hi = (lo + CHUNK_SIZE).min(n);
                    rec.flow.log_prob_shared(&lambda[lo * d..hi * d], rec.context(), hi - lo)
                });
                let mut out = Vec::with_capacity(n);
                for p in parts {
                    out.extend(p?);
                }
                Ok(out)
            }
        }
    }
}
