use std::f64::consts::PI;

use super::model::{layer_slots, param_layout, unshift_index, ConditionalFlow, CTX_B1, CTX_B2, CTX_W1, CTX_W2};
use crate::diff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::exec::ExecMode;

/// Samples per graph. Batches are always cut into chunks of this size, so
/// the reduction order does not depend on how many threads run them.
pub const CHUNK_SIZE: usize = 64;

struct ChunkGraph {
    graph: Graph,
    rows: usize,
    log_q: NodeId,
}

/// Gradient of `Σ_b -log Q(λ_b | ctx_b)` over a batch.
#[derive(Clone, Debug)]
pub struct BatchGradient {
    /// `Σ_b -log Q(λ_b | ctx_b)`
    pub nll_sum: f64,
    /// One tensor per flow parameter, summed over the batch.
    pub grads: Vec<Tensor>,
    /// Per-sample `log Q(λ_b | ctx_b)`.
    pub log_q: Vec<f64>,
    /// Per-sample gradient of `-log Q` w.r.t. the encoded context row.
    pub ctx_grad: Vec<f64>,
}

/// Differentiable batched negative log-likelihood of a flow.
pub struct NllEvaluator {
    chunks: Vec<ChunkGraph>,
    names: Vec<String>,
}

impl NllEvaluator {
    pub fn new(flow: &ConditionalFlow) -> Self {
        NllEvaluator {
            chunks: Vec::new(),
            names: flow.param_names().to_vec(),
        }
    }

    fn ensure_chunks(&mut self, flow: &ConditionalFlow, n: usize) -> Result<()> {
        let count = n.div_ceil(CHUNK_SIZE);
        for c in 0..count {
            let rows = CHUNK_SIZE.min(n - c * CHUNK_SIZE);
            let rebuild = match self.chunks.get(c) {
                Some(existing) => existing.rows != rows,
                None => true,
            };
            if rebuild {
                let built = build_nll_graph(flow, rows)?;
                if c < self.chunks.len() {
                    self.chunks[c] = built;
                } else {
                    self.chunks.push(built);
                }
            }
        }
        Ok(())
    }

    /// Evaluates loss and gradients at `params` for `n` rows of parameter
    /// points and encoded contexts.
    pub fn evaluate(
        &mut self,
        flow: &ConditionalFlow,
        params: &[Tensor],
        lambda: &[f64],
        ctx: &[f64],
        n: usize,
        exec: ExecMode,
    ) -> Result<BatchGradient> {
        let d = flow.dim();
        let w = flow.context_spec().width();
        if lambda.len() != n * d || ctx.len() != n * w || n == 0 {
            return Err(Error::shape(
                "nll",
                format!("{n} rows with {} λ values and {} context values", lambda.len(), ctx.len()),
            ));
        }
        if params.len() != self.names.len() {
            return Err(Error::shape("nll", "parameter count mismatch"));
        }
        self.ensure_chunks(flow, n)?;
        let count = n.div_ceil(CHUNK_SIZE);
        let mut standard = vec![0.0; n * d];
        flow.standardizer().to_standard(lambda, &mut standard);
        let names = &self.names;
        let results: Vec<Result<()>> = exec.map_mut(&mut self.chunks[..count], |c, chunk| {
            let lo = c * CHUNK_SIZE;
            let hi = lo + chunk.rows;
            for (name, p) in names.iter().zip(params) {
                chunk.graph.bind(name, p)?;
            }
            chunk.graph.bind_slice("lambda", &standard[lo * d..hi * d])?;
            chunk.graph.bind_slice("ctx", &ctx[lo * w..hi * w])?;
            chunk.graph.run()?;
            chunk.graph.backward_in_place(&Tensor::scalar(1.0))
        });
        for r in results {
            r?;
        }

        let constant = -0.5 * d as f64 * (2.0 * PI).ln() - flow.standardizer().log_scale_sum();
        let mut grads: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        let mut log_q = Vec::with_capacity(n);
        let mut ctx_grad = Vec::with_capacity(n * w);
        let mut nll_sum = 0.0;
        for chunk in &self.chunks[..count] {
            for (g, name) in grads.iter_mut().zip(names) {
                g.axpy(1.0, chunk.graph.grad(name)?);
            }
            for &v in chunk.graph.value(chunk.log_q).data() {
                let lq = v + constant;
                nll_sum -= lq;
                log_q.push(lq);
            }
            ctx_grad.extend_from_slice(chunk.graph.grad("ctx")?.data());
        }
        Ok(BatchGradient {
            nll_sum,
            grads,
            log_q,
            ctx_grad,
        })
    }
}

/// Builds the density-direction graph for `rows` samples. Inputs are the
/// standardized points `lambda`, encoded contexts `ctx` and every flow
/// parameter by name; the output is `-Σ_b (log Q_b - const)`.
fn build_nll_graph(flow: &ConditionalFlow, rows: usize) -> Result<ChunkGraph> {
    let cfg = flow.config();
    let d = cfg.dim;
    let width = flow.context_spec().width();
    let mut g = Graph::new();
    let lambda = g.input("lambda", &[rows, d])?;
    let ctx = g.input("ctx", &[rows, width])?;
    let mut p = Vec::new();
    for (name, shape) in param_layout(cfg, width) {
        p.push(g.input(&name, &shape)?);
    }

    let h = g.matmul(ctx, p[CTX_W1])?;
    let h = g.add_row(h, p[CTX_B1])?;
    let h = g.tanh(h);
    let e = g.matmul(h, p[CTX_W2])?;
    let e = g.add_row(e, p[CTX_B2])?;
    let emb = g.tanh(e);

    let masks = flow.masks();
    let unshift = unshift_index(d);
    let shifts: Vec<usize> = (0..d).collect();
    let scales: Vec<usize> = (d..2 * d).collect();
    let bound = cfg.log_scale_bound;

    let mut v = lambda;
    let mut logdet_terms = Vec::new();
    for l in (0..cfg.layers).rev() {
        let s = layer_slots(l);
        let u = g.gather(v, &unshift)?;
        let inp = g.concat(&[u, emb])?;
        let a1 = g.masked_linear(inp, p[s.w1], &masks.input)?;
        let a1 = g.add_row(a1, p[s.b1])?;
        let h1 = g.tanh(a1);
        let a2 = g.masked_linear(h1, p[s.w2], &masks.hidden)?;
        let a2 = g.add_row(a2, p[s.b2])?;
        let h2 = g.tanh(a2);
        let o = g.masked_linear(h2, p[s.w3], &masks.output)?;
        let o = g.add_row(o, p[s.b3])?;
        let t = g.gather(o, &shifts)?;
        let raw = g.gather(o, &scales)?;
        let squashed = g.scale(raw, 1.0 / bound);
        let squashed = g.tanh(squashed);
        let log_scale = g.scale(squashed, bound);
        let centered = g.sub(u, t)?;
        let neg = g.scale(log_scale, -1.0);
        let inv_scale = g.exp(neg);
        v = g.mul(centered, inv_scale)?;
        logdet_terms.push(g.sum_rows(log_scale));
    }
    let sq = g.mul(v, v)?;
    let sq = g.sum_rows(sq);
    let mut log_q = g.scale(sq, -0.5);
    for term in logdet_terms {
        log_q = g.sub(log_q, term)?;
    }
    let total = g.sum(log_q);
    let loss = g.scale(total, -1.0);
    g.set_output(loss);
    Ok(ChunkGraph {
        graph: g,
        rows,
        log_q,
    })
}
