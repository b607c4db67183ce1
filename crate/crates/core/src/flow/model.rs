use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::context::ContextSpec;
use super::made::MadeMasks;
use crate::diff::{gemm, Tensor};
use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamKey};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dim: usize,
    pub layers: usize,
    pub hidden: usize,
    pub context_hidden: usize,
    pub embedding: usize,
    pub log_scale_bound: f64,
}

impl FlowConfig {
    /// Four layers of two-hidden-layer MADE with 64 units, a 32-unit context
    /// network and a 16-dimensional embedding.
    pub fn new(dim: usize) -> Self {
        FlowConfig {
            dim,
            layers: 4,
            hidden: 64,
            context_hidden: 32,
            embedding: 16,
            log_scale_bound: 5.0,
        }
    }
}

/// Fixed elementwise affine map `λ = loc + scale ⊙ v` between the flow's
/// standardized space and parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub loc: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            loc: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn log_scale_sum(&self) -> f64 {
        self.scale.iter().map(|s| s.ln()).sum()
    }

    pub fn to_standard(&self, lambda: &[f64], out: &mut [f64]) {
        let d = self.loc.len();
        for (o, l) in out.chunks_mut(d).zip(lambda.chunks(d)) {
            for i in 0..d {
                o[i] = (l[i] - self.loc[i]) / self.scale[i];
            }
        }
    }

    pub fn from_standard(&self, v: &[f64], out: &mut [f64]) {
        let d = self.loc.len();
        for (o, s) in out.chunks_mut(d).zip(v.chunks(d)) {
            for i in 0..d {
                o[i] = self.loc[i] + self.scale[i] * s[i];
            }
        }
    }
}

/// Positions of each layer's tensors in the flat parameter list.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerSlots {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub w3: usize,
    pub b3: usize,
}

pub(crate) const CTX_W1: usize = 0;
pub(crate) const CTX_B1: usize = 1;
pub(crate) const CTX_W2: usize = 2;
pub(crate) const CTX_B2: usize = 3;

pub(crate) fn layer_slots(layer: usize) -> LayerSlots {
    let base = 4 + 6 * layer;
    LayerSlots {
        w1: base,
        b1: base + 1,
        w2: base + 2,
        b2: base + 3,
        w3: base + 4,
        b3: base + 5,
    }
}

pub(crate) fn param_layout(cfg: &FlowConfig, context_width: usize) -> Vec<(String, Vec<usize>)> {
    let (d, h, ch, e) = (cfg.dim, cfg.hidden, cfg.context_hidden, cfg.embedding);
    let mut out = vec![
        ("ctx.w1".to_string(), vec![context_width, ch]),
        ("ctx.b1".to_string(), vec![1, ch]),
        ("ctx.w2".to_string(), vec![ch, e]),
        ("ctx.b2".to_string(), vec![1, e]),
    ];
    for l in 0..cfg.layers {
        out.push((format!("l{l}.w1"), vec![d + e, h]));
        out.push((format!("l{l}.b1"), vec![1, h]));
        out.push((format!("l{l}.w2"), vec![h, h]));
        out.push((format!("l{l}.b2"), vec![1, h]));
        out.push((format!("l{l}.w3"), vec![h, 2 * d]));
        out.push((format!("l{l}.b3"), vec![1, 2 * d]));
    }
    out
}

/// Gather indices for the shift-by-one permutation: `out[(i + 1) % D] = in[i]`.
pub(crate) fn shift_index(dim: usize) -> Vec<usize> {
    (0..dim).map(|j| (j + dim - 1) % dim).collect()
}

pub(crate) fn unshift_index(dim: usize) -> Vec<usize> {
    (0..dim).map(|j| (j + 1) % dim).collect()
}

pub(crate) fn squash(raw: f64, bound: f64) -> f64 {
    bound * (raw / bound).tanh()
}

/// Conditional density `Q(λ | context)`.
#[derive(Debug)]
pub struct ConditionalFlow {
    config: FlowConfig,
    context: ContextSpec,
    standardizer: Standardizer,
    masks: MadeMasks,
    names: Vec<String>,
    params: Vec<Tensor>,
    // per layer: masked w1, masked w2, masked w3
    masked: Vec<[Vec<f64>; 3]>,
    saturations: AtomicU64,
}

impl Clone for ConditionalFlow {
    fn clone(&self) -> Self {
        ConditionalFlow {
            config: self.config.clone(),
            context: self.context.clone(),
            standardizer: self.standardizer.clone(),
            masks: self.masks.clone(),
            names: self.names.clone(),
            params: self.params.clone(),
            masked: self.masked.clone(),
            saturations: AtomicU64::new(self.saturations.load(Ordering::Relaxed)),
        }
    }
}

/// Per-call scratch buffers for batched evaluation.
struct Scratch {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    out: Vec<f64>,
}

impl ConditionalFlow {
    /// A fresh flow whose output heads are zero, i.e. the identity transform
    /// up to the permutations. Hidden weights and biases are drawn uniformly
    /// from `±1/sqrt(fan_in)`.
    pub fn init(
        config: FlowConfig,
        context: ContextSpec,
        standardizer: Standardizer,
        seed: u64,
    ) -> Result<Self> {
        if config.dim == 0 {
            return Err(Error::invalid("flow dimension must be at least 1"));
        }
        if standardizer.loc.len() != config.dim
            || standardizer.scale.len() != config.dim
            || standardizer.scale.iter().any(|s| !(*s > 0.0))
        {
            return Err(Error::invalid("standardizer does not match flow dimension"));
        }
        let layout = param_layout(&config, context.width());
        let key = StreamKey::new(seed, 0, Purpose::FlowInit);
        let mut params = Vec::with_capacity(layout.len());
        let mut names = Vec::with_capacity(layout.len());
        // each bias follows its weight in the layout and shares its fan-in
        let mut fan_in = 1;
        for (idx, (name, shape)) in layout.into_iter().enumerate() {
            if name.contains(".w") {
                fan_in = shape[0];
            }
            let is_head = name.ends_with(".w3") || name.ends_with(".b3");
            let tensor = if is_head {
                Tensor::zeros(&shape)
            } else {
                let mut rng = key.rng(idx as u64);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let n = shape.iter().product();
                Tensor::new(&shape, (0..n).map(|_| rng.random_range(-bound..bound)).collect())?
            };
            names.push(name);
            params.push(tensor);
        }
        Self::from_params(config, context, standardizer, params).map(|mut f| {
            f.names = names;
            f
        })
    }

    pub fn from_params(
        config: FlowConfig,
        context: ContextSpec,
        standardizer: Standardizer,
        params: Vec<Tensor>,
    ) -> Result<Self> {
        let layout = param_layout(&config, context.width());
        if layout.len() != params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in layout.iter().zip(&params) {
            if p.shape() != shape.as_slice() {
                return Err(Error::shape(
                    "flow",
                    format!("{name}: expected {shape:?}, got {:?}", p.shape()),
                ));
            }
        }
        let masks = MadeMasks::new(config.dim, config.embedding, config.hidden);
        let mut flow = ConditionalFlow {
            names: layout.into_iter().map(|(n, _)| n).collect(),
            masks,
            config,
            context,
            standardizer,
            params,
            masked: Vec::new(),
            saturations: AtomicU64::new(0),
        };
        flow.refresh_masked();
        Ok(flow)
    }

    fn refresh_masked(&mut self) {
        let mut masked = Vec::with_capacity(self.config.layers);
        for l in 0..self.config.layers {
            let s = layer_slots(l);
            let apply = |w: &Tensor, m: &Tensor| -> Vec<f64> {
                w.data().iter().zip(m.data()).map(|(a, b)| a * b).collect()
            };
            masked.push([
                apply(&self.params[s.w1], &self.masks.input),
                apply(&self.params[s.w2], &self.masks.hidden),
                apply(&self.params[s.w3], &self.masks.output),
            ]);
        }
        self.masked = masked;
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn context_spec(&self) -> &ContextSpec {
        &self.context
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn masks(&self) -> &MadeMasks {
        &self.masks
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        if params.len() != self.params.len()
            || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::shape("flow", "parameter shapes changed"));
        }
        self.params = params;
        self.refresh_masked();
        Ok(())
    }

    /// Number of log-scale evaluations that landed within 1% of the clamp.
    pub fn saturation_events(&self) -> u64 {
        self.saturations.load(Ordering::Relaxed)
    }

    /// Encodes a raw `(x, y)` pair with this flow's context spec.
    pub fn encode(&self, x: f64, y: &[f64]) -> Vec<f64> {
        self.context.encode(x, y)
    }

    fn scratch(&self, n: usize) -> Scratch {
        let c = &self.config;
        Scratch {
            input: vec![0.0; n * (c.dim + c.embedding)],
            h1: vec![0.0; n * c.hidden],
            h2: vec![0.0; n * c.hidden],
            out: vec![0.0; n * 2 * c.dim],
        }
    }

    /// Context embeddings for `n` encoded context rows.
    pub fn embed(&self, ctx: &[f64], n: usize) -> Vec<f64> {
        let c = &self.config;
        let w = self.context.width();
        assert_eq!(ctx.len(), n * w, "context rows have the wrong width");
        let mut h = vec![0.0; n * c.context_hidden];
        dense_tanh(ctx, &self.params[CTX_W1], &self.params[CTX_B1], n, w, &mut h);
        let mut e = vec![0.0; n * c.embedding];
        dense_tanh(
            &h,
            &self.params[CTX_W2],
            &self.params[CTX_B2],
            n,
            c.context_hidden,
            &mut e,
        );
        e
    }

    /// Evaluates layer `layer`'s conditioner on `n` rows of `u`, writing the
    /// shifts and clamped log-scales.
    fn conditioner(
        &self,
        layer: usize,
        u: &[f64],
        emb: &[f64],
        n: usize,
        scratch: &mut Scratch,
        shift: &mut [f64],
        log_scale: &mut [f64],
    ) {
        let c = &self.config;
        let (d, e, h) = (c.dim, c.embedding, c.hidden);
        let s = layer_slots(layer);
        let [m1, m2, m3] = &self.masked[layer];
        for r in 0..n {
            let row = &mut scratch.input[r * (d + e)..(r + 1) * (d + e)];
            row[..d].copy_from_slice(&u[r * d..(r + 1) * d]);
            row[d..].copy_from_slice(&emb[r * e..(r + 1) * e]);
        }
        gemm(n, d + e, h, &scratch.input, false, m1, false, 0.0, &mut scratch.h1);
        bias_tanh(&mut scratch.h1, self.params[s.b1].data());
        gemm(n, h, h, &scratch.h1, false, m2, false, 0.0, &mut scratch.h2);
        bias_tanh(&mut scratch.h2, self.params[s.b2].data());
        gemm(n, h, 2 * d, &scratch.h2, false, m3, false, 0.0, &mut scratch.out);
        let b3 = self.params[s.b3].data();
        let bound = c.log_scale_bound;
        let mut saturated = 0;
        for r in 0..n {
            let o = &scratch.out[r * 2 * d..(r + 1) * 2 * d];
            for i in 0..d {
                shift[r * d + i] = o[i] + b3[i];
                let ls = squash(o[d + i] + b3[d + i], bound);
                if ls.abs() > 0.99 * bound {
                    saturated += 1;
                }
                log_scale[r * d + i] = ls;
            }
        }
        if saturated > 0 {
            self.saturations.fetch_add(saturated, Ordering::Relaxed);
        }
    }

    /// Shift and log-scale of one layer for a single point, exposed for
    /// autoregressive-structure checks.
    pub fn layer_conditioner(&self, layer: usize, u: &[f64], ctx: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let emb = self.embed(ctx, 1);
        let mut scratch = self.scratch(1);
        let (mut t, mut s) = (vec![0.0; d], vec![0.0; d]);
        self.conditioner(layer, u, &emb, 1, &mut scratch, &mut t, &mut s);
        (t, s)
    }

    /// Maps parameter-space points to base-space points. Returns `(z, logdet)`
    /// with `logdet = log |det ∂z/∂λ|` per row.
    pub fn inverse_batch(&self, lambda: &[f64], ctx: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let emb = self.embed(ctx, n);
        self.inverse_with_embedding(lambda, &emb, n)
    }

    fn inverse_with_embedding(&self, lambda: &[f64], emb: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        assert_eq!(lambda.len(), n * d);
        let mut v = vec![0.0; n * d];
        self.standardizer.to_standard(lambda, &mut v);
        let mut logdet = vec![-self.standardizer.log_scale_sum(); n];
        let unshift = unshift_index(d);
        let mut scratch = self.scratch(n);
        let mut u = vec![0.0; n * d];
        let (mut t, mut s) = (vec![0.0; n * d], vec![0.0; n * d]);
        for l in (0..self.config.layers).rev() {
            permute_rows(&v, &unshift, d, &mut u);
            self.conditioner(l, &u, emb, n, &mut scratch, &mut t, &mut s);
            for r in 0..n {
                let mut acc = 0.0;
                for i in 0..d {
                    let k = r * d + i;
                    v[k] = (u[k] - t[k]) * (-s[k]).exp();
                    acc += s[k];
                }
                logdet[r] -= acc;
            }
        }
        (v, logdet)
    }

    /// Maps base-space points to parameter space by sequential inversion of
    /// each autoregressive layer. Returns `(λ, logdet)` with
    /// `logdet = log |det ∂λ/∂z|` per row.
    pub fn forward_batch(&self, z: &[f64], ctx: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let emb = self.embed(ctx, n);
        self.forward_with_embedding(z, &emb, n)
    }

    fn forward_with_embedding(&self, z: &[f64], emb: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        assert_eq!(z.len(), n * d);
        let shift = shift_index(d);
        let mut v = z.to_vec();
        let mut logdet = vec![self.standardizer.log_scale_sum(); n];
        let mut scratch = self.scratch(n);
        let mut u = vec![0.0; n * d];
        let (mut t, mut s) = (vec![0.0; n * d], vec![0.0; n * d]);
        for l in 0..self.config.layers {
            u.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..d {
                self.conditioner(l, &u, emb, n, &mut scratch, &mut t, &mut s);
                for r in 0..n {
                    let k = r * d + i;
                    u[k] = v[k] * s[k].exp() + t[k];
                }
            }
            // log-scales from the final pass are those of the completed point
            for r in 0..n {
                logdet[r] += s[r * d..(r + 1) * d].iter().sum::<f64>();
            }
            permute_rows(&u, &shift, d, &mut v);
        }
        let mut lambda = vec![0.0; n * d];
        self.standardizer.from_standard(&v, &mut lambda);
        (lambda, logdet)
    }

    pub fn inverse_transform(&self, lambda: &[f64], ctx: &[f64]) -> (Vec<f64>, f64) {
        let (z, ld) = self.inverse_batch(lambda, ctx, 1);
        (z, ld[0])
    }

    pub fn forward_transform(&self, z: &[f64], ctx: &[f64]) -> (Vec<f64>, f64) {
        let (l, ld) = self.forward_batch(z, ctx, 1);
        (l, ld[0])
    }

    /// `log Q(λ | ctx)` for `n` rows, each with its own context row.
    pub fn log_prob_batch(&self, lambda: &[f64], ctx: &[f64], n: usize) -> Result<Vec<f64>> {
        let (z, logdet) = self.inverse_batch(lambda, ctx, n);
        let out = base_log_prob_rows(&z, self.dim(), &logdet);
        check_finite(&out, "log_prob")?;
        Ok(out)
    }

    /// `log Q(λ | ctx)` for `n` rows sharing one context row.
    pub fn log_prob_shared(&self, lambda: &[f64], ctx: &[f64], n: usize) -> Result<Vec<f64>> {
        let emb = self.embed(ctx, 1);
        let emb = emb.repeat(n);
        let (z, logdet) = self.inverse_with_embedding(lambda, &emb, n);
        let out = base_log_prob_rows(&z, self.dim(), &logdet);
        check_finite(&out, "log_prob")?;
        Ok(out)
    }

    pub fn log_prob(&self, lambda: &[f64], ctx: &[f64]) -> Result<f64> {
        Ok(self.log_prob_batch(lambda, ctx, 1)?[0])
    }

    /// Pushes the given base draws through the flow at a shared context.
    /// Returns samples and their log-densities.
    pub fn push_forward_shared(&self, z: &[f64], ctx: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let emb = self.embed(ctx, 1).repeat(n);
        let (lambda, logdet) = self.forward_with_embedding(z, &emb, n);
        let d = self.dim();
        let zero = vec![0.0; n];
        let base = base_log_prob_rows(z, d, &zero);
        let logp = base.iter().zip(&logdet).map(|(b, l)| b - l).collect();
        (lambda, logp)
    }

    /// Draws `n` samples at a shared context. Sample `b` uses stream `b` of
    /// `key`.
    pub fn sample(&self, ctx: &[f64], n: usize, key: StreamKey) -> (Vec<f64>, Vec<f64>) {
        let z = standard_normal_rows(key, n, self.dim());
        self.push_forward_shared(&z, ctx, n)
    }
}

/// `n x dim` standard-normal draws, row `b` from stream `b`.
pub fn standard_normal_rows(key: StreamKey, n: usize, dim: usize) -> Vec<f64> {
    let mut z = Vec::with_capacity(n * dim);
    for b in 0..n {
        let mut rng = key.rng(b as u64);
        for _ in 0..dim {
            z.push(rng.sample::<f64, _>(StandardNormal));
        }
    }
    z
}

pub(crate) fn base_log_prob_rows(z: &[f64], dim: usize, logdet: &[f64]) -> Vec<f64> {
    let norm = -0.5 * dim as f64 * (2.0 * PI).ln();
    z.chunks(dim)
        .zip(logdet)
        .map(|(row, ld)| norm - 0.5 * row.iter().map(|v| v * v).sum::<f64>() + ld)
        .collect()
}

fn check_finite(values: &[f64], op: &'static str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite { op, node: i }),
        None => Ok(()),
    }
}

fn permute_rows(src: &[f64], index: &[usize], d: usize, dst: &mut [f64]) {
    for (drow, srow) in dst.chunks_mut(d).zip(src.chunks(d)) {
        for (o, &j) in drow.iter_mut().zip(index) {
            *o = srow[j];
        }
    }
}

fn dense_tanh(x: &[f64], w: &Tensor, b: &Tensor, n: usize, k: usize, out: &mut [f64]) {
    let m = w.cols();
    gemm(n, k, m, x, false, w.data(), false, 0.0, out);
    bias_tanh(out, b.data());
}

fn bias_tanh(x: &mut [f64], bias: &[f64]) {
    let m = bias.len();
    for row in x.chunks_mut(m) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v = (*v + b).tanh();
        }
    }
}
