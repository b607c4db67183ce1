use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::chain::PriorChain;
use crate::diff::{adam_step, AdamConfig, AdamState, Tensor};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::flow::{ConditionalFlow, NllEvaluator};
use crate::models::ExperimentModel;
use crate::rng::StreamKey;

/// Stop once the mean loss of the last window differs from the window
/// before it by less than `threshold`, checked after the base step budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    pub window: usize,
    pub threshold: f64,
    /// Hard cap on iterations including the base budget.
    pub max_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    /// Cosine anneal from `learning_rate` to this value over `steps`;
    /// constant when absent.
    #[serde(default)]
    pub final_learning_rate: Option<f64>,
    #[serde(default)]
    pub early_stop: Option<EarlyStop>,
    /// Prior draws per step kept for training once the prior is a flow.
    #[serde(default = "default_pool")]
    pub prior_pool: usize,
}

fn default_pool() -> usize {
    32_768
}

impl TrainConfig {
    /// Learning rate at 0-based iteration `t`.
    pub fn learning_rate_at(&self, t: usize) -> f64 {
        match self.final_learning_rate {
            None => self.learning_rate,
            Some(end) => {
                let frac = (t as f64 / self.steps as f64).min(1.0);
                end + 0.5 * (self.learning_rate - end) * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }

    pub fn cavity() -> Self {
        TrainConfig {
            steps: 8000,
            batch: 1500,
            learning_rate: 1e-3,
            final_learning_rate: None,
            early_stop: None,
            prior_pool: default_pool(),
        }
    }

    pub fn qubit() -> Self {
        TrainConfig {
            steps: 2500,
            batch: 700,
            learning_rate: 1e-3,
            final_learning_rate: None,
            early_stop: Some(EarlyStop {
                window: 500,
                threshold: 0.05,
                max_steps: 10_000,
            }),
            prior_pool: default_pool(),
        }
    }

    pub fn conjugate() -> Self {
        TrainConfig {
            steps: 2000,
            batch: 512,
            learning_rate: 1e-3,
            final_learning_rate: None,
            early_stop: None,
            prior_pool: default_pool(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch == 0 || !(self.learning_rate > 0.0) || self.prior_pool == 0 {
            return Err(Error::invalid("training needs steps, batch, prior_pool ≥ 1 and a positive learning rate"));
        }
        if let Some(f) = self.final_learning_rate {
            if !(f > 0.0 && f <= self.learning_rate) {
                return Err(Error::invalid("final learning rate must lie in (0, learning_rate]"));
            }
        }
        if let Some(es) = &self.early_stop {
            if es.window == 0 || es.max_steps < self.steps || !(es.threshold >= 0.0) {
                return Err(Error::invalid("early stop needs window ≥ 1, max_steps ≥ steps, threshold ≥ 0"));
            }
        }
        Ok(())
    }
}

/// Where the settings in a training batch come from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum XSource {
    Fixed(f64),
    /// Uniform over the model's setting domain (amortized training).
    Uniform,
    /// A single setting optimized jointly with the flow by Adam.
    Trainable { init: f64, learning_rate: f64 },
}

/// One evaluation of the Barber–Agakov objective.
#[derive(Clone, Debug)]
pub struct BaLoss {
    /// `-(1/B) Σ log Q(λ_b | y_b, x_b)`
    pub loss: f64,
    /// Mean of `log Q - log P_n` over the batch, with its standard error.
    pub eig: f64,
    pub eig_stderr: f64,
    /// Gradients of `loss` per flow parameter.
    pub grads: Vec<Tensor>,
    /// `∂loss/∂x` in trainable mode.
    pub x_grad: Option<f64>,
}

pub(crate) fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Simulated observations and encoded contexts for a batch.
struct Simulated {
    ctx: Vec<f64>,
    /// `∂ctx/∂x` per row, trainable mode only.
    dctx_dx: Option<Vec<f64>>,
}

fn simulate_batch(
    model: &dyn ExperimentModel,
    flow: &ConditionalFlow,
    lambda: &[f64],
    xs: &[f64],
    reparam: bool,
    key: StreamKey,
    exec: ExecMode,
) -> Result<Simulated> {
    let d = model.param_dim();
    let spec = flow.context_spec();
    let w = spec.width();
    let obs = model.observation().dim();
    let n = xs.len();
    let rows = exec.map(n, |b| -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let mut rng = key.rng(b as u64);
        let lam = &lambda[b * d..(b + 1) * d];
        let x = xs[b];
        if reparam {
            let noise: Vec<f64> = (0..obs).map(|_| rng.sample(StandardNormal)).collect();
            let (y, dy) = model
                .reparameterized(lam, x, &noise)
                .ok_or_else(|| Error::invalid(format!("{} observations are not reparameterizable", model.name())))?;
            let mut dctx = spec.d_setting(x);
            for i in 0..obs {
                dctx[spec.y_column(i)] = dy[i] / spec.y_scale[i];
            }
            Ok((spec.encode(x, &y), Some(dctx)))
        } else {
            let y = model.simulate(lam, x, &mut rng)?;
            Ok((spec.encode(x, &y), None))
        }
    });
    let mut ctx = Vec::with_capacity(n * w);
    let mut dctx_dx = if reparam { Some(Vec::with_capacity(n * w)) } else { None };
    for row in rows {
        let (c, dc) = row?;
        ctx.extend(c);
        if let (Some(all), Some(dc)) = (dctx_dx.as_mut(), dc) {
            all.extend(dc);
        }
    }
    Ok(Simulated { ctx, dctx_dx })
}

/// Evaluates the objective at `params` for a batch of prior draws and
/// settings. `key` must be unique to this evaluation.
#[allow(clippy::too_many_arguments)]
fn evaluate_batch(
    evaluator: &mut NllEvaluator,
    model: &dyn ExperimentModel,
    flow: &ConditionalFlow,
    params: &[Tensor],
    lambda: &[f64],
    log_prior: &[f64],
    xs: &[f64],
    reparam: bool,
    key: StreamKey,
    exec: ExecMode,
) -> Result<BaLoss> {
    let n = xs.len();
    let sim = simulate_batch(model, flow, lambda, xs, reparam, key, exec)?;
    let g = evaluator.evaluate(flow, params, lambda, &sim.ctx, n, exec)?;
    let scale = 1.0 / n as f64;
    let loss = g.nll_sum * scale;
    if !loss.is_finite() {
        return Err(Error::Diverged("non-finite loss".into()));
    }
    let grads = g
        .grads
        .into_iter()
        .map(|t| {
            let data = t.data().iter().map(|v| v * scale).collect();
            Tensor::new(t.shape(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    let x_grad = sim.dctx_dx.map(|dc| {
        g.ctx_grad.iter().zip(&dc).map(|(a, b)| a * b).sum::<f64>() * scale
    });
    let gains: Vec<f64> = g.log_q.iter().zip(log_prior).map(|(q, p)| q - p).collect();
    let (eig, eig_stderr) = mean_stderr(&gains);
    Ok(BaLoss {
        loss,
        eig,
        eig_stderr,
        grads,
        x_grad,
    })
}

/// Barber–Agakov loss for one fresh batch at the flow's current parameters.
pub fn ba_loss(
    chain: &PriorChain,
    model: &dyn ExperimentModel,
    flow: &ConditionalFlow,
    source: XSource,
    batch: usize,
    key: StreamKey,
    exec: ExecMode,
) -> Result<BaLoss> {
    if batch == 0 {
        return Err(Error::invalid("batch must be at least 1"));
    }
    let (lambda, log_prior) = chain.sample(batch, key.child(0), exec);
    let mut rng = key.child(1).rng(0);
    let (lo, hi) = model.setting_domain();
    let (xs, reparam): (Vec<f64>, bool) = match source {
        XSource::Fixed(x) => (vec![x; batch], false),
        XSource::Uniform => ((0..batch).map(|_| rng.random_range(lo..=hi)).collect(), false),
        XSource::Trainable { init, .. } => (vec![init; batch], true),
    };
    let mut evaluator = NllEvaluator::new(flow);
    evaluate_batch(
        &mut evaluator,
        model,
        flow,
        flow.params(),
        &lambda,
        &log_prior,
        &xs,
        reparam,
        key.child(2),
        exec,
    )
}

/// Stateful Adam training of a flow against the Barber–Agakov bound.
pub struct Trainer<'a> {
    chain: &'a PriorChain,
    model: &'a dyn ExperimentModel,
    flow: ConditionalFlow,
    params: Vec<Tensor>,
    adam: AdamState,
    evaluator: NllEvaluator,
    config: TrainConfig,
    source: XSource,
    x: f64,
    x_adam: Option<AdamState>,
    key: StreamKey,
    exec: ExecMode,
    pool: Option<(Vec<f64>, Vec<f64>)>,
    iteration: usize,
    losses: Vec<f64>,
    last: Option<BaLoss>,
}

impl<'a> Trainer<'a> {
    /// Starts from `flow`'s parameters. `key` is the step's training stream.
    pub fn new(
        chain: &'a PriorChain,
        model: &'a dyn ExperimentModel,
        flow: ConditionalFlow,
        config: TrainConfig,
        source: XSource,
        key: StreamKey,
        exec: ExecMode,
    ) -> Result<Self> {
        config.validate()?;
        if flow.dim() != model.param_dim() || flow.context_spec().observation_dim() != model.observation().dim() {
            return Err(Error::shape("train", "flow does not match the model"));
        }
        let (lo, hi) = model.setting_domain();
        let (x, x_adam) = match source {
            XSource::Trainable { init, learning_rate } => {
                if !(lo..=hi).contains(&init) {
                    return Err(Error::invalid(format!("initial setting {init} outside [{lo}, {hi}]")));
                }
                let xt = [Tensor::scalar(init)];
                (init, Some(AdamState::new(AdamConfig::with_learning_rate(learning_rate), &xt)))
            }
            XSource::Fixed(x) => (x, None),
            XSource::Uniform => (f64::NAN, None),
        };
        let pool = if chain.step() > 0 {
            Some(chain.sample(config.prior_pool, key.child(u64::MAX), exec))
        } else {
            None
        };
        let params = flow.params().to_vec();
        Ok(Trainer {
            chain,
            model,
            adam: AdamState::new(AdamConfig::with_learning_rate(config.learning_rate), &params),
            evaluator: NllEvaluator::new(&flow),
            params,
            flow,
            config,
            source,
            x,
            x_adam,
            key,
            exec,
            pool,
            iteration: 0,
            losses: Vec::new(),
            last: None,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn last(&self) -> Option<&BaLoss> {
        self.last.as_ref()
    }

    /// Current setting in trainable mode, the fixed setting otherwise.
    pub fn setting(&self) -> f64 {
        self.x
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    /// A copy of the flow at the current parameters.
    pub fn flow(&self) -> Result<ConditionalFlow> {
        let mut f = self.flow.clone();
        f.set_params(self.params.clone())?;
        Ok(f)
    }

    fn draw_prior(&self, key: StreamKey) -> (Vec<f64>, Vec<f64>) {
        let b = self.config.batch;
        match &self.pool {
            None => self.chain.sample(b, key, self.exec),
            Some((lambda, logp)) => {
                let d = self.chain.dim();
                let size = logp.len();
                let mut rng = key.rng(0);
                let mut out_l = Vec::with_capacity(b * d);
                let mut out_p = Vec::with_capacity(b);
                for _ in 0..b {
                    let i = rng.random_range(0..size);
                    out_l.extend_from_slice(&lambda[i * d..(i + 1) * d]);
                    out_p.push(logp[i]);
                }
                (out_l, out_p)
            }
        }
    }

    /// One Adam step. Returns the batch loss.
    pub fn step(&mut self) -> Result<f64> {
        let it = self.key.child(self.iteration as u64);
        let (lambda, log_prior) = self.draw_prior(it.child(0));
        let b = self.config.batch;
        let (lo, hi) = self.model.setting_domain();
        let xs: Vec<f64> = match self.source {
            XSource::Uniform => {
                let mut rng = it.child(1).rng(0);
                (0..b).map(|_| rng.random_range(lo..=hi)).collect()
            }
            _ => vec![self.x; b],
        };
        let reparam = matches!(self.source, XSource::Trainable { .. });
        let out = evaluate_batch(
            &mut self.evaluator,
            self.model,
            &self.flow,
            &self.params,
            &lambda,
            &log_prior,
            &xs,
            reparam,
            it.child(2),
            self.exec,
        )?;
        self.adam.config.learning_rate = self.config.learning_rate_at(self.iteration);
        adam_step(&mut self.params, &out.grads, &mut self.adam)?;
        if let (Some(adam), Some(gx)) = (self.x_adam.as_mut(), out.x_grad) {
            let mut xt = [Tensor::scalar(self.x)];
            adam_step(&mut xt, &[Tensor::scalar(gx)], adam)?;
            self.x = xt[0].item().clamp(lo, hi);
        }
        for p in &self.params {
            if !p.is_finite() {
                return Err(Error::Diverged("non-finite parameter after update".into()));
            }
        }
        let loss = out.loss;
        self.losses.push(loss);
        self.last = Some(out);
        self.iteration += 1;
        Ok(loss)
    }

    fn should_stop(&self) -> bool {
        let t = self.iteration;
        if t < self.config.steps {
            return false;
        }
        match &self.config.early_stop {
            None => true,
            Some(es) => {
                if t >= es.max_steps {
                    return true;
                }
                if t < 2 * es.window {
                    return false;
                }
                let l = &self.losses;
                let recent = l[t - es.window..].iter().sum::<f64>() / es.window as f64;
                let before = l[t - 2 * es.window..t - es.window].iter().sum::<f64>() / es.window as f64;
                (recent - before).abs() < es.threshold
            }
        }
    }
}

/// Outcome of [`train_posterior`].
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    /// Mean loss over the last `min(100, steps)` iterations.
    pub loss_final: f64,
    pub steps: usize,
    /// Whether training was restarted at half the learning rate.
    pub restarted: bool,
    /// Final setting in trainable mode.
    pub setting: Option<f64>,
    /// Whether the loss averaged over consecutive 500-step windows never
    /// increased.
    pub windows_nonincreasing: bool,
}

/// Means of consecutive non-overlapping windows; a trailing partial window is
/// dropped.
pub fn window_means(losses: &[f64], window: usize) -> Vec<f64> {
    losses
        .chunks_exact(window)
        .map(|c| c.iter().sum::<f64>() / window as f64)
        .collect()
}

/// Trains `flow` (warm start) against the current prior. On divergence the
/// run restarts once from the same starting point at half the learning rate.
pub fn train_posterior(
    chain: &PriorChain,
    model: &dyn ExperimentModel,
    flow: &ConditionalFlow,
    config: &TrainConfig,
    source: XSource,
    key: StreamKey,
    exec: ExecMode,
) -> Result<(ConditionalFlow, TrainReport)> {
    let run = |cfg: TrainConfig, key: StreamKey| -> Result<(ConditionalFlow, Vec<f64>, f64)> {
        let mut trainer = Trainer::new(chain, model, flow.clone(), cfg, source, key, exec)?;
        while !trainer.should_stop() {
            trainer.step()?;
        }
        let x = trainer.setting();
        Ok((trainer.flow()?, trainer.losses, x))
    };
    let (result, restarted) = match run(config.clone(), key) {
        Ok(r) => (r, false),
        Err(Error::Diverged(_)) | Err(Error::NonFinite { .. }) | Err(Error::LogDomain { .. }) => {
            let mut halved = config.clone();
            halved.learning_rate *= 0.5;
            halved.final_learning_rate = halved.final_learning_rate.map(|f| f * 0.5);
            match run(halved, key.child(0xDEAD)) {
                Ok(r) => (r, true),
                Err(e) => return Err(Error::Diverged(format!("training diverged twice: {e}"))),
            }
        }
        Err(e) => return Err(e),
    };
    let (trained, losses, x) = result;
    let tail = losses.len().min(100);
    let loss_final = losses[losses.len() - tail..].iter().sum::<f64>() / tail as f64;
    let windows = window_means(&losses, 500);
    let windows_nonincreasing = windows.windows(2).all(|w| w[1] <= w[0]);
    Ok((
        trained,
        TrainReport {
            steps: losses.len(),
            losses,
            loss_final,
            restarted,
            setting: matches!(source, XSource::Trainable { .. }).then_some(x),
            windows_nonincreasing,
        },
    ))
}
