use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

/// Moment accumulators for a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        AdamState {
            config,
            first: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            second: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, applied in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::shape(
            "adam",
            format!(
                "{} params, {} grads, {} accumulators",
                params.len(),
                grads.len(),
                state.first.len()
            ),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::shape(
                "adam",
                format!("param {:?} grad {:?}", p.shape(), g.shape()),
            ));
        }
    }
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mv = beta1 * *mv + (1.0 - beta1) * gv;
            *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
            let m_hat = *mv / bias1;
            let v_hat = *vv / bias2;
            *pv -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}
