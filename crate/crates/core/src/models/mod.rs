//! Simulated experiments.

mod cavity;
mod config;
mod conjugate;
mod qubit;

pub use cavity::CavityArray;
pub use config::{CavityConfig, ConjugateConfig, ModelConfig, QubitConfig};
pub use conjugate::{gaussian_kl, ConjugateGaussian};
pub use qubit::{binomial_log_pmf, QubitChain, QubitSpectrum};

use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flow::{ContextSpec, Standardizer};

/// Shape of a single measurement outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservationKind {
    /// Real vector of the given length.
    Continuous { dim: usize },
    /// Up-count out of `shots` repetitions, stored as a single real.
    Counts { shots: u32 },
}

impl ObservationKind {
    pub fn dim(self) -> usize {
        match self {
            ObservationKind::Continuous { dim } => dim,
            ObservationKind::Counts { .. } => 1,
        }
    }
}

/// Independent Gaussian prior per parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Self {
        assert_eq!(mean.len(), std.len());
        assert!(std.iter().all(|s| *s > 0.0));
        GaussianPrior { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        for ((o, m), s) in out.iter_mut().zip(&self.mean).zip(&self.std) {
            let z: f64 = rng.sample(StandardNormal);
            *o = m + s * z;
        }
    }

    pub fn log_prob(&self, lambda: &[f64]) -> f64 {
        lambda
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((l, m), s)| {
                let u = (l - m) / s;
                -0.5 * u * u - s.ln() - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    /// The affine map taking this prior to a standard normal.
    pub fn standardizer(&self) -> Standardizer {
        Standardizer {
            loc: self.mean.clone(),
            scale: self.std.clone(),
        }
    }
}

/// A simulated experiment: unknown parameters λ, a scalar setting x and a
/// stochastic observation y.
pub trait ExperimentModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn param_dim(&self) -> usize;

    fn setting_domain(&self) -> (f64, f64);

    fn observation(&self) -> ObservationKind;

    fn prior(&self) -> GaussianPrior;

    /// Normalization of (x, y) into the flow's context.
    fn context_spec(&self) -> ContextSpec;

    /// Noise-free response at (λ, x): the observation mean for continuous
    /// outcomes, the success probability for counts.
    fn response(&self, lambda: &[f64], x: f64) -> Result<Vec<f64>>;

    /// Draws one observation around a precomputed response.
    fn sample_observation(&self, response: &[f64], x: f64, rng: &mut dyn RngCore, y: &mut [f64]);

    /// `log P(y | λ, x)` given the response at (λ, x).
    fn log_likelihood_at(&self, y: &[f64], response: &[f64], x: f64) -> Result<f64>;

    /// For models whose observation is `response + noise` with x-independent
    /// noise shape: `(y, ∂y/∂x)` for a fixed standard-normal noise draw. Used
    /// for gradient steps on the setting.
    fn reparameterized(&self, _lambda: &[f64], _x: f64, _noise: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }

    fn simulate_into(&self, lambda: &[f64], x: f64, rng: &mut dyn RngCore, y: &mut [f64]) -> Result<()> {
        let r = self.response(lambda, x)?;
        self.sample_observation(&r, x, rng, y);
        Ok(())
    }

    fn simulate(&self, lambda: &[f64], x: f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.observation().dim()];
        self.simulate_into(lambda, x, rng, &mut y)?;
        Ok(y)
    }

    fn log_likelihood(&self, y: &[f64], lambda: &[f64], x: f64) -> Result<f64> {
        let r = self.response(lambda, x)?;
        self.log_likelihood_at(y, &r, x)
    }

    /// Responses for many settings at one λ. Models with expensive per-λ
    /// setup override this.
    fn response_grid(&self, lambda: &[f64], xs: &[f64]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|&x| self.response(lambda, x)).collect()
    }
}
