use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{ExperimentModel, GaussianPrior, ObservationKind};
use crate::error::{Error, Result};
use crate::flow::ContextSpec;

/// Scalar linear-Gaussian experiment `y = gain·λ + σ(x)·ε` with
/// `λ ~ N(0, σ0²)` and `σ(x) = σ_ε (1 + slope·|x|)`, x in `[-1, 1]`.
///
/// `gain = 0` gives an experiment that carries no information about λ.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugateGaussian {
    pub prior_std: f64,
    pub noise_std: f64,
    pub slope: f64,
    pub gain: f64,
}

impl ConjugateGaussian {
    pub fn new(prior_std: f64, noise_std: f64) -> Result<Self> {
        Self::with_shape(prior_std, noise_std, 0.0, 1.0)
    }

    pub fn with_shape(prior_std: f64, noise_std: f64, slope: f64, gain: f64) -> Result<Self> {
        if !(prior_std > 0.0 && noise_std > 0.0 && slope >= 0.0 && gain.is_finite()) {
            return Err(Error::invalid(format!(
                "conjugate model needs σ0 > 0, σ_ε > 0, slope ≥ 0 (got {prior_std}, {noise_std}, {slope})"
            )));
        }
        Ok(ConjugateGaussian {
            prior_std,
            noise_std,
            slope,
            gain,
        })
    }

    pub fn noise_at(&self, x: f64) -> f64 {
        self.noise_std * (1.0 + self.slope * x.abs())
    }

    /// Posterior `(mean, std)` after observing `(x, y)` pairs.
    pub fn posterior(&self, observations: &[(f64, f64)]) -> (f64, f64) {
        self.posterior_from(0.0, self.prior_std, observations)
    }

    /// Conjugate update starting from `N(mean, std²)`.
    pub fn posterior_from(&self, mean: f64, std: f64, observations: &[(f64, f64)]) -> (f64, f64) {
        let mut precision = 1.0 / (std * std);
        let mut weighted = mean * precision;
        for &(x, y) in observations {
            let s = self.noise_at(x);
            precision += self.gain * self.gain / (s * s);
            weighted += self.gain * y / (s * s);
        }
        (weighted / precision, precision.powf(-0.5))
    }

    /// Mutual information between λ and y at setting x under the base prior.
    pub fn mutual_information(&self, x: f64) -> f64 {
        self.mutual_information_from(self.prior_std, x)
    }

    pub fn mutual_information_from(&self, std: f64, x: f64) -> f64 {
        let s = self.noise_at(x);
        0.5 * (1.0 + self.gain * self.gain * std * std / (s * s)).ln()
    }

    /// Predictive `(mean, std)` of y at x when λ ~ N(mean, std²).
    pub fn predictive(&self, mean: f64, std: f64, x: f64) -> (f64, f64) {
        let s = self.noise_at(x);
        (self.gain * mean, (self.gain * self.gain * std * std + s * s).sqrt())
    }
}

/// `KL(N(m1, s1²) ‖ N(m0, s0²))`
pub fn gaussian_kl(m1: f64, s1: f64, m0: f64, s0: f64) -> f64 {
    let r = (s1 * s1) / (s0 * s0);
    0.5 * (r - r.ln() + (m1 - m0).powi(2) / (s0 * s0) - 1.0)
}

impl ExperimentModel for ConjugateGaussian {
    fn name(&self) -> &'static str {
        "conjugate"
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn setting_domain(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    fn observation(&self) -> ObservationKind {
        ObservationKind::Continuous { dim: 1 }
    }

    fn prior(&self) -> GaussianPrior {
        GaussianPrior::new(vec![0.0], vec![self.prior_std])
    }

    fn context_spec(&self) -> ContextSpec {
        let scale = (self.gain * self.gain * self.prior_std * self.prior_std
            + self.noise_std * self.noise_std)
            .sqrt();
        ContextSpec::new(-1.0, 1.0, vec![0.0], vec![scale])
    }

    fn response(&self, lambda: &[f64], _x: f64) -> Result<Vec<f64>> {
        if lambda.len() != 1 {
            return Err(Error::shape("conjugate", format!("λ has {} entries", lambda.len())));
        }
        Ok(vec![self.gain * lambda[0]])
    }

    fn sample_observation(&self, response: &[f64], x: f64, rng: &mut dyn RngCore, y: &mut [f64]) {
        let e: f64 = rng.sample(StandardNormal);
        y[0] = response[0] + self.noise_at(x) * e;
    }

    fn log_likelihood_at(&self, y: &[f64], response: &[f64], x: f64) -> Result<f64> {
        if y.len() != 1 {
            return Err(Error::Observation(format!("scalar observation expected, got {}", y.len())));
        }
        let s = self.noise_at(x);
        let u = (y[0] - response[0]) / s;
        Ok(-0.5 * u * u - s.ln() - 0.5 * (2.0 * PI).ln())
    }

    fn reparameterized(&self, lambda: &[f64], x: f64, noise: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let y = self.gain * lambda[0] + self.noise_at(x) * noise[0];
        // d|x|/dx taken as 0 at the kink
        let dsigma = self.noise_std * self.slope * if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
        Some((vec![y], vec![dsigma * noise[0]]))
    }
}
