use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{ExperimentModel, GaussianPrior, ObservationKind};
use crate::error::{Error, Result};
use crate::flow::ContextSpec;

/// A chain of coupled single-mode cavities probed in transmission from the
/// first to the last port. λ holds the cavity frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct CavityArray {
    couplings: Vec<f64>,
    kappa_int: f64,
    kappa_ext: f64,
    noise: f64,
}

impl CavityArray {
    /// `couplings` has one entry per neighbouring pair, so the array has
    /// `couplings.len() + 1` cavities.
    pub fn new(couplings: Vec<f64>, kappa_int: f64, kappa_ext: f64, noise: f64) -> Result<Self> {
        if kappa_int < 0.0 || kappa_ext <= 0.0 || noise <= 0.0 {
            return Err(Error::invalid(format!(
                "cavity decay and noise must be positive (kappa_int {kappa_int}, kappa_ext {kappa_ext}, eps {noise})"
            )));
        }
        if couplings.iter().any(|j| !j.is_finite()) {
            return Err(Error::invalid("non-finite coupling"));
        }
        Ok(CavityArray {
            couplings,
            kappa_int,
            kappa_ext,
            noise,
        })
    }

    pub fn cavities(&self) -> usize {
        self.couplings.len() + 1
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Total decay per cavity: the end cavities also leak into the ports.
    pub fn decay_rates(&self) -> Vec<f64> {
        let n = self.cavities();
        (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    self.kappa_int + self.kappa_ext
                } else {
                    self.kappa_int
                }
            })
            .collect()
    }

    fn port_coupling(&self) -> Vec<f64> {
        let n = self.cavities();
        (0..n)
            .map(|i| if i == 0 || i == n - 1 { self.kappa_ext.sqrt() } else { 0.0 })
            .collect()
    }

    /// Real symmetric tridiagonal frequency matrix.
    pub fn frequency_matrix(&self, lambda: &[f64]) -> DMatrix<f64> {
        let n = self.cavities();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = lambda[i];
        }
        for (i, &j) in self.couplings.iter().enumerate() {
            m[(i, i + 1)] = j;
            m[(i + 1, i)] = j;
        }
        m
    }

    /// `-i(ω - Ω) + diag(κ)/2`
    fn system_matrix(&self, lambda: &[f64], omega: f64) -> DMatrix<Complex64> {
        let n = self.cavities();
        let freq = self.frequency_matrix(lambda);
        let kappa = self.decay_rates();
        DMatrix::from_fn(n, n, |r, c| {
            let diag = if r == c { omega } else { 0.0 };
            let mut v = Complex64::new(0.0, -(diag - freq[(r, c)]));
            if r == c {
                v += kappa[r] / 2.0;
            }
            v
        })
    }

    /// Green function `[-i(ω - Ω) + diag(κ)/2]⁻¹`.
    pub fn green(&self, lambda: &[f64], omega: f64) -> Result<DMatrix<Complex64>> {
        self.check(lambda)?;
        self.system_matrix(lambda, omega)
            .lu()
            .try_inverse()
            .ok_or(Error::Singular)
    }

    /// Returns `(S_00, S_0,N-1)`.
    pub fn scattering(&self, lambda: &[f64], omega: f64) -> Result<(Complex64, Complex64)> {
        self.check(lambda)?;
        let n = self.cavities();
        let lu = self.system_matrix(lambda, omega).lu();
        let mut e0 = DVector::zeros(n);
        e0[0] = Complex64::new(1.0, 0.0);
        // the system matrix is complex symmetric, so column 0 of G is also row 0
        let g0 = lu.solve(&e0).ok_or(Error::Singular)?;
        let k = self.port_coupling();
        let s00 = Complex64::new(1.0, 0.0) - k[0] * k[0] * g0[0];
        let mut s0n = -k[0] * k[n - 1] * g0[n - 1];
        if n == 1 {
            s0n = s00;
        }
        Ok((s00, s0n))
    }

    /// Transmission element `S_0,N-1`.
    pub fn transmission(&self, lambda: &[f64], omega: f64) -> Result<Complex64> {
        Ok(self.scattering(lambda, omega)?.1)
    }

    /// `dS_0,N-1/dω`, using `dG/dω = i G²`.
    pub fn transmission_derivative(&self, lambda: &[f64], omega: f64) -> Result<Complex64> {
        let g = self.green(lambda, omega)?;
        let n = self.cavities();
        let k = self.port_coupling();
        let mut g2 = Complex64::new(0.0, 0.0);
        for m in 0..n {
            g2 += g[(0, m)] * g[(m, n - 1)];
        }
        Ok(-k[0] * k[n - 1] * Complex64::new(0.0, 1.0) * g2)
    }

    /// Normal-mode frequencies of the closed array, ascending.
    pub fn mode_frequencies(&self, lambda: &[f64]) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.frequency_matrix(lambda))
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    fn check(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.cavities() {
            return Err(Error::shape(
                "cavity",
                format!("{} frequencies for {} cavities", lambda.len(), self.cavities()),
            ));
        }
        Ok(())
    }
}

impl ExperimentModel for CavityArray {
    fn name(&self) -> &'static str {
        "cavity"
    }

    fn param_dim(&self) -> usize {
        self.cavities()
    }

    fn setting_domain(&self) -> (f64, f64) {
        (-12.0, 12.0)
    }

    fn observation(&self) -> ObservationKind {
        ObservationKind::Continuous { dim: 2 }
    }

    fn prior(&self) -> GaussianPrior {
        GaussianPrior::new(vec![0.0; self.cavities()], vec![1.0; self.cavities()])
    }

    fn context_spec(&self) -> ContextSpec {
        let (lo, hi) = self.setting_domain();
        // resonances are about one unit wide; a [-1, 1] encoding of the
        // whole sweep leaves them too narrow for the context network
        ContextSpec::new(lo, hi, vec![0.0, 0.0], vec![1.0, 1.0]).with_x_scale(1.0)
    }

    fn response(&self, lambda: &[f64], x: f64) -> Result<Vec<f64>> {
        let s = self.transmission(lambda, x)?;
        Ok(vec![s.re, s.im])
    }

    fn sample_observation(&self, response: &[f64], _x: f64, rng: &mut dyn RngCore, y: &mut [f64]) {
        for (yi, si) in y.iter_mut().zip(response) {
            let e: f64 = rng.sample(StandardNormal);
            *yi = si + self.noise * e;
        }
    }

    fn log_likelihood_at(&self, y: &[f64], response: &[f64], _x: f64) -> Result<f64> {
        if y.len() != 2 {
            return Err(Error::Observation(format!("cavity observation has 2 components, got {}", y.len())));
        }
        let var = self.noise * self.noise;
        let (dr, di) = (y[0] - response[0], y[1] - response[1]);
        Ok(-(dr * dr + di * di) / (2.0 * var) - (2.0 * PI * var).ln())
    }

    fn reparameterized(&self, lambda: &[f64], x: f64, noise: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let s = self.transmission(lambda, x).ok()?;
        let ds = self.transmission_derivative(lambda, x).ok()?;
        Some((
            vec![s.re + self.noise * noise[0], s.im + self.noise * noise[1]],
            vec![ds.re, ds.im],
        ))
    }
}
