use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{Binomial, Distribution};

use super::{ExperimentModel, GaussianPrior, ObservationKind};
use crate::error::{Error, Result};
use crate::flow::ContextSpec;

const P_FLOOR: f64 = 1e-12;
pub const MAX_QUBITS: usize = 10;

/// Transverse-coupled spin chain. The ground state is kicked by a π pulse on
/// qubit 0, evolves for time x, and qubit 0 is measured `shots` times. λ holds
/// the qubit frequencies.
///
/// Basis states are bit strings where bit i set means qubit i is up.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitChain {
    qubits: usize,
    coupling: f64,
    shots: u32,
}

/// Eigendecomposition of the chain Hamiltonian for one λ together with the
/// post-pulse state expressed in the eigenbasis.
#[derive(Clone, Debug)]
pub struct QubitSpectrum {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<f64>,
    /// Ground state with its first non-negligible amplitude made positive.
    pub ground: DVector<f64>,
    /// Eigenbasis coefficients of the state right after the pulse (up to the
    /// global phase `-i`).
    pub kicked: DVector<f64>,
    /// Whether the lowest eigenvalue is (numerically) degenerate.
    pub degenerate: bool,
}

impl QubitChain {
    pub fn new(qubits: usize, coupling: f64, shots: u32) -> Result<Self> {
        if qubits == 0 || qubits > MAX_QUBITS {
            return Err(Error::invalid(format!("qubit count must be in 1..={MAX_QUBITS}, got {qubits}")));
        }
        if shots == 0 {
            return Err(Error::invalid("n_shots must be at least 1"));
        }
        if !coupling.is_finite() {
            return Err(Error::invalid("non-finite coupling"));
        }
        Ok(QubitChain {
            qubits,
            coupling,
            shots,
        })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn shots(&self) -> u32 {
        self.shots
    }

    pub fn hamiltonian(&self, lambda: &[f64]) -> DMatrix<f64> {
        let n = self.qubits;
        let dim = 1usize << n;
        let mut h = DMatrix::zeros(dim, dim);
        for s in 0..dim {
            h[(s, s)] = (0..n)
                .map(|i| if s >> i & 1 == 1 { lambda[i] } else { -lambda[i] })
                .sum();
            for i in 0..n.saturating_sub(1) {
                let flipped = s ^ (0b11 << i);
                h[(flipped, s)] += self.coupling;
            }
        }
        h
    }

    pub fn spectrum(&self, lambda: &[f64]) -> Result<QubitSpectrum> {
        if lambda.len() != self.qubits {
            return Err(Error::shape(
                "qubit",
                format!("{} frequencies for {} qubits", lambda.len(), self.qubits),
            ));
        }
        let eig = SymmetricEigen::new(self.hamiltonian(lambda));
        let energies: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let vectors = eig.eigenvectors;
        let mut lowest = 0;
        for (k, &e) in energies.iter().enumerate() {
            if e < energies[lowest] {
                lowest = k;
            }
        }
        let e0 = energies[lowest];
        let tol = 1e-10 * (1.0 + e0.abs());
        let degenerate = energies
            .iter()
            .enumerate()
            .any(|(k, &e)| k != lowest && (e - e0).abs() < tol);

        let mut ground = vectors.column(lowest).into_owned();
        if let Some(first) = ground.iter().find(|a| a.abs() > 1e-14) {
            if *first < 0.0 {
                ground.neg_mut();
            }
        }
        let dim = ground.len();
        let flipped = DVector::from_fn(dim, |s, _| ground[s ^ 1]);
        let kicked = vectors.tr_mul(&flipped);
        Ok(QubitSpectrum {
            energies,
            vectors,
            ground,
            kicked,
            degenerate,
        })
    }

    /// Probability of finding qubit 0 up after evolving for `t`.
    pub fn p_up_with(&self, spec: &QubitSpectrum, t: f64) -> f64 {
        let amps = evolve(spec, t);
        let p: f64 = amps
            .iter()
            .enumerate()
            .filter(|(s, _)| s & 1 == 1)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        p.clamp(0.0, 1.0)
    }

    pub fn p_up(&self, lambda: &[f64], t: f64) -> Result<f64> {
        Ok(self.p_up_with(&self.spectrum(lambda)?, t))
    }

    /// The state after each pipeline stage: ground state, post-pulse state,
    /// evolved state.
    pub fn pipeline_states(&self, lambda: &[f64], t: f64) -> Result<[Vec<Complex64>; 3]> {
        let spec = self.spectrum(lambda)?;
        let ground: Vec<Complex64> = spec.ground.iter().map(|&a| Complex64::new(a, 0.0)).collect();
        // exp(-iπ/2 σ_x) = -i σ_x
        let kicked: Vec<Complex64> = (0..ground.len())
            .map(|s| Complex64::new(0.0, -1.0) * ground[s ^ 1])
            .collect();
        let evolved = evolve(&spec, t)
            .into_iter()
            .map(|a| Complex64::new(0.0, -1.0) * a)
            .collect();
        Ok([ground, kicked, evolved])
    }
}

/// `V exp(-iEt) c`
fn evolve(spec: &QubitSpectrum, t: f64) -> Vec<Complex64> {
    let phased: Vec<Complex64> = spec
        .energies
        .iter()
        .zip(spec.kicked.iter())
        .map(|(&e, &c)| Complex64::from_polar(c, -e * t))
        .collect();
    let dim = phased.len();
    (0..dim)
        .map(|s| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, p) in phased.iter().enumerate() {
                acc += spec.vectors[(s, k)] * p;
            }
            acc
        })
        .collect()
}

/// `log C(n, k) + k log p + (n - k) log(1 - p)` with p kept away from 0 and 1.
pub fn binomial_log_pmf(n: u32, k: u32, p: f64) -> f64 {
    let p = p.clamp(P_FLOOR, 1.0 - P_FLOOR);
    let k_small = k.min(n - k);
    let mut log_choose = 0.0;
    for i in 1..=k_small {
        log_choose += ((n - k_small + i) as f64 / i as f64).ln();
    }
    log_choose + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()
}

impl ExperimentModel for QubitChain {
    fn name(&self) -> &'static str {
        "qubit"
    }

    fn param_dim(&self) -> usize {
        self.qubits
    }

    fn setting_domain(&self) -> (f64, f64) {
        (0.0, 5.0)
    }

    fn observation(&self) -> ObservationKind {
        ObservationKind::Counts { shots: self.shots }
    }

    fn prior(&self) -> GaussianPrior {
        GaussianPrior::new(vec![1.0; self.qubits], vec![0.25; self.qubits])
    }

    fn context_spec(&self) -> ContextSpec {
        let (lo, hi) = self.setting_domain();
        let half = self.shots as f64 / 2.0;
        // the posterior oscillates with the pulse duration; sine/cosine
        // features let the context network follow it
        ContextSpec::new(lo, hi, vec![half], vec![half]).with_x_harmonics(8)
    }

    fn response(&self, lambda: &[f64], x: f64) -> Result<Vec<f64>> {
        Ok(vec![self.p_up(lambda, x)?])
    }

    fn response_grid(&self, lambda: &[f64], xs: &[f64]) -> Result<Vec<Vec<f64>>> {
        let spec = self.spectrum(lambda)?;
        Ok(xs.iter().map(|&t| vec![self.p_up_with(&spec, t)]).collect())
    }

    fn sample_observation(&self, response: &[f64], _x: f64, rng: &mut dyn RngCore, y: &mut [f64]) {
        let k = Binomial::new(self.shots as u64, response[0].clamp(0.0, 1.0))
            .expect("probability lies in [0, 1]")
            .sample(rng);
        y[0] = k as f64;
    }

    fn log_likelihood_at(&self, y: &[f64], response: &[f64], _x: f64) -> Result<f64> {
        let k = y.first().copied().unwrap_or(-1.0);
        if y.len() != 1 || k < 0.0 || k > self.shots as f64 || k.fract() != 0.0 {
            return Err(Error::Observation(format!(
                "expected an up-count in 0..={}, got {y:?}",
                self.shots
            )));
        }
        Ok(binomial_log_pmf(self.shots, k as u32, response[0]))
    }
}
