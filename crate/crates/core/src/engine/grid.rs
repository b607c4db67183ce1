/// A one-dimensional density discretized on fixed points, updated by
/// multiplying in likelihoods and renormalizing.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPosterior {
    points: Vec<f64>,
    log_weights: Vec<f64>,
}

fn normalize(log_w: &mut [f64]) {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_w.iter().map(|l| (l - max).exp()).sum();
    let log_total = max + total.ln();
    for l in log_w.iter_mut() {
        *l -= log_total;
    }
}

impl GridPosterior {
    pub fn new(points: Vec<f64>, log_density: impl Fn(f64) -> f64) -> Self {
        let mut log_weights: Vec<f64> = points.iter().map(|&p| log_density(p)).collect();
        normalize(&mut log_weights);
        GridPosterior { points, log_weights }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    /// Multiplies in `exp(log_likelihood(λ))` and renormalizes.
    pub fn update(&self, log_likelihood: impl Fn(f64) -> f64) -> Self {
        let mut log_weights: Vec<f64> = self
            .points
            .iter()
            .zip(&self.log_weights)
            .map(|(&p, &l)| l + log_likelihood(p))
            .collect();
        normalize(&mut log_weights);
        GridPosterior {
            points: self.points.clone(),
            log_weights,
        }
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().zip(self.weights()).map(|(p, w)| p * w).sum()
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        self.points
            .iter()
            .zip(self.weights())
            .map(|(p, w)| w * (p - m).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn total_variation(&self, other: &GridPosterior) -> f64 {
        assert_eq!(self.points, other.points, "grids differ");
        0.5 * self
            .weights()
            .iter()
            .zip(other.weights())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}
