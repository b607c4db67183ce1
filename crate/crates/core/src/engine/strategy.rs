use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scan::linspace;
use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// How the next setting is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Maximize the expected information gain.
    Active,
    /// Uniform over the setting domain.
    Random,
    /// Always the same setting.
    Fixed(f64),
    /// Cycle through this many equally spaced settings.
    UniformSweep(usize),
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::Active => "active".into(),
            Strategy::Random => "random".into(),
            Strategy::Fixed(x) => format!("fixed({x})"),
            Strategy::UniformSweep(k) => format!("uniform_sweep({k})"),
        }
    }

    pub fn validate(&self, domain: (f64, f64)) -> Result<()> {
        match *self {
            Strategy::Fixed(x) if !(domain.0..=domain.1).contains(&x) => Err(Error::invalid(format!(
                "fixed setting {x} outside [{}, {}]",
                domain.0, domain.1
            ))),
            Strategy::UniformSweep(0) => Err(Error::invalid("uniform sweep needs at least one point")),
            _ => Ok(()),
        }
    }
}

/// Index of the largest value; ties go to the lowest index. NaNs are
/// ignored.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] >= *v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Picks the setting for the measurement at 0-based `step_index`.
/// `curve` is the grid and its EIG values, required for `Active`.
pub fn select_x(
    strategy: Strategy,
    domain: (f64, f64),
    curve: Option<(&[f64], &[f64])>,
    step_index: usize,
    key: StreamKey,
) -> Result<f64> {
    strategy.validate(domain)?;
    match strategy {
        Strategy::Active => {
            let (xs, values) = curve.ok_or_else(|| Error::invalid("active selection needs an EIG curve"))?;
            let i = argmax_first(values).ok_or_else(|| Error::invalid("EIG curve has no finite value"))?;
            Ok(xs[i])
        }
        Strategy::Random => Ok(key.rng(0).random_range(domain.0..=domain.1)),
        Strategy::Fixed(x) => Ok(x),
        Strategy::UniformSweep(k) => Ok(linspace(domain.0, domain.1, k)[step_index % k]),
    }
}
