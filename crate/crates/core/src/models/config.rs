use serde::{Deserialize, Serialize};

use super::{CavityArray, ConjugateGaussian, ExperimentModel, QubitChain};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavityConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "J")]
    pub j: Vec<f64>,
    pub kappa_int: f64,
    pub kappa_ext: f64,
    pub eps: f64,
    pub true_lambda: Vec<f64>,
}

impl Default for CavityConfig {
    fn default() -> Self {
        CavityConfig {
            n: 6,
            j: vec![2.733, 2.615, 1.956, 1.568, 2.620],
            kappa_int: 0.5,
            kappa_ext: 0.5,
            eps: 0.05,
            true_lambda: vec![1.040, 0.326, 0.520, 0.900, -0.466, 0.004],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QubitConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub n_shots: u32,
    pub true_lambda: Vec<f64>,
}

impl Default for QubitConfig {
    fn default() -> Self {
        QubitConfig {
            n: 4,
            j: 1.7,
            n_shots: 100,
            true_lambda: vec![1.163, 1.003, 1.045, 0.910],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConjugateConfig {
    pub prior_std: f64,
    pub noise_std: f64,
    pub slope: f64,
    pub gain: f64,
    pub true_lambda: Vec<f64>,
}

impl Default for ConjugateConfig {
    fn default() -> Self {
        ConjugateConfig {
            prior_std: 1.0,
            noise_std: 1.0,
            slope: 0.0,
            gain: 1.0,
            true_lambda: vec![0.5],
        }
    }
}

/// Model section of a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Cavity(CavityConfig),
    Qubit(QubitConfig),
    Conjugate(ConjugateConfig),
}

impl ModelConfig {
    pub fn true_lambda(&self) -> &[f64] {
        match self {
            ModelConfig::Cavity(c) => &c.true_lambda,
            ModelConfig::Qubit(c) => &c.true_lambda,
            ModelConfig::Conjugate(c) => &c.true_lambda,
        }
    }

    pub fn build(&self) -> Result<Box<dyn ExperimentModel>> {
        let model: Box<dyn ExperimentModel> = match self {
            ModelConfig::Cavity(c) => {
                if c.n == 0 || c.j.len() + 1 != c.n {
                    return Err(Error::invalid(format!(
                        "cavity N = {} needs {} couplings, got {}",
                        c.n,
                        c.n.saturating_sub(1),
                        c.j.len()
                    )));
                }
                Box::new(CavityArray::new(c.j.clone(), c.kappa_int, c.kappa_ext, c.eps)?)
            }
            ModelConfig::Qubit(c) => Box::new(QubitChain::new(c.n, c.j, c.n_shots)?),
            ModelConfig::Conjugate(c) => Box::new(ConjugateGaussian::with_shape(
                c.prior_std,
                c.noise_std,
                c.slope,
                c.gain,
            )?),
        };
        if self.true_lambda().len() != model.param_dim() {
            return Err(Error::invalid(format!(
                "true_lambda has {} entries, model has {} parameters",
                self.true_lambda().len(),
                model.param_dim()
            )));
        }
        if self.true_lambda().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("true_lambda must be finite"));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys() {
        let cfg: ModelConfig = serde_json::from_str(
            r#"{"kind":"cavity","N":3,"J":[2.733,2.615],"kappa_int":0.5,"kappa_ext":0.5,"eps":0.05,"true_lambda":[1.04,0.326,0.52]}"#,
        )
        .unwrap();
        assert_eq!(cfg.build().unwrap().param_dim(), 3);
        let cfg: ModelConfig =
            serde_json::from_str(r#"{"kind":"qubit","N":2,"J":1.7,"n_shots":100,"true_lambda":[1.163,1.003]}"#)
                .unwrap();
        assert_eq!(cfg.build().unwrap().name(), "qubit");
    }

    #[test]
    fn rejects_unknown_keys_and_bad_shapes() {
        assert!(serde_json::from_str::<ModelConfig>(
            r#"{"kind":"qubit","N":2,"J":1.7,"n_shots":100,"true_lambda":[1,1],"extra":1}"#
        )
        .is_err());
        let bad = ModelConfig::Cavity(CavityConfig {
            n: 3,
            ..Default::default()
        });
        assert!(bad.build().is_err());
        let bad = ModelConfig::Qubit(QubitConfig {
            true_lambda: vec![1.0],
            ..Default::default()
        });
        assert!(bad.build().is_err());
    }

    #[test]
    fn missing_fields_take_table_defaults() {
        let cfg: ModelConfig = serde_json::from_str(r#"{"kind":"cavity"}"#).unwrap();
        assert_eq!(cfg, ModelConfig::Cavity(CavityConfig::default()));
        let cfg: ModelConfig = serde_json::from_str(r#"{"kind":"conjugate","slope":1.0}"#).unwrap();
        let ModelConfig::Conjugate(c) = cfg else { panic!() };
        assert_eq!((c.slope, c.gain, c.prior_std), (1.0, 1.0, 1.0));
    }

    #[test]
    fn defaults_build() {
        for cfg in [
            ModelConfig::Cavity(Default::default()),
            ModelConfig::Qubit(Default::default()),
            ModelConfig::Conjugate(Default::default()),
        ] {
            cfg.build().unwrap();
        }
    }
}
