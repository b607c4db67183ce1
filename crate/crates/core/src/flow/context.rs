use serde::{Deserialize, Serialize};

/// Normalization of a setting and an observation into the context vector
/// seen by the flow. The row is `[u, sin(πu/2), cos(πu/2), ..., sin(Hπu/2),
/// cos(Hπu/2), y']` where `u = (x - center) / x_scale` (by default the domain
/// maps onto `[-1, 1]`), `H` is `x_harmonics` and each observation component
/// becomes `y' = (y - offset) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextSpec {
    pub x_min: f64,
    pub x_max: f64,
    /// Setting units per encoded unit; `None` is the domain half-width.
    #[serde(default)]
    pub x_scale: Option<f64>,
    #[serde(default)]
    pub x_harmonics: usize,
    pub y_offset: Vec<f64>,
    pub y_scale: Vec<f64>,
}

impl ContextSpec {
    pub fn new(x_min: f64, x_max: f64, y_offset: Vec<f64>, y_scale: Vec<f64>) -> Self {
        assert!(x_max > x_min, "empty setting domain");
        assert_eq!(y_offset.len(), y_scale.len());
        assert!(y_scale.iter().all(|s| *s > 0.0));
        ContextSpec {
            x_min,
            x_max,
            x_scale: None,
            x_harmonics: 0,
            y_offset,
            y_scale,
        }
    }

    pub fn observation_dim(&self) -> usize {
        self.y_offset.len()
    }

    /// Width of the encoded context row.
    pub fn width(&self) -> usize {
        self.y_start() + self.observation_dim()
    }

    fn y_start(&self) -> usize {
        1 + 2 * self.x_harmonics
    }

    /// Adds `h` sine/cosine pairs of the encoded setting to the row, so the
    /// context network can resolve oscillatory dependence on `x`.
    pub fn with_x_harmonics(mut self, h: usize) -> Self {
        self.x_harmonics = h;
        self
    }

    /// Encodes settings at `scale` setting units per unit instead of the
    /// domain half-width. Needed when the response varies on scales much
    /// finer than the domain.
    pub fn with_x_scale(mut self, scale: f64) -> Self {
        assert!(scale > 0.0, "x scale must be positive");
        self.x_scale = Some(scale);
        self
    }

    fn x_unit(&self) -> f64 {
        self.x_scale.unwrap_or(0.5 * (self.x_max - self.x_min))
    }

    pub fn normalize_x(&self, x: f64) -> f64 {
        (x - 0.5 * (self.x_min + self.x_max)) / self.x_unit()
    }

    pub fn denormalize_x(&self, u: f64) -> f64 {
        0.5 * (self.x_min + self.x_max) + u * self.x_unit()
    }

    /// d(normalized x)/dx
    pub fn x_slope(&self) -> f64 {
        1.0 / self.x_unit()
    }

    fn harmonic(k: usize) -> f64 {
        std::f64::consts::FRAC_PI_2 * k as f64
    }

    /// Derivative of every setting column of the row with respect to `x`.
    /// Observation columns are left at zero.
    pub fn d_setting(&self, x: f64) -> Vec<f64> {
        let u = self.normalize_x(x);
        let du = self.x_slope();
        let mut out = vec![0.0; self.width()];
        out[0] = du;
        for k in 1..=self.x_harmonics {
            let w = Self::harmonic(k);
            out[2 * k - 1] = w * (w * u).cos() * du;
            out[2 * k] = -w * (w * u).sin() * du;
        }
        out
    }

    /// Column of observation component `i`.
    pub fn y_column(&self, i: usize) -> usize {
        self.y_start() + i
    }

    pub fn encode_into(&self, x: f64, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.observation_dim());
        let u = self.normalize_x(x);
        out[0] = u;
        for k in 1..=self.x_harmonics {
            let w = Self::harmonic(k);
            out[2 * k - 1] = (w * u).sin();
            out[2 * k] = (w * u).cos();
        }
        let start = self.y_start();
        for (i, (&yv, (&off, &sc))) in y
            .iter()
            .zip(self.y_offset.iter().zip(&self.y_scale))
            .enumerate()
        {
            out[start + i] = (yv - off) / sc;
        }
    }

    pub fn encode(&self, x: f64, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        self.encode_into(x, y, &mut out);
        out
    }

    pub fn decode(&self, ctx: &[f64]) -> (f64, Vec<f64>) {
        let x = self.denormalize_x(ctx[0]);
        let y = ctx[self.y_start()..]
            .iter()
            .zip(self.y_offset.iter().zip(&self.y_scale))
            .map(|(&c, (&off, &sc))| c * sc + off)
            .collect();
        (x, y)
    }
}
