//! Synthetic inflow forecasts: a trailing moving average of the true inflow
//! scaled by a clamped Gaussian multiplier whose spread grows along the horizon.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("index {index} outside series of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("horizon {k}+{h} exceeds series of length {len}")]
    HorizonExceedsSeries { k: usize, h: usize, len: usize },
    #[error("invalid forecast config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    /// Standard deviation of the multiplier at the first horizon position.
    pub a: f64,
    /// Growth of the standard deviation per horizon position.
    pub b: f64,
    /// Lower clamp on the multiplier.
    pub c: f64,
    /// Moving-average window in steps.
    pub window: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self { a: 0.05, b: 0.03, c: 0.1, window: 3 }
    }
}

impl ForecastConfig {
    /// Perfect foresight: the forecast reproduces the true inflow.
    pub fn certain() -> Self {
        Self { a: 0.0, b: 0.0, c: 0.1, window: 1 }
    }

    pub fn is_certain(&self) -> bool {
        self.a == 0.0 && self.b == 0.0 && self.window == 1
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        if !(self.a >= 0.0 && self.b >= 0.0) {
            return Err(ForecastError::InvalidConfig("a and b must be >= 0".into()));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(ForecastError::InvalidConfig("c must lie in (0, 1]".into()));
        }
        if self.window == 0 {
            return Err(ForecastError::InvalidConfig("window must be >= 1".into()));
        }
        Ok(())
    }

    /// Standard deviation of the multiplier at horizon position `pos`.
    pub fn std_at(&self, pos: usize) -> f64 {
        self.a + pos as f64 * self.b
    }
}

/// Trailing mean over `real[t-window+1..=t]`, truncated at the series start.
pub fn smooth_inflow(real: &[f64], t: usize, window: usize) -> Result<f64, ForecastError> {
    if t >= real.len() {
        return Err(ForecastError::IndexOutOfRange { index: t, len: real.len() });
    }
    let start = (t + 1).saturating_sub(window.max(1));
    let slice = &real[start..=t];
    Ok(slice.iter().sum::<f64>() / slice.len() as f64)
}

/// `1 + x` when it is at least `c`, otherwise `c`.
pub fn clamp_multiplier(x: f64, c: f64) -> f64 {
    if 1.0 + x >= c {
        1.0 + x
    } else {
        c
    }
}

/// Forecast for times `k..k+h` with one fresh multiplier per position.
pub fn generate_forecast<R: Rng + ?Sized>(
    cfg: &ForecastConfig,
    real: &[f64],
    k: usize,
    h: usize,
    rng: &mut R,
) -> Result<Vec<f64>, ForecastError> {
    if h == 0 || k + h > real.len() {
        return Err(ForecastError::HorizonExceedsSeries { k, h, len: real.len() });
    }
    (0..h)
        .map(|pos| {
            let sd = cfg.std_at(pos);
            let x = if sd > 0.0 {
                Normal::new(0.0, sd)
                    .map_err(|e| ForecastError::InvalidConfig(e.to_string()))?
                    .sample(rng)
            } else {
                0.0
            };
            let omega = clamp_multiplier(x, cfg.c);
            Ok((smooth_inflow(real, k + pos, cfg.window)? * omega).max(0.0))
        })
        .collect()
}
