use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Offset `s` of the cosine schedule.
pub const COSINE_OFFSET: f64 = 0.008;
pub const MIN_ALPHA: f64 = 1e-4;
pub const MAX_ALPHA: f64 = 0.9999;

/// Per-step noise coefficients for a T-step forward process.
///
/// Index `t` runs over `0..T`; index 0 is the first (least noisy) step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Cosine schedule: `ᾱ(t) = f(t)/f(0)`, `f(t) = cos²(((t/T + s)/(1 + s))·π/2)`.
    ///
    /// `ᾱ` is kept exact. The per-step `α_t = ᾱ(t)/ᾱ(t−1)` is clipped to
    /// `[1e-4, 0.9999]` and only feeds the posterior coefficients.
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::config(format!("diffusion needs at least 2 steps, got {steps}")));
        }
        let f = |t: f64| {
            let x = ((t / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)) * FRAC_PI_2;
            x.cos().powi(2)
        };
        let f0 = f(0.0);
        let mut alphas = Vec::with_capacity(steps);
        let mut alpha_bars = Vec::with_capacity(steps);
        let mut prev = 1.0;
        for t in 1..=steps {
            let bar = f(t as f64) / f0;
            alphas.push((bar / prev).clamp(MIN_ALPHA, MAX_ALPHA));
            alpha_bars.push(bar);
            prev = bar;
        }
        Ok(NoiseSchedule { alphas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn beta(&self, t: usize) -> f64 {
        1.0 - self.alphas[t]
    }

    pub fn betas(&self) -> Vec<f64> {
        self.alphas.iter().map(|a| 1.0 - a).collect()
    }

    /// Coefficients of the Gaussian posterior `q(x_{t−1} | x_t, x_0)` for `t ≥ 1`:
    /// `(coef_x0, coef_xt, variance)`.
    pub fn posterior(&self, t: usize) -> (f64, f64, f64) {
        assert!(t >= 1 && t < self.steps(), "posterior defined for 1 <= t < T");
        let ab = self.alpha_bars[t];
        let ab_prev = self.alpha_bars[t - 1];
        let beta = self.beta(t);
        let coef_x0 = ab_prev.sqrt() * beta / (1.0 - ab);
        let coef_xt = self.alphas[t].sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let variance = beta * (1.0 - ab_prev) / (1.0 - ab);
        (coef_x0, coef_xt, variance)
    }
}
