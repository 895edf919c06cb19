//! Choosing aggregate risk aversion.
//!
//! Matching a CARA economy to relative risk aversion `R` at the mean dividend
//! gives `Gamma = R / a^2`; imposing a target mean short rate (in the
//! known-parameter limit) then leaves a cubic in `Gamma` with a single
//! positive root.

use crate::model::{derive_constants, MarketState, ModelParams};
use crate::pricing::expected_u;
use crate::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTarget {
    pub risk_aversion: f64,
    pub expected_rate: f64,
    pub lambda: f64,
    pub rho: f64,
}

impl Default for CalibrationTarget {
    fn default() -> Self {
        CalibrationTarget { risk_aversion: 2.0, expected_rate: 0.01, lambda: 2.0, rho: 0.04 }
    }
}

impl CalibrationTarget {
    pub fn validate(&self) -> Result<()> {
        if !(self.risk_aversion > 0.0 && self.lambda > 0.0) || !self.expected_rate.is_finite() || !self.rho.is_finite() {
            return Err(ModelError::InvalidParams(format!("invalid calibration target {self:?}")));
        }
        Ok(())
    }

    /// `l(Gamma)`; its positive root is the calibrated `Gamma`.
    pub fn cubic(&self, gamma: f64) -> f64 {
        let (r, l) = (self.risk_aversion, self.lambda);
        gamma.powi(3) / l + 2.0 * r * gamma * gamma + (self.expected_rate - self.rho + 2.0 * r * (l - 1.0)) * gamma + 0.5 * r - r * l
    }
}

/// Mean short rate when `x` is stationary around `a` and agents know `a`.
pub fn expected_rate(gamma: f64, a: f64, lambda: f64, rho: f64) -> f64 {
    (rho + gamma - 0.5 * a * a) + a * a * (lambda + 2.0 * gamma) - 2.0 * gamma * (lambda + gamma) * (a * a + 0.5 / lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub gamma: f64,
    pub a: f64,
    /// `expected_rate(gamma, a, ..)` evaluated at the root.
    pub expected_rate: f64,
    /// `l(gamma)` at the root.
    pub residual: f64,
}

/// Bisection for the positive root of the cubic, to a bracket width of `1e-14`.
pub fn solve_gamma(target: &CalibrationTarget) -> Result<Calibration> {
    target.validate()?;
    let l0 = target.cubic(0.0);
    if l0 >= 0.0 {
        return Err(ModelError::NoPositiveRoot { l0 });
    }
    let mut hi = 1.0;
    while target.cubic(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e100 {
            return Err(ModelError::NoPositiveRoot { l0 });
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if target.cubic(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let gamma = 0.5 * (lo + hi);
    let a = (target.risk_aversion / gamma).sqrt();
    Ok(Calibration { gamma, a, expected_rate: expected_rate(gamma, a, target.lambda, target.rho), residual: target.cubic(gamma) })
}

/// The default economy with its two-decimal `Gamma = 0.49`, `alpha_mean = 2.01`,
/// and the state `x = 2.01` with `u` at its long-run mean.
pub fn build_defaults() -> (ModelParams, MarketState) {
    let params = ModelParams { a0: 0.0, a1: 0.0, a2: 1.0, lambda: 2.0, rho: 0.04, epsilon: 1.0, gamma_agg: 0.49, alpha_mean: 2.01 };
    state_for(params, 2.01)
}

/// Like [`build_defaults`] but with `Gamma` and `a` at the exact calibrated root.
pub fn build_defaults_exact() -> Result<(ModelParams, MarketState)> {
    let c = solve_gamma(&CalibrationTarget::default())?;
    let (base, _) = build_defaults();
    Ok(state_for(ModelParams { gamma_agg: c.gamma, alpha_mean: c.a, ..base }, c.a))
}

fn state_for(params: ModelParams, a: f64) -> (ModelParams, MarketState) {
    let consts = derive_constants(&params).expect("default parameters are valid");
    let u = expected_u(a, &params, &consts);
    (params, MarketState { x: a, u })
}
