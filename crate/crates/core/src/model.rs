//! Parameters of the economy, the constants derived from them, and the
//! closed forms that need nothing beyond arithmetic: the dividend map, the
//! log state price density and the short rate.

use crate::{ModelError, Result};

/// Exogenous scalars of the economy.
///
/// The dividend is `a0 + a1 x + a2 x^2` where `x` is an Ornstein-Uhlenbeck
/// factor with reversion rate `lambda`. Each dynasty member starts life with a
/// normal prior of precision `epsilon` on `lambda * a`, centred on a
/// dynasty-specific mean whose population average is `alpha_mean`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub lambda: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub gamma_agg: f64,
    pub alpha_mean: f64,
}

impl ModelParams {
    /// Checks the positivity constraints and `lambda * epsilon >= 1`, which is
    /// what makes the age density decreasing. With `require_positive_dividend`
    /// also checks `a0 >= a1^2 / (4 a2)`.
    pub fn validate(&self, require_positive_dividend: bool) -> Result<()> {
        let positive = [("lambda", self.lambda), ("rho", self.rho), ("epsilon", self.epsilon), ("gamma_agg", self.gamma_agg)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("a0", self.a0), ("a1", self.a1), ("a2", self.a2), ("alpha_mean", self.alpha_mean)] {
            if !v.is_finite() {
                return Err(ModelError::InvalidParams(format!("{name} must be finite, got {v}")));
            }
        }
        if self.lambda * self.epsilon < 1.0 {
            return Err(ModelError::InvalidParams(format!(
                "lambda * epsilon = {} < 1: age density would not be decreasing",
                self.lambda * self.epsilon
            )));
        }
        if require_positive_dividend {
            let ok = if self.a2 > 0.0 {
                self.a0 >= self.a1 * self.a1 / (4.0 * self.a2)
            } else {
                self.a2 == 0.0 && self.a1 == 0.0 && self.a0 >= 0.0
            };
            if !ok {
                return Err(ModelError::InvalidParams(format!("dividend {} + {} x + {} x^2 can be negative", self.a0, self.a1, self.a2)));
            }
        }
        Ok(())
    }

    pub fn dividend(&self, x: f64) -> f64 {
        dividend(x, self)
    }
}

/// Constants computed once from [`ModelParams`].
///
/// `big_a` normalises the age density, `big_b` and `big_c` are the linear and
/// quadratic coefficients of the log state price density, and `r0, r1, r2`
/// are the short-rate polynomial coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub big_a: f64,
    pub big_b: f64,
    pub big_c: f64,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

impl DerivedConstants {
    fn from_abc(big_a: f64, big_b: f64, big_c: f64, lambda: f64, rho: f64) -> Self {
        DerivedConstants {
            big_a,
            big_b,
            big_c,
            r0: rho - big_c - 0.5 * big_b * big_b,
            r1: big_b * (lambda - 2.0 * big_c),
            r2: 2.0 * lambda * big_c - 0.5 * lambda * big_a - 2.0 * big_c * big_c,
        }
    }

    /// The `epsilon -> infinity` limit in which every agent is certain of the
    /// reversion level: `A = 0`, `epsilon A = 1`, so `B = alpha_mean - Gamma a1`
    /// and `C = -Gamma a2`.
    pub fn known_parameter_limit(params: &ModelParams) -> Self {
        let b = params.alpha_mean - params.gamma_agg * params.a1;
        let c = -params.gamma_agg * params.a2;
        Self::from_abc(0.0, b, c, params.lambda, params.rho)
    }

    /// Builds constants from explicit `(A, B, C)`. Used to probe degenerate
    /// regimes that [`derive_constants`] rejects.
    pub fn from_raw(params: &ModelParams, big_a: f64, big_b: f64, big_c: f64) -> Self {
        Self::from_abc(big_a, big_b, big_c, params.lambda, params.rho)
    }
}

/// Markov state `(x, u)` at which prices are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketState {
    pub x: f64,
    /// Exponentially weighted average of past `x^2`; never negative.
    pub u: f64,
}

impl MarketState {
    pub fn new(x: f64, u: f64) -> Result<Self> {
        if !(u >= 0.0) || !x.is_finite() || !u.is_finite() {
            return Err(ModelError::InvalidParams(format!("invalid state (x = {x}, u = {u})")));
        }
        Ok(MarketState { x, u })
    }
}

pub fn derive_constants(params: &ModelParams) -> Result<DerivedConstants> {
    params.validate(false)?;
    let big_a = params.lambda / (1.0 + params.epsilon * params.lambda);
    let big_b = params.alpha_mean * params.epsilon * big_a - params.gamma_agg * params.a1;
    let big_c = 0.5 * big_a - params.gamma_agg * params.a2;
    Ok(DerivedConstants::from_abc(big_a, big_b, big_c, params.lambda, params.rho))
}

pub fn dividend(x: f64, params: &ModelParams) -> f64 {
    params.a0 + params.a1 * x + params.a2 * x * x
}

/// Log state price density with the integration constant fixed to zero.
/// Prices only ever use differences of this quantity.
pub fn log_zeta(state: &MarketState, t: f64, params: &ModelParams, consts: &DerivedConstants) -> f64 {
    consts.big_b * state.x + consts.big_c * state.x * state.x + state.u - params.rho * t
}

/// Instantaneous riskless rate `r0 + r1 x + r2 x^2 + lambda u`.
pub fn short_rate(state: &MarketState, params: &ModelParams, consts: &DerivedConstants) -> f64 {
    let x = state.x;
    consts.r0 + consts.r1 * x + consts.r2 * x * x + params.lambda * state.u
}
