//! Stock and bond prices, the stock's volatility and real-world drift, and a
//! finite-difference check that the stock price solves its valuation PDE.
//!
//! The stock price is
//!
//! ```text
//! S(x, u) = e^{-Bx - Cx^2} int_0^inf e^{-rho tau - (1 - e^{-lambda tau}) u}
//!           (da x^2 / 2 + db x + dc) e^{a x^2 / 2 + b x + c} dtau
//! ```
//!
//! with `a, b, c` and their `theta`-derivatives from [`crate::ode`]. None of
//! those depend on the state, so a [`StockPricer`] solves them once on a
//! quadrature grid and then prices any `(x, u)` with a weighted sum.

use std::str::FromStr;

use crate::model::{derive_constants, dividend, short_rate, DerivedConstants, MarketState, ModelParams};
use crate::ode::{abc_eval, abc_on_grid, OdeInputs, OdeSolution};
use crate::par::{map_indexed, Execution};
use crate::quad::{piecewise_uniform_grid, simpson_weights};
use crate::{ModelError, Result};

/// Exponents above this are reported as overflow rather than returning `inf`.
const MAX_EXPONENT: f64 = 700.0;
/// `lambda tau` at which the fine near-field segment of the grid ends.
const NEAR_FIELD: f64 = 30.0;
/// `rho h` on the coarse far-field segment.
const FAR_STEP: f64 = 0.02;
const MAX_REBUILDS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Truncation horizon. `None` picks
    /// `max(10/rho, 20/lambda) + ln(1/rel_tol)/rho`; either way the horizon is
    /// extended until the tail estimate meets `rel_tol`.
    pub tau_max: Option<f64>,
    pub rel_tol: f64,
    /// Node count of the near-field segment `[0, 30/lambda]`.
    pub n_grid: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { tau_max: None, rel_tol: 1e-8, n_grid: 2001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceReport {
    pub stock: f64,
    /// Estimate of the integral beyond `tau_max`, `|f(T)| / (-d ln|f|/dtau)`.
    pub integrand_tail: f64,
    /// Richardson estimate `|I_h - I_2h| / 15`.
    pub grid_error: f64,
    pub tau_max: f64,
    /// The dividend factor of the integrand changes sign somewhere on the
    /// grid, so positivity of the price is not guaranteed.
    pub sign_change: bool,
}

#[derive(Debug, Clone, Copy)]
struct Raw {
    stock: f64,
    stock_u: f64,
    tail: f64,
    grid_error: f64,
    sign_change: bool,
}

/// The Riccati solution on a quadrature grid, reusable across states.
#[derive(Debug, Clone)]
pub struct StockPricer {
    params: ModelParams,
    consts: DerivedConstants,
    rel_tol: f64,
    near_panels: usize,
    far_panels: usize,
    tau_max: f64,
    sol: OdeSolution,
    decay: Vec<f64>,
    w_fine: Vec<f64>,
    w_coarse: Vec<f64>,
}

fn round_up_to_4(n: usize) -> usize {
    n.div_ceil(4).max(1) * 4
}

impl StockPricer {
    pub fn new(params: &ModelParams, consts: &DerivedConstants, q: &QuadratureConfig) -> Result<Self> {
        if !(q.rel_tol > 0.0) || q.n_grid < 3 {
            return Err(ModelError::InvalidParams(format!(
                "quadrature needs rel_tol > 0 and n_grid >= 3 (got {}, {})",
                q.rel_tol, q.n_grid
            )));
        }
        if !(params.rho > 0.0) || !(params.lambda > 0.0) {
            return Err(ModelError::InvalidParams("pricing needs rho > 0 and lambda > 0".into()));
        }
        let tau_max = match q.tau_max {
            Some(t) if t > 0.0 => t,
            Some(t) => return Err(ModelError::InvalidParams(format!("tau_max must be positive, got {t}"))),
            None => (10.0 / params.rho).max(20.0 / params.lambda) + (1.0 / q.rel_tol).ln() / params.rho,
        };
        Self::build(params, consts, q.rel_tol, round_up_to_4(q.n_grid - 1), None, tau_max)
    }

    fn build(
        params: &ModelParams,
        consts: &DerivedConstants,
        rel_tol: f64,
        near_panels: usize,
        far_panels: Option<usize>,
        tau_max: f64,
    ) -> Result<Self> {
        let near_end = (NEAR_FIELD / params.lambda).min(tau_max);
        let far_panels = if tau_max > near_end {
            far_panels.unwrap_or_else(|| round_up_to_4(((tau_max - near_end) * params.rho / FAR_STEP).ceil() as usize))
        } else {
            0
        };
        let taus = if far_panels > 0 {
            piecewise_uniform_grid(&[0.0, near_end, tau_max], &[near_panels, far_panels])
        } else {
            piecewise_uniform_grid(&[0.0, tau_max], &[near_panels])
        };
        let sol = abc_on_grid(&taus, 0.0, params, consts)?;
        let decay = taus.iter().map(|t| (-params.lambda * t).exp()).collect();
        let w_fine = simpson_weights(&taus);
        let coarse_nodes: Vec<f64> = taus.iter().step_by(2).copied().collect();
        let mut w_coarse = vec![0.0; taus.len()];
        for (k, w) in simpson_weights(&coarse_nodes).into_iter().enumerate() {
            w_coarse[2 * k] = w;
        }
        Ok(StockPricer { params: *params, consts: *consts, rel_tol, near_panels, far_panels, tau_max, sol, decay, w_fine, w_coarse })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn consts(&self) -> &DerivedConstants {
        &self.consts
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    fn evaluate(&self, state: &MarketState) -> Result<Raw> {
        let (x, u) = (state.x, state.u);
        let k = &self.consts;
        let rho = self.params.rho;
        let s = &self.sol;
        let pre = -k.big_b * x - k.big_c * x * x;
        let n = s.len();
        let (mut fine, mut coarse, mut fine_u) = (0.0, 0.0, 0.0);
        let mut first_sign = 0.0;
        let mut sign_change = false;
        let mut last = (0.0, 0.0);
        let mut prev = (0.0, 0.0);
        for i in 0..n {
            let tau = s.taus[i];
            let one_minus = 1.0 - self.decay[i];
            let expo = pre - rho * tau - one_minus * u + 0.5 * s.a[i] * x * x + s.b[i] * x + s.c[i];
            if expo > MAX_EXPONENT {
                return Err(ModelError::Overflow { log_payoff: expo });
            }
            let factor = 0.5 * s.da[i] * x * x + s.db[i] * x + s.dc[i];
            if factor != 0.0 {
                if first_sign == 0.0 {
                    first_sign = factor.signum();
                } else if factor.signum() != first_sign {
                    sign_change = true;
                }
            }
            let f = expo.exp() * factor;
            fine += self.w_fine[i] * f;
            coarse += self.w_coarse[i] * f;
            fine_u -= self.w_fine[i] * one_minus * f;
            prev = last;
            last = (tau, expo + factor.abs().ln());
        }
        let tail = if last.1 == f64::NEG_INFINITY {
            // the dividend factor vanishes at the horizon
            0.0
        } else {
            let slope = (last.1 - prev.1) / (last.0 - prev.0);
            if !(slope < 0.0) {
                return Err(ModelError::DivergentIntegral { tau: last.0, slope });
            }
            last.1.exp() / -slope
        };
        Ok(Raw { stock: fine, stock_u: fine_u, tail, grid_error: (fine - coarse).abs() / 15.0, sign_change })
    }

    fn price_raw(&self, state: &MarketState) -> Result<(Raw, f64)> {
        let mut raw = self.evaluate(state)?;
        let mut scale = raw.stock.abs();
        let mut grid_ok = raw.grid_error <= self.rel_tol * scale;
        let mut tail_ok = raw.tail <= self.rel_tol * scale;
        if grid_ok && tail_ok {
            return Ok((raw, self.tau_max));
        }
        let mut current = self.clone();
        for _ in 0..MAX_REBUILDS {
            let (near, far) = if grid_ok { (current.near_panels, None) } else { (current.near_panels * 2, Some(current.far_panels * 2)) };
            let tau_max = if tail_ok {
                current.tau_max
            } else {
                // The integrand decays roughly like e^{-rho tau} out here.
                let extra = (raw.tail / (self.rel_tol * scale)).ln() / self.params.rho;
                current.tau_max + extra.max(1.0 / self.params.rho) * 1.25
            };
            let far = if tail_ok { far } else { None };
            current = Self::build(&self.params, &self.consts, self.rel_tol, near, far, tau_max)?;
            raw = current.evaluate(state)?;
            scale = raw.stock.abs();
            grid_ok = raw.grid_error <= self.rel_tol * scale;
            tail_ok = raw.tail <= self.rel_tol * scale;
            if grid_ok && tail_ok {
                return Ok((raw, current.tau_max));
            }
        }
        let estimate = raw.grid_error.max(raw.tail) / scale;
        Err(ModelError::QuadratureTolerance { estimate, tolerance: self.rel_tol })
    }

    pub fn price(&self, state: &MarketState) -> Result<PriceReport> {
        let (raw, tau_max) = self.price_raw(state)?;
        Ok(PriceReport { stock: raw.stock, integrand_tail: raw.tail, grid_error: raw.grid_error, tau_max, sign_change: raw.sign_change })
    }

    /// `(S, dS/du)`; `u` enters the integrand only through
    /// `exp(-(1 - e^{-lambda tau}) u)`, so the derivative is a second quadrature.
    pub fn price_and_u_derivative(&self, state: &MarketState) -> Result<(f64, f64)> {
        let (raw, _) = self.price_raw(state)?;
        Ok((raw.stock, raw.stock_u))
    }

    /// Stock price on this pricer's grid without the tolerance checks or
    /// refinement, so that nearby states share one discretisation. Use it for
    /// difference stencils and bulk repricing after [`Self::price`] has
    /// confirmed the grid at a representative state.
    pub fn value(&self, x: f64, u: f64) -> Result<f64> {
        Ok(self.evaluate(&MarketState { x, u })?.stock)
    }

    /// Centred first derivative in `x` with one Richardson step.
    fn h_x(&self, x: f64, u: f64, dx: f64) -> Result<f64> {
        let d = |h: f64| -> Result<f64> { Ok((self.value(x + h, u)? - self.value(x - h, u)?) / (2.0 * h)) };
        let (coarse, fine) = (d(dx)?, d(0.5 * dx)?);
        Ok((4.0 * fine - coarse) / 3.0)
    }

    /// `h_x / h`, the instantaneous volatility of the stock.
    pub fn volatility(&self, state: &MarketState, dx: f64) -> Result<f64> {
        let h = self.price(state)?.stock;
        Ok(self.h_x(state.x, state.u, dx)? / h)
    }

    pub fn drift_star(&self, state: &MarketState, a_star: f64, dx: f64) -> Result<DriftReport> {
        let h = self.price(state)?.stock;
        let h_x = self.h_x(state.x, state.u, dx)?;
        let k = &self.consts;
        let p = &self.params;
        let r = short_rate(state, p, k);
        let coeff = p.lambda * a_star - 2.0 * k.big_c * state.x - k.big_b;
        let rate_term = r;
        let dividend_term = -dividend(state.x, p) / h;
        let risk_term = coeff * h_x / h;
        Ok(DriftReport {
            mu: (r * h - dividend(state.x, p) + coeff * h_x) / h,
            rate_term,
            dividend_term,
            risk_term,
            stock: h,
            volatility: h_x / h,
        })
    }

    /// PDE residual at one state, scaled by `1 / (|r h| + 1)`.
    pub fn pde_residual_at(&self, state: &MarketState, dx: f64, du: f64) -> Result<f64> {
        let (x, u) = (state.x, state.u);
        if u < du {
            return Err(ModelError::InvalidParams(format!("u = {u} too close to 0 for du = {du}")));
        }
        let h = self.value(x, u)?;
        let (hp, hm) = (self.value(x + dx, u)?, self.value(x - dx, u)?);
        let h_x = (hp - hm) / (2.0 * dx);
        let h_xx = (hp - 2.0 * h + hm) / (dx * dx);
        let h_u = (self.value(x, u + du)? - self.value(x, u - du)?) / (2.0 * du);
        let p = &self.params;
        let k = &self.consts;
        let r = short_rate(state, p, k);
        let resid = 0.5 * h_xx + (k.big_b + (2.0 * k.big_c - p.lambda) * x) * h_x + p.lambda * (0.5 * k.big_a * x * x - u) * h_u - r * h
            + dividend(x, p);
        Ok(resid.abs() / ((r * h).abs() + 1.0))
    }
}

/// Real-world expected return and its three terms:
/// `mu = rate_term + dividend_term + risk_term`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftReport {
    pub mu: f64,
    pub rate_term: f64,
    pub dividend_term: f64,
    pub risk_term: f64,
    pub stock: f64,
    pub volatility: f64,
}

pub fn stock_price(state: &MarketState, params: &ModelParams, consts: &DerivedConstants, q: &QuadratureConfig) -> Result<PriceReport> {
    StockPricer::new(params, consts, q)?.price(state)
}

pub fn volatility(state: &MarketState, params: &ModelParams, consts: &DerivedConstants, q: &QuadratureConfig, dx: f64) -> Result<f64> {
    StockPricer::new(params, consts, q)?.volatility(state, dx)
}

pub fn drift_star(
    state: &MarketState,
    a_star: f64,
    params: &ModelParams,
    consts: &DerivedConstants,
    q: &QuadratureConfig,
) -> Result<DriftReport> {
    StockPricer::new(params, consts, q)?.drift_star(state, a_star, 1e-4)
}

/// Largest scaled residual over `states`.
pub fn pde_residual(
    states: &[MarketState],
    params: &ModelParams,
    consts: &DerivedConstants,
    q: &QuadratureConfig,
    dx: f64,
    du: f64,
) -> Result<f64> {
    let pricer = StockPricer::new(params, consts, q)?;
    let mut worst: f64 = 0.0;
    for s in states {
        worst = worst.max(pricer.pde_residual_at(s, dx, du)?);
    }
    Ok(worst)
}

/// Long-run mean of `U` when `x` reverts to `a`.
pub fn expected_u(a: f64, params: &ModelParams, consts: &DerivedConstants) -> f64 {
    0.5 * consts.big_a * (a * a + 0.5 / params.lambda)
}

/// Zero-coupon bond price for maturity `tau`.
pub fn bond_price(state: &MarketState, tau: f64, params: &ModelParams, consts: &DerivedConstants) -> Result<f64> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(ModelError::Domain { function: "bond_price", arg: tau });
    }
    if tau == 0.0 {
        return Ok(1.0);
    }
    let sol = abc_eval(&OdeInputs::new(0.0, params, consts, tau))?;
    let i = sol.len() - 1;
    Ok(bond_from_solution(state, tau, sol.a[i], sol.b[i], sol.c[i], params, consts))
}

fn bond_from_solution(state: &MarketState, tau: f64, a: f64, b: f64, c: f64, params: &ModelParams, consts: &DerivedConstants) -> f64 {
    let (x, u) = (state.x, state.u);
    let expo = (0.5 * a - consts.big_c) * x * x + (b - consts.big_b) * x + c - params.rho * tau - (1.0 - (-params.lambda * tau).exp()) * u;
    expo.exp()
}

/// Bond prices at several maturities.
pub fn bond_curve(state: &MarketState, taus: &[f64], params: &ModelParams, consts: &DerivedConstants) -> Result<Vec<f64>> {
    taus.iter().map(|&t| bond_price(state, t, params, consts)).collect()
}

/// Short rate implied by the bond curve near zero maturity,
/// `-(4 ln P(h) - ln P(2h)) / (2h)`, which cancels the `O(h)` bias of
/// `-ln P(h) / h`.
pub fn bond_short_rate(state: &MarketState, h: f64, params: &ModelParams, consts: &DerivedConstants) -> Result<f64> {
    let l1 = bond_price(state, h, params, consts)?.ln();
    let l2 = bond_price(state, 2.0 * h, params, consts)?.ln();
    Ok(-(4.0 * l1 - l2) / (2.0 * h))
}

/// Parameters a comparative-statics sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    Epsilon,
    Rho,
    AlphaMean,
    GammaAgg,
}

impl SweepParam {
    pub const ALL: [SweepParam; 5] =
        [SweepParam::Lambda, SweepParam::Epsilon, SweepParam::Rho, SweepParam::AlphaMean, SweepParam::GammaAgg];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Epsilon => "epsilon",
            SweepParam::Rho => "rho",
            SweepParam::AlphaMean => "alpha_mean",
            SweepParam::GammaAgg => "gamma_agg",
        }
    }

    pub fn apply(self, base: &ModelParams, value: f64) -> ModelParams {
        let mut p = *base;
        match self {
            SweepParam::Lambda => p.lambda = value,
            SweepParam::Epsilon => p.epsilon = value,
            SweepParam::Rho => p.rho = value,
            SweepParam::AlphaMean => p.alpha_mean = value,
            SweepParam::GammaAgg => p.gamma_agg = value,
        }
        p
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown sweep parameter '{s}' (expected lambda, epsilon, rho, alpha_mean or gamma_agg)"))
    }
}

/// How `u` is chosen at each sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatePolicy {
    /// Keep `u` fixed.
    Hold(f64),
    /// Use the long-run mean of `U` for reversion level `a` under each
    /// point's parameters.
    Stationary { a: f64 },
}

impl StatePolicy {
    /// Holds `u` fixed, except for `lambda` sweeps, where `u` follows its
    /// long-run mean at the base `alpha_mean`.
    pub fn default_for(param: SweepParam, base: &ModelParams, state: &MarketState) -> Self {
        match param {
            SweepParam::Lambda => StatePolicy::Stationary { a: base.alpha_mean },
            _ => StatePolicy::Hold(state.u),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub u: f64,
    pub report: PriceReport,
}

/// Stock price at `x` for each value of `param`, one grid point per task.
pub fn sweep(
    base: &ModelParams,
    param: SweepParam,
    values: &[f64],
    x: f64,
    policy: StatePolicy,
    q: &QuadratureConfig,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    map_indexed(values.len(), exec, |i| {
        let p = param.apply(base, values[i]);
        let k = derive_constants(&p)?;
        let u = match policy {
            StatePolicy::Hold(u) => u,
            StatePolicy::Stationary { a } => expected_u(a, &p, &k),
        };
        let report = stock_price(&MarketState::new(x, u)?, &p, &k, q)?;
        Ok(SweepRow { value: values[i], u, report })
    })
    .into_iter()
    .collect()
}
