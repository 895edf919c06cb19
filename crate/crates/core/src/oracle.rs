//! Brute-force Monte Carlo checks of the closed forms.
//!
//! Every estimator returns an [`Estimate`] (mean and standard error). Paths
//! draw from per-path ChaCha streams and are reduced in index order, so the
//! statistics are bitwise reproducible for a fixed seed whether or not the
//! `parallel` feature is on.

use crate::beliefs::{age_constant, aggregate_log_lambda, PopulationLaw};
use crate::model::{dividend, DerivedConstants, MarketState, ModelParams};
use crate::ou::{normal, path_rng, simulate_path, OuStepper, SimConfig, SimPath};
use crate::par::{map_indexed, Estimate, Execution};
use crate::pricing::StockPricer;
use crate::{ModelError, Result};

/// Log-payoffs above this are rejected instead of overflowing.
pub const LOG_PAYOFF_GUARD: f64 = 700.0;

const V_SALT: u64 = 0x765f_7061_7468_7321;
const STOCK_SALT: u64 = 0x7374_6f63_6b5f_7061;
const DRIFT_SALT: u64 = 0x6472_6966_745f_7374;
const OUTER_SALT: u64 = 0x6f75_7465_725f_6d67;
const INNER_SALT: u64 = 0x696e_6e65_725f_6d67;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub n_paths: usize,
    pub dt: f64,
    /// Length of the simulated past standing in for the infinite history.
    pub burn_in: f64,
    /// Forward horizon of [`mc_stock`]; `None` means `20 / lambda`.
    pub horizon: Option<f64>,
    pub seed: u64,
    pub exec: Execution,
}

impl OracleConfig {
    pub fn new(params: &ModelParams, seed: u64) -> Self {
        OracleConfig { n_paths: 100_000, dt: 1e-3, burn_in: 10.0 / params.lambda, horizon: None, seed, exec: Execution::default() }
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.n_paths == 0 || !(self.dt > 0.0 && self.dt <= 1e-3) {
            return Err(ModelError::InvalidParams(format!(
                "oracle needs n_paths >= 1 and 0 < dt <= 1e-3 (got {}, {})",
                self.n_paths, self.dt
            )));
        }
        if !(self.burn_in >= 10.0 / params.lambda * (1.0 - 1e-12)) {
            return Err(ModelError::InvalidParams(format!("burn-in {} shorter than 10 / lambda = {}", self.burn_in, 10.0 / params.lambda)));
        }
        Ok(())
    }

    fn steps_for(&self, span: f64) -> (usize, f64) {
        let n = (span / self.dt).round().max(1.0) as usize;
        (n, span / n as f64)
    }
}

fn terminal_log_payoff(x: f64, acc: f64, theta: f64, params: &ModelParams, consts: &DerivedConstants) -> Result<f64> {
    let v = theta * dividend(x, params) + consts.big_b * x + consts.big_c * x * x + acc;
    if v > LOG_PAYOFF_GUARD {
        return Err(ModelError::Overflow { log_payoff: v });
    }
    Ok(v)
}

/// Estimates `V(tau, x; theta) = E_0[exp(theta delta(X_T) + B X_T + C X_T^2
/// + int (A/2) lambda e^{-lambda (T - s)} X_s^2 ds)]` under the reference measure.
pub fn mc_v(
    state: &MarketState,
    tau: f64,
    theta: f64,
    params: &ModelParams,
    consts: &DerivedConstants,
    cfg: &OracleConfig,
) -> Result<Estimate> {
    cfg.validate(params)?;
    if !(tau >= 0.0) {
        return Err(ModelError::Domain { function: "mc_v", arg: tau });
    }
    if tau == 0.0 {
        let v = terminal_log_payoff(state.x, 0.0, theta, params, consts)?.exp();
        return Ok(Estimate { mean: v, se: 0.0 });
    }
    let (n, dt) = cfg.steps_for(tau);
    let samples: Result<Vec<f64>> = map_indexed(cfg.n_paths, cfg.exec, |i| {
        let mut rng = path_rng(cfg.seed, V_SALT, i as u64);
        // U started at zero accumulates exactly the weighted integral.
        let mut st = OuStepper::new(params.lambda, consts.big_a, 0.0, dt, state.x, 0.0);
        for _ in 0..n {
            st.step(normal(&mut rng));
        }
        Ok(terminal_log_payoff(st.x, st.u, theta, params, consts)?.exp())
    })
    .into_iter()
    .collect();
    Ok(Estimate::from_samples(&samples?))
}

/// Stock price as the discounted dividend stream `int E[zeta_T delta_T] dT / zeta_t`.
///
/// Paths run to the horizon; past it the process is close to its stationary
/// regime, where `E[zeta_T delta_T]` decays exactly like `e^{-rho T}`, so each
/// path adds `zeta_H delta_H / (rho zeta_t)` for the remainder.
pub fn mc_stock(state: &MarketState, params: &ModelParams, consts: &DerivedConstants, cfg: &OracleConfig) -> Result<Estimate> {
    cfg.validate(params)?;
    let horizon = cfg.horizon.unwrap_or(20.0 / params.lambda);
    let (n, dt) = cfg.steps_for(horizon);
    let (x0, u0) = (state.x, state.u);
    let log_zeta0 = consts.big_b * x0 + consts.big_c * x0 * x0 + u0;
    let samples: Result<Vec<f64>> = map_indexed(cfg.n_paths, cfg.exec, |i| {
        let mut rng = path_rng(cfg.seed, STOCK_SALT, i as u64);
        let mut st = OuStepper::new(params.lambda, consts.big_a, 0.0, dt, x0, u0);
        let flow = |st: &OuStepper, t: f64| -> Result<f64> {
            let lz = consts.big_b * st.x + consts.big_c * st.x * st.x + st.u - params.rho * t - log_zeta0;
            if lz > LOG_PAYOFF_GUARD {
                return Err(ModelError::Overflow { log_payoff: lz });
            }
            Ok(lz.exp() * dividend(st.x, params))
        };
        let mut prev = flow(&st, 0.0)?;
        let mut total = 0.0;
        for k in 1..=n {
            st.step(normal(&mut rng));
            let f = flow(&st, k as f64 * dt)?;
            total += 0.5 * dt * (prev + f);
            prev = f;
        }
        Ok(total + prev / params.rho)
    })
    .into_iter()
    .collect();
    Ok(Estimate::from_samples(&samples?))
}

/// Truncated `xi = int lambda e^{-lambda s} (W_t - W_{t-s}) ds`,
/// `eta` (same with the increment squared) and
/// `U_hat = int lambda e^{-lambda s} X_{t-s}^2 ds`, all at the last node of `path`
/// by the trapezoid rule over the whole path.
pub fn xi_eta_hat(path: &SimPath, lambda: f64) -> (f64, f64, f64) {
    let n = path.len() - 1;
    let (w_end, dt) = (path.ws[n], path.dt);
    let (mut xi, mut eta, mut u_hat) = (0.0, 0.0, 0.0);
    for j in 0..=n {
        let weight = if j == 0 || j == n { 0.5 } else { 1.0 } * dt * lambda * (-lambda * j as f64 * dt).exp();
        let dw = w_end - path.ws[n - j];
        xi += weight * dw;
        eta += weight * dw * dw;
        u_hat += weight * path.xs[n - j] * path.xs[n - j];
    }
    (xi, eta, u_hat)
}

/// `(|xi_hat - X_t|, |eta_hat - (X_t^2 + U_hat)|)` at the end of `path`.
pub fn xi_eta_check(path: &SimPath, lambda: f64) -> (f64, f64) {
    let (xi, eta, u_hat) = xi_eta_hat(path, lambda);
    let x = *path.xs.last().expect("non-empty path");
    ((xi - x).abs(), (eta - (x * x + u_hat)).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiEtaReport {
    pub dt: f64,
    pub mean_xi_dev: f64,
    pub mean_eta_dev: f64,
}

/// Average deviations of the pathwise identities over `n_paths` stationary
/// paths of length `window`.
pub fn xi_eta_study(
    params: &ModelParams,
    consts: &DerivedConstants,
    n_paths: usize,
    dt: f64,
    window: f64,
    seed: u64,
    exec: Execution,
) -> Result<XiEtaReport> {
    let n_steps = (window / dt).round() as usize;
    let sim = SimConfig { n_paths, n_steps, dt, seed, measure_mean: 0.0 };
    sim.validate()?;
    let devs = map_indexed(n_paths, exec, |i| {
        let path = simulate_path(&sim, i, params, consts, None, 0.0);
        xi_eta_check(&path, params.lambda)
    });
    let xi: Vec<f64> = devs.iter().map(|d| d.0).collect();
    let eta: Vec<f64> = devs.iter().map(|d| d.1).collect();
    Ok(XiEtaReport { dt, mean_xi_dev: Estimate::from_samples(&xi).mean, mean_eta_dev: Estimate::from_samples(&eta).mean })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationReport {
    pub population: Estimate,
    /// `(A/2) eta + alpha_mean epsilon A xi + age constant`.
    pub target: f64,
    pub xi: f64,
    pub eta: f64,
    pub age_constant: f64,
    /// `|population - target| / se`.
    pub z: f64,
}

/// Compares the population average of weighted log densities with its
/// continuum limit on one shared path.
pub fn aggregation_check(
    params: &ModelParams,
    consts: &DerivedConstants,
    cfg: &OracleConfig,
    population_n: usize,
    law: &PopulationLaw,
) -> Result<AggregationReport> {
    cfg.validate(params)?;
    // Ages are unbounded; cover all but ~e^{-25} of their mass.
    let window = cfg.burn_in.max(25.0 / params.lambda);
    let (n_steps, dt) = cfg.steps_for(window);
    let sim = SimConfig { n_paths: 1, n_steps, dt, seed: cfg.seed, measure_mean: params.alpha_mean / params.lambda };
    let path = simulate_path(&sim, 0, params, consts, None, 0.0);
    let population = aggregate_log_lambda(population_n, params, &path, law, cfg.seed, cfg.exec)?;
    let (xi, eta, _) = xi_eta_hat(&path, params.lambda);
    let k = age_constant(params, consts, law);
    let target = 0.5 * consts.big_a * eta + params.alpha_mean * params.epsilon * consts.big_a * xi + k;
    Ok(AggregationReport { population, target, xi, eta, age_constant: k, z: population.z_against(target) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    /// Direct estimate of `M_t`.
    pub start: Estimate,
    /// `(s - t, estimate of E[M_s], z-score against start)` per checkpoint.
    pub checkpoints: Vec<(f64, Estimate, f64)>,
    pub worst: f64,
}

/// Nested-simulation test that `M_s = E_s[payoff]` has constant expectation.
///
/// Outer paths run from `state` to each checkpoint; at each endpoint `inner`
/// continuation paths estimate `M_s`. The mean of those estimates is
/// compared with a direct estimate of `M_t` from `cfg.n_paths` paths.
#[allow(clippy::too_many_arguments)]
pub fn martingale_check(
    tau: f64,
    theta: f64,
    state: &MarketState,
    params: &ModelParams,
    consts: &DerivedConstants,
    cfg: &OracleConfig,
    outer: usize,
    inner: usize,
) -> Result<MartingaleReport> {
    let start = mc_v(state, tau, theta, params, consts, cfg)?;
    if tau == 0.0 {
        return Ok(MartingaleReport { start, checkpoints: Vec::new(), worst: 0.0 });
    }
    if outer < 2 || inner == 0 {
        return Err(ModelError::InvalidParams("martingale check needs outer >= 2 and inner >= 1".into()));
    }
    let (n, dt) = cfg.steps_for(tau);
    let mut checkpoints = Vec::new();
    let mut worst: f64 = 0.0;
    for (j, frac) in [0.25, 0.5, 0.75].into_iter().enumerate() {
        let n_s = ((n as f64) * frac).round() as usize;
        let salt = OUTER_SALT.wrapping_add(j as u64);
        let m_s: Result<Vec<f64>> = map_indexed(outer, cfg.exec, |k| {
            let mut rng = path_rng(cfg.seed, salt, k as u64);
            let mut st = OuStepper::new(params.lambda, consts.big_a, 0.0, dt, state.x, 0.0);
            for _ in 0..n_s {
                st.step(normal(&mut rng));
            }
            let mut payoffs = Vec::with_capacity(inner);
            for i in 0..inner {
                let mut rng = path_rng(cfg.seed, INNER_SALT.wrapping_add(j as u64), (k * inner + i) as u64);
                let mut cont = st;
                for _ in n_s..n {
                    cont.step(normal(&mut rng));
                }
                payoffs.push(terminal_log_payoff(cont.x, cont.u, theta, params, consts)?.exp());
            }
            Ok(Estimate::from_samples(&payoffs).mean)
        })
        .into_iter()
        .collect();
        let est = Estimate::from_samples(&m_s?);
        let z = est.z_score(&start);
        worst = worst.max(z);
        checkpoints.push((n_s as f64 * dt, est, z));
    }
    Ok(MartingaleReport { start, checkpoints, worst })
}

/// Monte Carlo estimate of the real-world expected return `mu*`: one step
/// of `(X, U)` under reversion level `a_star`, with the stock repriced at every
/// endpoint, `(E[S'] - S) / (S dt)`.
pub fn mc_drift(state: &MarketState, a_star: f64, pricer: &StockPricer, cfg: &OracleConfig) -> Result<Estimate> {
    let params = pricer.params();
    let consts = pricer.consts();
    cfg.validate(params)?;
    let s0 = pricer.value(state.x, state.u)?;
    let dt = cfg.dt;
    let samples: Result<Vec<f64>> = map_indexed(cfg.n_paths, cfg.exec, |i| {
        let mut rng = path_rng(cfg.seed, DRIFT_SALT, i as u64);
        let mut st = OuStepper::new(params.lambda, consts.big_a, a_star, dt, state.x, state.u);
        st.step(normal(&mut rng));
        Ok((pricer.value(st.x, st.u)? - s0) / (s0 * dt))
    })
    .into_iter()
    .collect();
    Ok(Estimate::from_samples(&samples?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_constants;

    fn defaults() -> ModelParams {
        ModelParams { a0: 0.0, a1: 0.0, a2: 1.0, lambda: 2.0, rho: 0.04, epsilon: 1.0, gamma_agg: 0.49, alpha_mean: 2.01 }
    }

    #[test]
    fn zero_horizon_is_exact() {
        let p = ModelParams { a0: 0.5, a1: 0.2, ..defaults() };
        let k = derive_constants(&p).unwrap();
        let cfg = OracleConfig::new(&p, 1);
        let s = MarketState { x: 0.7, u: 0.3 };
        let v = mc_v(&s, 0.0, 0.3, &p, &k, &cfg).unwrap();
        let expect = (0.3 * dividend(0.7, &p) + k.big_b * 0.7 + k.big_c * 0.49).exp();
        assert!((v.mean - expect).abs() < 1e-15 && v.se == 0.0);
        let m = martingale_check(0.0, 0.0, &s, &p, &k, &cfg, 100, 10).unwrap();
        assert_eq!(m.worst, 0.0);
    }

    #[test]
    fn config_validation() {
        let p = defaults();
        let mut cfg = OracleConfig::new(&p, 1);
        assert!(cfg.validate(&p).is_ok());
        cfg.dt = 2e-3;
        assert!(cfg.validate(&p).is_err());
        cfg.dt = 1e-3;
        cfg.burn_in = 1.0;
        assert!(cfg.validate(&p).is_err());
    }

    #[test]
    fn constant_path_has_zero_xi_eta() {
        let path = SimPath { t0: 0.0, dt: 0.01, xs: vec![0.0; 1001], ws: vec![0.0; 1001], us: vec![0.0; 1001] };
        assert_eq!(xi_eta_hat(&path, 2.0), (0.0, 0.0, 0.0));
        assert_eq!(xi_eta_check(&path, 2.0), (0.0, 0.0));
    }

    #[test]
    fn zero_dividend_prices_to_zero() {
        let p = ModelParams { a2: 0.0, ..defaults() };
        let k = derive_constants(&p).unwrap();
        let cfg = OracleConfig { n_paths: 50, horizon: Some(1.0), ..OracleConfig::new(&p, 3) };
        let e = mc_stock(&MarketState { x: 2.01, u: 1.43 }, &p, &k, &cfg).unwrap();
        assert_eq!((e.mean, e.se), (0.0, 0.0));
    }

    #[test]
    fn execution_modes_agree_bitwise() {
        let p = defaults();
        let k = derive_constants(&p).unwrap();
        let s = MarketState { x: 2.01, u: 1.43 };
        let seq = OracleConfig { n_paths: 64, horizon: Some(0.5), exec: Execution::Sequential, ..OracleConfig::new(&p, 9) };
        let par = OracleConfig { exec: Execution::Parallel, ..seq };
        let a = mc_stock(&s, &p, &k, &seq).unwrap();
        let b = mc_stock(&s, &p, &k, &par).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.se.to_bits(), b.se.to_bits());
        let a = mc_v(&s, 0.3, 0.1, &p, &k, &seq).unwrap();
        let b = mc_v(&s, 0.3, 0.1, &p, &k, &par).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overflow_guard() {
        let p = defaults();
        let mut k = derive_constants(&p).unwrap();
        k.big_c = 50.0;
        let cfg = OracleConfig { n_paths: 4, ..OracleConfig::new(&p, 1) };
        let r = mc_v(&MarketState { x: 5.0, u: 0.0 }, 0.01, 0.0, &p, &k, &cfg);
        assert!(matches!(r, Err(ModelError::Overflow { .. })));
    }
}
