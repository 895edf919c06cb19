//! Self-checks grouped into suites, reported as flat rows for the CLI.

use std::f64::consts::PI;
use std::str::FromStr;

use crate::beliefs::PopulationLaw;
use crate::model::{derive_constants, short_rate, MarketState, ModelParams};
use crate::ode::{abc_eval, abc_numeric, g_closed, OdeInputs};
use crate::oracle::{aggregation_check, mc_stock, mc_v, xi_eta_study, OracleConfig, XiEtaReport};
use crate::par::Execution;
use crate::pricing::{bond_price, bond_short_rate, QuadratureConfig, StockPricer};
use crate::special::{bessel_set, ScaledBasis};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Bessel,
    Ode,
    Pde,
    Mc,
    Appendix,
    Aggregation,
    All,
}

impl Suite {
    pub const EACH: [Suite; 6] = [Suite::Bessel, Suite::Ode, Suite::Pde, Suite::Mc, Suite::Appendix, Suite::Aggregation];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Bessel => "bessel",
            Suite::Ode => "ode",
            Suite::Pde => "pde",
            Suite::Mc => "mc",
            Suite::Appendix => "appendix",
            Suite::Aggregation => "aggregation",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite '{s}' (expected bessel, ode, pde, mc, appendix, aggregation or all)"))
    }
}

/// One line of a validation report: `passed` is `value <= tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: &'static str,
    pub check: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(suite: Suite, check: impl Into<String>, value: f64, tolerance: f64) -> Self {
        CheckResult { suite: suite.name(), check: check.into(), value, tolerance, passed: value <= tolerance }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Monte Carlo paths for the `mc` suite.
    pub n_paths: usize,
    pub exec: Execution,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions { seed: 42, n_paths: 100_000, exec: Execution::default() }
    }
}

fn normwise(x: &[f64], y: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    x.iter().zip(y).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / scale
}

pub fn run_suite(suite: Suite, params: &ModelParams, state: &MarketState, opts: &ValidateOptions) -> Result<Vec<CheckResult>> {
    let k = derive_constants(params)?;
    let mut out = Vec::new();
    match suite {
        Suite::All => {
            for s in Suite::EACH {
                out.extend(run_suite(s, params, state, opts)?);
            }
        }
        Suite::Bessel => {
            let mut worst: f64 = 0.0;
            let n = 1000;
            for i in 0..n {
                let z = 1e-6 * (50.0f64 / 1e-6).powf(i as f64 / (n - 1) as f64);
                // J1 Y2 - J2 Y1 = -2 / (pi z), written in the scaled basis
                let sb = ScaledBasis::at(z);
                let b = bessel_set(z);
                let lhs = (b.j[1] * sb.z2_y2 - sb.z2_j2 * b.y[1]) / (z * z);
                let rhs = -2.0 / (PI * z);
                worst = worst.max(((lhs - rhs) / rhs).abs());
            }
            out.push(CheckResult::new(suite, "cross_product_identity", worst, 1e-10));
            let g0 = g_closed(0.0, 0.0, params, &k)?.0;
            let lam = params.lambda / PI;
            out.push(CheckResult::new(suite, "g0_equals_lambda_over_pi", ((g0 - lam) / lam).abs(), 1e-10));
        }
        Suite::Ode => {
            for theta in [0.0, 0.1] {
                let inp = OdeInputs::new(theta, params, &k, 10.0);
                let (a, b) = (abc_eval(&inp)?, abc_numeric(&inp)?);
                let gap = [
                    normwise(&a.a, &b.a),
                    normwise(&a.b, &b.b),
                    normwise(&a.c, &b.c),
                    normwise(&a.da, &b.da),
                    normwise(&a.db, &b.db),
                    normwise(&a.dc, &b.dc),
                ]
                .into_iter()
                .fold(0.0, f64::max);
                out.push(CheckResult::new(suite, format!("closed_vs_numeric_theta_{theta}"), gap, 1e-8));
            }
        }
        Suite::Pde => {
            out.push(CheckResult::new(suite, "bond_at_zero_maturity", (bond_price(state, 0.0, params, &k)? - 1.0).abs(), 1e-12));
            let r_bond = bond_short_rate(state, 1e-4, params, &k)?;
            out.push(CheckResult::new(suite, "bond_short_rate", (r_bond - short_rate(state, params, &k)).abs(), 1e-4));
            let pricer = StockPricer::new(params, &k, &QuadratureConfig::default())?;
            pricer.price(state)?;
            let grid = pde_grid(state);
            out.push(CheckResult::new(suite, "pde_residual_5x5", max_residual(&pricer, &grid, 1e-3)?, 1e-3));
            // below ~1e-3 the residual sits on a rounding floor, so the order is read off larger steps
            let ratio = max_residual(&pricer, &grid, 4e-3)? / max_residual(&pricer, &grid, 2e-3)?;
            out.push(CheckResult::new(suite, "pde_residual_halving_ratio_minus_4", (ratio - 4.0).abs(), 1.0));
        }
        Suite::Mc => {
            let cfg = OracleConfig { n_paths: opts.n_paths, exec: opts.exec, ..OracleConfig::new(params, opts.seed) };
            let quad = StockPricer::new(params, &k, &QuadratureConfig::default())?.price(state)?.stock;
            let mc = mc_stock(state, params, &k, &cfg)?;
            let tol = 0.02_f64.max(3.0 * mc.se / quad.abs());
            out.push(CheckResult::new(suite, "mc_stock_relative_gap", (mc.mean / quad - 1.0).abs(), tol));
            for tau in [0.25, 0.5, 1.0] {
                let sol = abc_eval(&OdeInputs::new(0.0, params, &k, tau))?;
                let i = sol.len() - 1;
                let x = state.x;
                let closed = (0.5 * sol.a[i] * x * x + sol.b[i] * x + sol.c[i]).exp();
                let est = mc_v(state, tau, 0.0, params, &k, &cfg)?;
                out.push(CheckResult::new(suite, format!("mc_v_z_tau_{tau}"), est.z_against(closed), 3.0));
            }
        }
        Suite::Appendix => {
            let k = derive_constants(params)?;
            let fine = xi_eta_study(params, &k, 100, 1e-4, 10.0, opts.seed, opts.exec)?;
            out.push(CheckResult::new(suite, "xi_deviation", fine.mean_xi_dev, 5e-3));
            out.push(CheckResult::new(suite, "eta_deviation", fine.mean_eta_dev, 5e-3));
            let study = xi_convergence(params, 100, &XI_DTS, XI_ORDER_WINDOW, opts.seed, opts.exec)?;
            out.push(CheckResult::new(suite, "xi_order_minus_half", (study.xi_order - 0.5).abs(), 0.2));
        }
        Suite::Aggregation => {
            let cfg = OracleConfig { exec: opts.exec, ..OracleConfig::new(params, opts.seed) };
            let rep = aggregation_check(params, &k, &cfg, 100_000, &PopulationLaw::default())?;
            out.push(CheckResult::new(suite, "aggregation_z", rep.z, 3.0));
        }
    }
    Ok(out)
}

pub const XI_DTS: [f64; 4] = [2e-4, 1e-4, 5e-5, 2.5e-5];
/// With a 10-unit window the deviations sit on the history-truncation floor
/// (~5e-9) and no order can be read off; 20 units clears it.
pub const XI_ORDER_WINDOW: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct XiConvergence {
    pub reports: Vec<XiEtaReport>,
    /// Least-squares slope of `ln dev` against `ln dt`.
    pub xi_order: f64,
    pub eta_order: f64,
}

pub fn xi_convergence(params: &ModelParams, n_paths: usize, dts: &[f64], window: f64, seed: u64, exec: Execution) -> Result<XiConvergence> {
    let k = derive_constants(params)?;
    let reports = dts.iter().map(|&dt| xi_eta_study(params, &k, n_paths, dt, window, seed, exec)).collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let slope = |ys: Vec<f64>| {
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    };
    let xi_order = slope(reports.iter().map(|r| r.mean_xi_dev.ln()).collect());
    let eta_order = slope(reports.iter().map(|r| r.mean_eta_dev.ln()).collect());
    Ok(XiConvergence { reports, xi_order, eta_order })
}

/// 5x5 states spaced by 0.1 around `centre`.
pub fn pde_grid(centre: &MarketState) -> Vec<MarketState> {
    let offs = [-0.2, -0.1, 0.0, 0.1, 0.2];
    offs.iter().flat_map(|&dx| offs.iter().map(move |&du| MarketState { x: centre.x + dx, u: (centre.u + du).max(0.01) })).collect()
}

fn max_residual(pricer: &StockPricer, grid: &[MarketState], step: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in grid {
        worst = worst.max(pricer.pde_residual_at(s, step, step)?);
    }
    Ok(worst)
}
