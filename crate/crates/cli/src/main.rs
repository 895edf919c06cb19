mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dynasty_core::calibration::{build_defaults, build_defaults_exact, solve_gamma, CalibrationTarget};
use dynasty_core::model::{derive_constants, short_rate};
use dynasty_core::par::Execution;
use dynasty_core::pricing::{bond_price, sweep, QuadratureConfig, StatePolicy, StockPricer, SweepParam};
use dynasty_core::validate::{run_suite, Suite, ValidateOptions};
use dynasty_core::{MarketState, ModelError};

use config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "dynasty", version, about = "Asset prices in an economy of learning dynasties")]
struct Cli {
    /// File of `key=value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set lambda=3`. Repeatable; applied after `--config`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed for Monte Carlo checks. Falls back to `seed` in the config, then DYNASTY_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write CSV here instead of standard output.
    #[arg(long, short, global = true, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Start from the exact calibrated Gamma and a rather than the rounded defaults.
    #[arg(long, global = true)]
    exact_calibration: bool,
    /// Reject parameters whose dividend can be negative.
    #[arg(long, global = true)]
    require_positive_dividend: bool,
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stock price at the configured state.
    Price,
    /// Zero-coupon bond price.
    Bond {
        #[arg(long)]
        tau: f64,
    },
    /// Instantaneous short rate.
    Rate,
    /// Stock price across a grid of one parameter.
    Sweep {
        /// lambda, epsilon, rho, alpha_mean or gamma_agg.
        param: SweepParam,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        /// Number of grid points.
        #[arg(long)]
        steps: Option<usize>,
        /// Keep u fixed even when sweeping lambda.
        #[arg(long, conflicts_with = "stationary_state")]
        hold_state: bool,
        /// Move u to its long-run mean at every point, whatever the parameter.
        #[arg(long)]
        stationary_state: bool,
    },
    /// `h_x / S` on an (x, u) grid, row-major in x.
    Volsurf {
        #[arg(long, default_value_t = 1.5)]
        x_from: f64,
        #[arg(long, default_value_t = 2.5)]
        x_to: f64,
        #[arg(long, default_value_t = 10)]
        x_steps: usize,
        #[arg(long, default_value_t = 1.0)]
        u_from: f64,
        #[arg(long, default_value_t = 2.0)]
        u_to: f64,
        #[arg(long, default_value_t = 10)]
        u_steps: usize,
    },
    /// Solve for aggregate risk aversion given a target mean short rate.
    Calibrate {
        #[arg(long, default_value_t = 2.0)]
        risk_aversion: f64,
        #[arg(long, default_value_t = 0.01)]
        expected_rate: f64,
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.04)]
        rho: f64,
    },
    /// Run a self-check suite and report each check.
    Validate {
        #[arg(long, default_value = "all")]
        suite: Suite,
        /// Monte Carlo paths for the `mc` suite.
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
    },
}

enum Failure {
    Config(String),
    Numerical(ModelError),
    Checks(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidParams(m) => Failure::Config(m),
            e @ ModelError::NoPositiveRoot { .. } => Failure::Config(e.to_string()),
            e => Failure::Numerical(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks(csv)) => {
            // the report still goes out; the exit code carries the verdict
            if let Err(e) = emit(&cli, &csv) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            eprintln!("validation failed");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e}");
            ExitCode::from(3)
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let (params, state) = if cli.exact_calibration { build_defaults_exact()? } else { build_defaults() };
    let mut cfg = RunConfig::new(params, state);
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for s in &cli.set {
        cfg.assign(s)?;
    }
    cfg.params.validate(cli.require_positive_dividend)?;
    MarketState::new(cfg.state.x, cfg.state.u)?;
    Ok(cfg)
}

fn grid(from: f64, to: f64, n: usize) -> Result<Vec<f64>, Failure> {
    if n == 0 || !from.is_finite() || !to.is_finite() {
        return Err(Failure::Config(format!("invalid grid {from}..{to} with {n} points")));
    }
    if n == 1 {
        return Ok(vec![from]);
    }
    Ok((0..n).map(|i| if i + 1 == n { to } else { from + (to - from) * i as f64 / (n - 1) as f64 }).collect())
}

fn sweep_range(p: SweepParam) -> (f64, f64, usize) {
    match p {
        SweepParam::Lambda => (1.0, 8.0, 15),
        SweepParam::Epsilon => (0.5, 50.0, 12),
        SweepParam::Rho => (0.02, 0.08, 13),
        SweepParam::AlphaMean => (1.0, 3.0, 11),
        SweepParam::GammaAgg => (0.3, 0.7, 9),
    }
}

fn emit(cli: &Cli, csv: &str) -> std::io::Result<()> {
    match &cli.output {
        Some(path) => std::fs::write(path, csv),
        None => std::io::stdout().lock().write_all(csv.as_bytes()),
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    let mut out = String::new();
    match &cli.command {
        Command::Calibrate { risk_aversion, expected_rate, lambda, rho } => {
            let target = CalibrationTarget { risk_aversion: *risk_aversion, expected_rate: *expected_rate, lambda: *lambda, rho: *rho };
            let c = solve_gamma(&target)?;
            out.push_str("gamma,a,expected_rate,residual\n");
            let _ = writeln!(out, "{},{},{},{}", c.gamma, c.a, c.expected_rate, c.residual);
        }
        cmd => {
            let cfg = load(cli)?;
            let (p, s) = (cfg.params, cfg.state);
            let k = derive_constants(&p)?;
            let q = QuadratureConfig::default();
            match cmd {
                Command::Price => {
                    let r = StockPricer::new(&p, &k, &q)?.price(&s)?;
                    out.push_str("x,u,stock_price,tail_err,grid_err\n");
                    let _ = writeln!(out, "{},{},{},{},{}", s.x, s.u, r.stock, r.integrand_tail, r.grid_error);
                }
                Command::Bond { tau } => {
                    if !(*tau >= 0.0 && tau.is_finite()) {
                        return Err(Failure::Config(format!("tau must be finite and >= 0, got {tau}")));
                    }
                    let v = bond_price(&s, *tau, &p, &k)?;
                    out.push_str("x,u,tau,discount_factor\n");
                    let _ = writeln!(out, "{},{},{},{}", s.x, s.u, tau, v);
                }
                Command::Rate => {
                    out.push_str("x,u,short_rate\n");
                    let _ = writeln!(out, "{},{},{}", s.x, s.u, short_rate(&s, &p, &k));
                }
                Command::Sweep { param, from, to, steps, hold_state, stationary_state } => {
                    let (f0, t0, n0) = sweep_range(*param);
                    let values = grid(from.unwrap_or(f0), to.unwrap_or(t0), steps.unwrap_or(n0))?;
                    let policy = if *hold_state {
                        StatePolicy::Hold(s.u)
                    } else if *stationary_state {
                        StatePolicy::Stationary { a: p.alpha_mean }
                    } else {
                        StatePolicy::default_for(*param, &p, &s)
                    };
                    let rows = sweep(&p, *param, &values, s.x, policy, &q, exec)?;
                    out.push_str("param,value,stock_price,tail_err,grid_err\n");
                    for r in rows {
                        let _ = writeln!(
                            out,
                            "{},{},{},{},{}",
                            param.name(),
                            r.value,
                            r.report.stock,
                            r.report.integrand_tail,
                            r.report.grid_error
                        );
                    }
                }
                Command::Volsurf { x_from, x_to, x_steps, u_from, u_to, u_steps } => {
                    let xs = grid(*x_from, *x_to, *x_steps)?;
                    let us = grid(*u_from, *u_to, *u_steps)?;
                    let pricer = StockPricer::new(&p, &k, &q)?;
                    out.push_str("x,u,h_x_over_S\n");
                    for &x in &xs {
                        for &u in &us {
                            let st = MarketState::new(x, u)?;
                            let _ = writeln!(out, "{},{},{}", x, u, pricer.volatility(&st, 1e-3)?);
                        }
                    }
                }
                Command::Validate { suite, paths } => {
                    let seed = cfg.resolve_seed(cli.seed, std::env::var("DYNASTY_SEED").ok().as_deref())?;
                    let opts = ValidateOptions { seed, n_paths: *paths, exec };
                    let rows = run_suite(*suite, &p, &s, &opts)?;
                    out.push_str("suite,check,value,tolerance,passed\n");
                    for r in &rows {
                        let _ = writeln!(out, "{},{},{:e},{:e},{}", r.suite, r.check, r.value, r.tolerance, r.passed);
                    }
                    if rows.iter().any(|r| !r.passed) {
                        return Err(Failure::Checks(out));
                    }
                }
                Command::Calibrate { .. } => unreachable!("handled above"),
            }
        }
    }
    emit(cli, &out).map_err(|e| Failure::Config(format!("cannot write output: {e}")))
}
