//! Exact simulation of the Ornstein-Uhlenbeck factor.
//!
//! `dX = dW + lambda (m - X) dt`, where `m` is the reversion level of the
//! measure being simulated (`0` for the reference measure). Alongside `X`
//! every path carries the reference Brownian motion
//! `W_t = X_t - X_0 + lambda int_0^t X ds` and the weighted history
//! `U_t = (A/2) int_{-inf}^t lambda e^{-lambda (t - s)} X_s^2 ds`,
//! both accumulated with the trapezoid rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::model::{DerivedConstants, ModelParams};
use crate::par::{map_indexed, Execution};
use crate::{ModelError, Result};

/// Exact OU transition over `dt` driven by the standard normal `z`.
pub fn exact_step(x: f64, dt: f64, z: f64, mean: f64, lambda: f64) -> f64 {
    let decay = (-lambda * dt).exp();
    mean + (x - mean) * decay + ((1.0 - decay * decay) / (2.0 * lambda)).sqrt() * z
}

/// Draw from the stationary law `N(mean, 1/(2 lambda))`.
pub fn sample_stationary(mean: f64, lambda: f64, z: f64) -> f64 {
    mean + z / (2.0 * lambda).sqrt()
}

/// Independent generator for one path: `seed ^ salt` selects the key and the
/// path index selects the stream, so draws never depend on scheduling.
pub fn path_rng(seed: u64, salt: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(index);
    rng
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

const SIM_SALT: u64 = 0x6f75_5f70_6174_6873;

/// Advances `(X, W, U)` one step at a time without storing the path.
#[derive(Debug, Clone, Copy)]
pub struct OuStepper {
    pub x: f64,
    pub w: f64,
    pub u: f64,
    mean: f64,
    lambda_dt: f64,
    decay: f64,
    sd: f64,
    u_gain: f64,
}

impl OuStepper {
    pub fn new(lambda: f64, big_a: f64, mean: f64, dt: f64, x: f64, u: f64) -> Self {
        let decay = (-lambda * dt).exp();
        OuStepper {
            x,
            w: 0.0,
            u,
            mean,
            lambda_dt: lambda * dt,
            decay,
            sd: ((1.0 - decay * decay) / (2.0 * lambda)).sqrt(),
            u_gain: 0.25 * big_a * lambda * dt,
        }
    }

    pub fn step(&mut self, z: f64) {
        let x0 = self.x;
        let x1 = self.mean + (x0 - self.mean) * self.decay + self.sd * z;
        self.w += x1 - x0 + 0.5 * self.lambda_dt * (x0 + x1);
        self.u = self.decay * (self.u + self.u_gain * x0 * x0) + self.u_gain * x1 * x1;
        self.x = x1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub seed: u64,
    /// Reversion level of the simulated measure.
    pub measure_mean: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || !(self.dt > 0.0) || !self.dt.is_finite() || !self.measure_mean.is_finite() {
            return Err(ModelError::InvalidParams(format!("invalid simulation config {self:?}")));
        }
        Ok(())
    }
}

/// One simulated trajectory on the grid `t0 + k dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub t0: f64,
    pub dt: f64,
    pub xs: Vec<f64>,
    /// Cumulative `W` with `ws[0] = 0`.
    pub ws: Vec<f64>,
    pub us: Vec<f64>,
}

impl SimPath {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Time span covered by the path.
    pub fn span(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.dt
    }

    /// `W_end - W_{end - age}`, linearly interpolated between grid points.
    pub fn w_increment_back(&self, age: f64) -> Result<f64> {
        let span = self.span();
        if !(age >= 0.0) || age > span {
            return Err(ModelError::AgeExceedsPath { age, window: span });
        }
        let last = self.len() - 1;
        let pos = last as f64 - age / self.dt;
        let i = (pos.floor() as usize).min(last);
        let frac = pos - i as f64;
        let w = if i == last { self.ws[last] } else { self.ws[i] + frac * (self.ws[i + 1] - self.ws[i]) };
        Ok(self.ws[last] - w)
    }
}

/// Path `index` of `config`. Starts from `x_init`, or from the stationary
/// law of `measure_mean` when `None`.
pub fn simulate_path(
    config: &SimConfig,
    index: usize,
    params: &ModelParams,
    consts: &DerivedConstants,
    x_init: Option<f64>,
    u_init: f64,
) -> SimPath {
    let mut rng = path_rng(config.seed, SIM_SALT, index as u64);
    let x0 = x_init.unwrap_or_else(|| sample_stationary(config.measure_mean, params.lambda, normal(&mut rng)));
    let mut st = OuStepper::new(params.lambda, consts.big_a, config.measure_mean, config.dt, x0, u_init);
    let n = config.n_steps + 1;
    let (mut xs, mut ws, mut us) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    xs.push(st.x);
    ws.push(st.w);
    us.push(st.u);
    for _ in 0..config.n_steps {
        st.step(normal(&mut rng));
        xs.push(st.x);
        ws.push(st.w);
        us.push(st.u);
    }
    SimPath { t0: 0.0, dt: config.dt, xs, ws, us }
}

pub fn simulate(
    config: &SimConfig,
    params: &ModelParams,
    consts: &DerivedConstants,
    x_init: Option<f64>,
    u_init: f64,
    exec: Execution,
) -> Result<Vec<SimPath>> {
    config.validate()?;
    if !(u_init >= 0.0) {
        return Err(ModelError::InvalidParams(format!("u_init must be nonnegative, got {u_init}")));
    }
    Ok(map_indexed(config.n_paths, exec, |i| simulate_path(config, i, params, consts, x_init, u_init)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_constants;
    use crate::par::Estimate;

    fn defaults() -> ModelParams {
        ModelParams { a0: 0.0, a1: 0.0, a2: 1.0, lambda: 2.0, rho: 0.04, epsilon: 1.0, gamma_agg: 0.49, alpha_mean: 2.01 }
    }

    #[test]
    fn step_limits() {
        assert_eq!(exact_step(1.5, 0.1, 0.0, 1.5, 2.0), 1.5);
        assert_eq!(exact_step(-4.0, 1e6, 0.0, 0.7, 2.0), 0.7);
        assert_eq!(sample_stationary(0.3, 2.0, 0.0), 0.3);
        assert!((sample_stationary(0.0, 2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    fn variance_check(samples: &[f64], expect: f64) {
        // SE of the sample variance of a normal sample is sigma^2 sqrt(2/(n-1)).
        let e = Estimate::from_samples(samples);
        let n = samples.len() as f64;
        let var = samples.iter().map(|v| (v - e.mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = expect * (2.0 / (n - 1.0)).sqrt();
        assert!((var - expect).abs() < 3.0 * se, "{var} vs {expect} (se {se})");
    }

    #[test]
    fn one_step_variance() {
        let mut rng = path_rng(7, 0, 0);
        let xs: Vec<f64> = (0..1_000_000).map(|_| exact_step(0.4, 0.1, normal(&mut rng), 0.0, 2.0)).collect();
        let expect = (1.0 - (-0.4f64).exp()) / 4.0;
        assert!((expect - 0.082_419_9).abs() < 1e-6);
        variance_check(&xs, expect);
    }

    #[test]
    fn stationary_variance() {
        let mut rng = path_rng(8, 0, 0);
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_stationary(1.0, 2.0, normal(&mut rng))).collect();
        variance_check(&xs, 0.25);
    }

    #[test]
    fn empty_path_and_determinism() {
        let p = defaults();
        let k = derive_constants(&p).unwrap();
        let cfg = SimConfig { n_paths: 3, n_steps: 0, dt: 1e-3, seed: 1, measure_mean: 0.0 };
        let paths = simulate(&cfg, &p, &k, Some(0.5), 0.2, Execution::Sequential).unwrap();
        assert_eq!(paths[0].xs, vec![0.5]);
        assert_eq!(paths[0].ws, vec![0.0]);
        let cfg = SimConfig { n_steps: 200, n_paths: 16, ..cfg };
        let a = simulate(&cfg, &p, &k, None, 0.2, Execution::Sequential).unwrap();
        let b = simulate(&cfg, &p, &k, None, 0.2, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].xs, a[1].xs);
        assert!(simulate(&SimConfig { dt: 0.0, ..cfg }, &p, &k, None, 0.2, Execution::Sequential).is_err());
    }

    #[test]
    fn terminal_u_mean_is_stationary() {
        let p = defaults();
        let k = derive_constants(&p).unwrap();
        let a = 2.01;
        let eu = 0.5 * k.big_a * (a * a + 0.25);
        let cfg = SimConfig { n_paths: 10_000, n_steps: 1000, dt: 1e-3, seed: 11, measure_mean: a };
        let paths = simulate(&cfg, &p, &k, None, eu, Execution::default()).unwrap();
        let last: Vec<f64> = paths.iter().map(|p| *p.us.last().unwrap()).collect();
        let e = Estimate::from_samples(&last);
        assert!(e.z_against(eu) < 3.0, "{e:?} vs {eu}");
        assert!(last.iter().all(|&u| u >= 0.0));
    }

    #[test]
    fn w_increments_are_standard_normal() {
        let p = defaults();
        let k = derive_constants(&p).unwrap();
        let dt = 1e-3;
        let cfg = SimConfig { n_paths: 20, n_steps: 10_000, dt, seed: 3, measure_mean: 0.0 };
        let paths = simulate(&cfg, &p, &k, None, 0.0, Execution::default()).unwrap();
        let z: Vec<f64> = paths.iter().flat_map(|p| p.ws.windows(2).map(|w| (w[1] - w[0]) / dt.sqrt())).collect();
        let e = Estimate::from_samples(&z);
        assert!(e.z_against(0.0) < 3.0);
        // variance carries an O(dt) bias from the trapezoid on lambda X
        let n = z.len() as f64;
        let var = z.iter().map(|v| (v - e.mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n).sqrt() + 2.0 * dt, "{var}");
        let kurt = z.iter().map(|v| (v - e.mean).powi(4)).sum::<f64>() / n / (var * var);
        assert!((kurt - 3.0).abs() < 3.0 * (24.0 / n).sqrt(), "{kurt}");
    }

    #[test]
    fn u_recursion_telescopes() {
        let p = defaults();
        let k = derive_constants(&p).unwrap();
        let cfg = SimConfig { n_paths: 1, n_steps: 3000, dt: 2e-3, seed: 5, measure_mean: 1.0 };
        let path = simulate_path(&cfg, 0, &p, &k, Some(0.3), 0.8);
        let n = cfg.n_steps;
        let t_n = n as f64 * cfg.dt;
        let mut direct = (-p.lambda * t_n).exp() * 0.8;
        for i in 0..n {
            let (s0, s1) = (i as f64 * cfg.dt, (i + 1) as f64 * cfg.dt);
            let f0 = (p.lambda * (s0 - t_n)).exp() * path.xs[i].powi(2);
            let f1 = (p.lambda * (s1 - t_n)).exp() * path.xs[i + 1].powi(2);
            direct += 0.5 * k.big_a * p.lambda * 0.5 * cfg.dt * (f0 + f1);
        }
        assert!((direct - path.us[n]).abs() < 1e-12 * direct);
    }

    #[test]
    fn w_increment_lookup() {
        let path = SimPath { t0: 0.0, dt: 0.5, xs: vec![0.0; 3], ws: vec![0.0, 1.0, 3.0], us: vec![0.0; 3] };
        assert_eq!(path.w_increment_back(0.0).unwrap(), 0.0);
        assert_eq!(path.w_increment_back(0.25).unwrap(), 1.0);
        assert_eq!(path.w_increment_back(1.0).unwrap(), 3.0);
        assert!(matches!(path.w_increment_back(1.5), Err(ModelError::AgeExceedsPath { .. })));
    }
}
