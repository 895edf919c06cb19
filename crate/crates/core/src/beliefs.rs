//! Individual beliefs and their aggregation across dynasties.
//!
//! An agent born `dt_age` ago with a `N(alpha, 1/epsilon)` prior on the drift
//! `lambda a` has observed the reference Brownian increment `dW` since birth.
//! Its subjective law relative to the reference measure has density
//! [`lambda_density`]. Ages of the currently living members are i.i.d. with
//! density `A (epsilon + u) lambda e^{-lambda u}`.

use rand::Rng;

use crate::model::{DerivedConstants, ModelParams};
use crate::ou::{normal, path_rng, SimPath};
use crate::par::{map_indexed, Estimate, Execution};
use crate::quad::{simpson, uniform_grid};
use crate::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefInput {
    pub d_w: f64,
    pub dt_age: f64,
    pub alpha_prior: f64,
    pub epsilon: f64,
}

impl BeliefInput {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_age >= 0.0) || !(self.epsilon > 0.0) || !self.d_w.is_finite() || !self.alpha_prior.is_finite() {
            return Err(ModelError::InvalidParams(format!("invalid belief input {self:?}")));
        }
        Ok(())
    }
}

pub fn log_lambda_density(b: &BeliefInput) -> f64 {
    let (w, t, al, e) = (b.d_w, b.dt_age, b.alpha_prior, b.epsilon);
    0.5 * (e / (e + t)).ln() + (w * w + 2.0 * al * e * w - e * al * al * t) / (2.0 * (e + t))
}

pub fn lambda_density(b: &BeliefInput) -> f64 {
    log_lambda_density(b).exp()
}

/// Posterior `(mean, precision)` of `lambda a`.
pub fn posterior(b: &BeliefInput) -> (f64, f64) {
    let precision = b.epsilon + b.dt_age;
    ((b.epsilon * b.alpha_prior + b.d_w) / precision, precision)
}

pub fn age_density(u: f64, epsilon: f64, lambda: f64) -> f64 {
    if u < 0.0 {
        return 0.0;
    }
    let big_a = lambda / (1.0 + epsilon * lambda);
    big_a * (epsilon + u) * lambda * (-lambda * u).exp()
}

/// Weights of the `Exp(lambda)` and `Gamma(2, lambda)` components of the age law.
pub fn age_mixture_weights(epsilon: f64, lambda: f64) -> (f64, f64) {
    let big_a = lambda / (1.0 + epsilon * lambda);
    (big_a * epsilon, big_a / lambda)
}

/// Exact age draw from three independent uniforms on `(0, 1]`: the first
/// picks the mixture component, the others feed the exponential draws.
pub fn sample_age(epsilon: f64, lambda: f64, uniforms: [f64; 3]) -> Result<f64> {
    if !(lambda > 0.0) || !(epsilon > 0.0) || lambda * epsilon < 1.0 {
        return Err(ModelError::InvalidParams(format!("age law needs lambda * epsilon >= 1 (lambda = {lambda}, epsilon = {epsilon})")));
    }
    let (w_exp, _) = age_mixture_weights(epsilon, lambda);
    let e1 = -uniforms[1].ln() / lambda;
    if uniforms[0] <= w_exp {
        Ok(e1)
    } else {
        Ok(e1 - uniforms[2].ln() / lambda)
    }
}

fn open_uniform<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Cross-sectional law of priors and risk aversions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationLaw {
    /// Standard deviation of `alpha_i` around `alpha_mean`.
    pub alpha_sd: f64,
    /// `Gamma / gamma_i` is uniform on `[1 - s, 1 + s]`; `0` makes all
    /// agents equally risk averse.
    pub gamma_spread: f64,
}

impl Default for PopulationLaw {
    fn default() -> Self {
        PopulationLaw { alpha_sd: 0.1, gamma_spread: 0.0 }
    }
}

const POP_SALT: u64 = 0x706f_7075_6c61_7465;

/// Population average of `(Gamma/gamma_i) log Lambda_i` for `n` dynasties
/// whose current members were all born on `path`, evaluated at its last node.
pub fn aggregate_log_lambda(
    n: usize,
    params: &ModelParams,
    path: &SimPath,
    law: &PopulationLaw,
    seed: u64,
    exec: Execution,
) -> Result<Estimate> {
    if n == 0 || !(law.gamma_spread >= 0.0 && law.gamma_spread < 1.0) || !(law.alpha_sd >= 0.0) {
        return Err(ModelError::InvalidParams(format!("invalid population (n = {n}, {law:?})")));
    }
    let samples: Result<Vec<f64>> = map_indexed(n, exec, |i| {
        let mut rng = path_rng(seed, POP_SALT, i as u64);
        let us = [open_uniform(&mut rng), open_uniform(&mut rng), open_uniform(&mut rng)];
        let age = sample_age(params.epsilon, params.lambda, us)?;
        let alpha = params.alpha_mean + law.alpha_sd * normal(&mut rng);
        let weight = 1.0 + law.gamma_spread * (2.0 * rng.random::<f64>() - 1.0);
        let d_w = path.w_increment_back(age)?;
        let b = BeliefInput { d_w, dt_age: age, alpha_prior: alpha, epsilon: params.epsilon };
        Ok(weight * log_lambda_density(&b))
    })
    .into_iter()
    .collect();
    Ok(Estimate::from_samples(&samples?))
}

/// The path-independent part of the aggregate,
/// `E[Gamma/gamma] (E_phi[log(eps/(eps+u))/2] - eps E[alpha^2] A / (2 lambda))`.
pub fn age_constant(params: &ModelParams, consts: &DerivedConstants, law: &PopulationLaw) -> f64 {
    let (e, l) = (params.epsilon, params.lambda);
    let us = uniform_grid(0.0, 80.0 / l, 40_000);
    let fs: Vec<f64> = us.iter().map(|&u| age_density(u, e, l) * 0.5 * (e / (e + u)).ln()).collect();
    let log_term = simpson(&us, &fs);
    let alpha_sq = params.alpha_mean * params.alpha_mean + law.alpha_sd * law.alpha_sd;
    // E[Gamma/gamma] = 1 under the uniform spread
    log_term - 0.5 * e * alpha_sq * consts.big_a / l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_constants;
    use crate::ou::path_rng;

    fn defaults() -> ModelParams {
        ModelParams { a0: 0.0, a1: 0.0, a2: 1.0, lambda: 2.0, rho: 0.04, epsilon: 1.0, gamma_agg: 0.49, alpha_mean: 2.01 }
    }

    #[test]
    fn no_data_means_unit_density() {
        let b = BeliefInput { d_w: 0.0, dt_age: 0.0, alpha_prior: 1.7, epsilon: 0.8 };
        assert_eq!(lambda_density(&b), 1.0);
        assert_eq!(posterior(&b), (1.7, 0.8));
    }

    #[test]
    fn known_parameter_limit_is_girsanov() {
        let (w, t, al) = (0.7, 2.5, 1.2);
        let b = BeliefInput { d_w: w, dt_age: t, alpha_prior: al, epsilon: 1e12 };
        let expect = al * w - 0.5 * al * al * t;
        assert!((log_lambda_density(&b) - expect).abs() < 1e-9);
    }

    #[test]
    fn posterior_cases() {
        let b = BeliefInput { d_w: 3.0 * 1.5, dt_age: 3.0, alpha_prior: 1.5, epsilon: 2.0 };
        assert!((posterior(&b).0 - 1.5).abs() < 1e-15);
        let b = BeliefInput { d_w: 4.02e8, dt_age: 1e8, alpha_prior: -1.0, epsilon: 1.0 };
        assert!((posterior(&b).0 - 4.02).abs() < 1e-7);
    }

    #[test]
    fn age_law_moments() {
        let (e, l) = (1.0, 2.0);
        let (we, wg) = age_mixture_weights(e, l);
        assert!((we - 2.0 / 3.0).abs() < 1e-15 && (wg - 1.0 / 3.0).abs() < 1e-15);
        let us = uniform_grid(0.0, 40.0, 20_000);
        let fs: Vec<f64> = us.iter().map(|&u| age_density(u, e, l)).collect();
        assert!((simpson(&us, &fs) - 1.0).abs() < 1e-12);
        let mut rng = path_rng(21, 0, 0);
        let ages: Vec<f64> = (0..1_000_000)
            .map(|_| sample_age(e, l, [open_uniform(&mut rng), open_uniform(&mut rng), open_uniform(&mut rng)]).unwrap())
            .collect();
        let est = Estimate::from_samples(&ages);
        let mean = we / l + wg * 2.0 / l;
        assert!(est.z_against(mean) < 3.0, "{est:?} vs {mean}");
        assert!(sample_age(0.4, 2.0, [0.5; 3]).is_err());
    }

    #[test]
    fn age_density_flat_at_boundary() {
        // lambda epsilon = 1: phi'(0) = A lambda (1 - lambda epsilon) = 0
        let (e, l) = (0.5, 2.0);
        let h = 1e-6;
        let slope = (age_density(h, e, l) - age_density(0.0, e, l)) / h;
        assert!(slope.abs() < 1e-5);
        assert!(age_density(1.0, e, l) < age_density(0.5, e, l));
    }

    #[test]
    fn degenerate_population() {
        let p = ModelParams { epsilon: 1e12, alpha_mean: 0.0, ..defaults() };
        let path = SimPath { t0: 0.0, dt: 1.0, xs: vec![0.0; 101], ws: vec![0.0; 101], us: vec![0.0; 101] };
        let law = PopulationLaw { alpha_sd: 0.0, gamma_spread: 0.0 };
        let e = aggregate_log_lambda(1, &p, &path, &law, 1, Execution::Sequential).unwrap();
        assert!(e.mean.abs() < 1e-9);
    }

    #[test]
    fn short_path_is_rejected() {
        let p = defaults();
        let path = SimPath { t0: 0.0, dt: 0.1, xs: vec![0.0; 3], ws: vec![0.0; 3], us: vec![0.0; 3] };
        let r = aggregate_log_lambda(1000, &p, &path, &PopulationLaw::default(), 1, Execution::Sequential);
        assert!(matches!(r, Err(ModelError::AgeExceedsPath { .. })));
    }

    #[test]
    fn age_constant_against_closed_pieces() {
        let p = defaults();
        let k = derive_constants(&p).unwrap();
        let law = PopulationLaw { alpha_sd: 0.0, gamma_spread: 0.0 };
        // Integrate the log term independently on a truncated exponential change of variable.
        let n = 200_000;
        let mut acc = 0.0;
        for i in 0..n {
            let v = (i as f64 + 0.5) / n as f64; // v = 1 - e^{-lambda u}
            let u = -(1.0 - v).ln() / p.lambda;
            acc += k.big_a * (p.epsilon + u) * 0.5 * (p.epsilon / (p.epsilon + u)).ln();
        }
        let log_term = acc / n as f64;
        let expect = log_term - 0.5 * p.epsilon * p.alpha_mean.powi(2) * k.big_a / p.lambda;
        assert!((age_constant(&p, &k, &law) - expect).abs() < 1e-6);
    }
}
