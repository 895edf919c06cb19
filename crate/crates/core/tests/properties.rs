use std::f64::consts::PI;

use dynasty_core::beliefs::{age_density, log_lambda_density, posterior, BeliefInput};
use dynasty_core::model::{derive_constants, DerivedConstants};
use dynasty_core::ode::g_closed;
use dynasty_core::ou::exact_step;
use dynasty_core::par::{pairwise_sum, Estimate};
use dynasty_core::pricing::{bond_price, QuadratureConfig, StockPricer};
use dynasty_core::quad::{simpson, uniform_grid};
use dynasty_core::{MarketState, ModelParams};
use proptest::prelude::*;

/// Nodes and weights for `int e^{-y^2} f(y) dy`, by Newton on the
/// orthonormal Hermite recurrence.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let (mut x, mut w) = (vec![0.0; n], vec![0.0; n]);
    let mut z = 0.0_f64;
    for i in 0..n.div_ceil(2) {
        let nf = n as f64;
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn lambda_by_quadrature(b: &BeliefInput, nodes: &(Vec<f64>, Vec<f64>)) -> f64 {
    let scale = (2.0 / b.epsilon).sqrt();
    let sum: f64 = nodes
        .0
        .iter()
        .zip(&nodes.1)
        .map(|(&y, &w)| {
            let alpha = b.alpha_prior + scale * y;
            w * (alpha * b.d_w - 0.5 * alpha * alpha * b.dt_age).exp()
        })
        .sum();
    sum / PI.sqrt()
}

fn params(lambda: f64, epsilon: f64, gamma: f64, alpha: f64) -> ModelParams {
    ModelParams { a0: 0.0, a1: 0.0, a2: 1.0, lambda, rho: 0.04, epsilon, gamma_agg: gamma, alpha_mean: alpha }
}

#[test]
fn hermite_rule_integrates_moments() {
    let (x, w) = gauss_hermite(80);
    let m0: f64 = w.iter().sum();
    let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
    assert!((m0 - PI.sqrt()).abs() < 1e-13);
    assert!((m2 - 0.5 * PI.sqrt()).abs() < 1e-13);
}

proptest! {
    #[test]
    fn density_matches_prior_average(
        d_w in -3.0..3.0f64, frac in 0.0..1.0f64, alpha_prior in -3.0..3.0f64, epsilon in 0.5..5.0f64,
    ) {
        // the rule loses accuracy like (r / (r + 2))^n once the likelihood is r = t / eps times sharper than the prior
        let dt_age = 3.0 * epsilon * frac;
        let nodes = gauss_hermite(80);
        let b = BeliefInput { d_w, dt_age, alpha_prior, epsilon };
        let want = lambda_by_quadrature(&b, &nodes);
        let got = log_lambda_density(&b).exp();
        prop_assert!(((got - want) / want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn log_density_is_convex_in_increment(
        d_w in -5.0..5.0f64, dt_age in 0.0..20.0f64, alpha_prior in -3.0..3.0f64, epsilon in 0.1..10.0f64,
    ) {
        let f = |w: f64| log_lambda_density(&BeliefInput { d_w: w, dt_age, alpha_prior, epsilon });
        let h = 1e-2;
        let second = (f(d_w + h) - 2.0 * f(d_w) + f(d_w - h)) / (h * h);
        prop_assert!(second > 0.0);
        prop_assert!((second - 1.0 / (epsilon + dt_age)).abs() < 1e-6);
        prop_assert!(f(d_w).exp() > 0.0);
    }

    #[test]
    fn posterior_mean_is_a_precision_weighted_average(
        d_w in -5.0..5.0f64, dt_age in 0.01..20.0f64, alpha_prior in -3.0..3.0f64, epsilon in 0.1..10.0f64,
    ) {
        let b = BeliefInput { d_w, dt_age, alpha_prior, epsilon };
        let (mean, precision) = posterior(&b);
        let data = d_w / dt_age;
        prop_assert!(mean >= alpha_prior.min(data) - 1e-12 && mean <= alpha_prior.max(data) + 1e-12);
        prop_assert!((precision - epsilon - dt_age).abs() < 1e-12);
    }

    #[test]
    fn age_density_is_a_probability(lambda in 0.5..6.0f64, k in 1.0..10.0f64) {
        let epsilon = k / lambda;
        let us = uniform_grid(0.0, 60.0 / lambda, 6000);
        let fs: Vec<f64> = us.iter().map(|&u| age_density(u, epsilon, lambda)).collect();
        prop_assert!((simpson(&us, &fs) - 1.0).abs() < 1e-9);
        prop_assert!(fs.iter().all(|&f| f >= 0.0));
    }

    #[test]
    fn g_starts_at_lambda_over_pi(
        lambda in 1.0..8.0f64, epsilon in 1.0..20.0f64, gamma in 0.1..1.5f64, alpha in -3.0..3.0f64, theta in 0.0..0.2f64,
    ) {
        let p = params(lambda, epsilon, gamma, alpha);
        let k = derive_constants(&p).unwrap();
        let g0 = g_closed(0.0, theta, &p, &k).unwrap().0;
        prop_assert!(((g0 - lambda / PI) / (lambda / PI)).abs() < 1e-12);
    }

    #[test]
    fn exact_step_without_noise_is_deterministic_reversion(
        x in -5.0..5.0f64, dt in 1e-5..1.0f64, mean in -3.0..3.0f64, lambda in 0.1..10.0f64,
    ) {
        let want = mean + (x - mean) * (-lambda * dt).exp();
        prop_assert!((exact_step(x, dt, 0.0, mean, lambda) - want).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_agrees_with_naive(xs in prop::collection::vec(-1e3..1e3f64, 1..2000)) {
        let naive: f64 = xs.iter().sum();
        let scale: f64 = xs.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        prop_assert!((pairwise_sum(&xs) - naive).abs() <= 1e-12 * scale);
        let est = Estimate::from_samples(&xs);
        prop_assert!((est.mean - naive / xs.len() as f64).abs() <= 1e-12 * scale);
        prop_assert!(est.se >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn large_epsilon_reaches_known_parameter_prices(
        lambda in 1.0..4.0f64, gamma in 0.3..1.0f64, alpha in 0.0..3.0f64, x in 0.0..3.0f64, u in 0.1..3.0f64,
    ) {
        let p = params(lambda, 1e8, gamma, alpha);
        let q = QuadratureConfig::default();
        let s = MarketState::new(x, u).unwrap();
        let finite = StockPricer::new(&p, &derive_constants(&p).unwrap(), &q).unwrap().price(&s).unwrap().stock;
        let limit = StockPricer::new(&p, &DerivedConstants::known_parameter_limit(&p), &q).unwrap().price(&s).unwrap().stock;
        prop_assert!(((finite - limit) / limit).abs() < 1e-5, "{finite} vs {limit}");
    }

    #[test]
    fn positive_dividends_give_positive_prices(
        a0 in 0.05..1.0f64, a2 in 0.8..1.5f64, x in -1.0..3.0f64, u in 0.1..3.0f64,
    ) {
        let p = ModelParams { a0, a2, ..params(2.0, 1.0, 0.49, 2.01) };
        let k = derive_constants(&p).unwrap();
        let r = StockPricer::new(&p, &k, &QuadratureConfig::default()).unwrap().price(&MarketState::new(x, u).unwrap()).unwrap();
        prop_assert!(r.stock > 0.0 && r.stock.is_finite());
        prop_assert!(!r.sign_change);
    }

    #[test]
    fn bond_prices_are_positive_and_start_at_one(tau in 0.0..20.0f64, x in -1.0..3.0f64, u in 0.1..3.0f64) {
        let p = params(2.0, 1.0, 0.49, 2.01);
        let k = derive_constants(&p).unwrap();
        let s = MarketState::new(x, u).unwrap();
        let v = bond_price(&s, tau, &p, &k).unwrap();
        prop_assert!(v > 0.0 && v.is_finite());
        prop_assert_eq!(bond_price(&s, 0.0, &p, &k).unwrap(), 1.0);
    }
}
