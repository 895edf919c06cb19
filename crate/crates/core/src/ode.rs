//! Riccati system behind the conditional moment generating function
//!
//! `V(tau, x; theta) = exp(a(tau) x^2 / 2 + b(tau) x + c(tau))`, where
//!
//! ```text
//! a' = lambda A e^{-lambda tau} - 2 lambda a + a^2,   a(0) = 2 (C + theta a2)
//! b' = (a - lambda) b,                                b(0) = B + theta a1
//! c' = (a + b^2) / 2,                                 c(0) = theta a0
//! ```
//!
//! The substitution `a = -g'/g` turns the first equation into a linear
//! second-order ODE whose solution is a combination of `J_2` and `Y_2` at
//! `z = 2 sqrt(A/lambda) e^{-lambda tau / 2}`. [`RiccatiKernel`] evaluates that
//! closed form and its `theta`-derivative; [`abc_eval`] assembles `a, b, c`
//! and their `theta`-derivatives on a grid; [`abc_numeric`] integrates the
//! same system with an adaptive Runge-Kutta scheme as an independent check.

use std::f64::consts::PI;

use crate::model::{DerivedConstants, ModelParams};
use crate::quad::{coarsen, cumulative_simpson, uniform_grid};
use crate::special::{bessel_set, ScaledBasis};
use crate::{ModelError, Result};

/// `g` must stay above this on any grid we integrate over.
pub const G_FLOOR: f64 = 1e-12;
/// Below this `z0` the kernel switches to the exact `A = 0` solution.
const Z0_ELEMENTARY: f64 = 1e-60;

/// `g`, `dg/dtau` and their derivatives in `theta` at one `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GValues {
    pub g: f64,
    pub g_dot: f64,
    pub g_theta: f64,
    pub g_dot_theta: f64,
}

#[derive(Debug, Clone, Copy)]
enum KernelForm {
    /// `g = (p z^2 J2 - q z^2 Y2) / z0^2`, linear in `(p, q)`; the `theta`
    /// derivative swaps in `(p_theta, q_theta)`.
    Bessel { z0: f64, p: f64, q: f64, p_theta: f64, q_theta: f64 },
    /// `A = 0`: `g = g0 (1 - (C'/lambda)(1 - e^{-2 lambda tau}))`.
    Elementary { c_eff: f64, a2: f64 },
}

/// Closed-form solution of the linearised Riccati equation for fixed `theta`.
#[derive(Debug, Clone, Copy)]
pub struct RiccatiKernel {
    lambda: f64,
    form: KernelForm,
}

impl RiccatiKernel {
    pub fn new(theta: f64, params: &ModelParams, consts: &DerivedConstants) -> Self {
        let lambda = params.lambda;
        let big_a = consts.big_a;
        let c_eff = consts.big_c + theta * params.a2;
        let z0 = if big_a > 0.0 { 2.0 * (big_a / lambda).sqrt() } else { 0.0 };
        let form = if z0 < Z0_ELEMENTARY {
            KernelForm::Elementary { c_eff, a2: params.a2 }
        } else {
            let s = (lambda * big_a).sqrt();
            let at_z0 = bessel_set(z0);
            let (j1, j2, y1, y2) = (at_z0.j[1], at_z0.j[2], at_z0.y[1], at_z0.y[2]);
            KernelForm::Bessel {
                z0,
                p: s * y1 - 2.0 * c_eff * y2,
                q: s * j1 - 2.0 * c_eff * j2,
                p_theta: -2.0 * params.a2 * y2,
                q_theta: -2.0 * params.a2 * j2,
            }
        };
        RiccatiKernel { lambda, form }
    }

    pub fn eval(&self, tau: f64) -> GValues {
        let lambda = self.lambda;
        match self.form {
            KernelForm::Bessel { z0, p, q, p_theta, q_theta } => {
                let z = z0 * (-0.5 * lambda * tau).exp();
                let basis = ScaledBasis::at(z);
                let inv = 1.0 / (z0 * z0);
                let dot = -0.5 * lambda * inv;
                GValues {
                    g: inv * (p * basis.z2_j2 - q * basis.z2_y2),
                    g_dot: dot * (p * basis.z3_j1 - q * basis.z3_y1),
                    g_theta: inv * (p_theta * basis.z2_j2 - q_theta * basis.z2_y2),
                    g_dot_theta: dot * (p_theta * basis.z3_j1 - q_theta * basis.z3_y1),
                }
            }
            KernelForm::Elementary { c_eff, a2 } => {
                let g0 = lambda / PI;
                let e2 = (-2.0 * lambda * tau).exp();
                GValues {
                    g: g0 * (1.0 - c_eff / lambda * (1.0 - e2)),
                    g_dot: -2.0 * c_eff * g0 * e2,
                    g_theta: -g0 * a2 / lambda * (1.0 - e2),
                    g_dot_theta: -2.0 * a2 * g0 * e2,
                }
            }
        }
    }

    /// Limit of `g` as `tau -> infinity`.
    pub fn g_infinity(&self) -> f64 {
        match self.form {
            KernelForm::Bessel { z0, q, .. } => 4.0 * q / (PI * z0 * z0),
            KernelForm::Elementary { c_eff, .. } => self.lambda / PI * (1.0 - c_eff / self.lambda),
        }
    }
}

/// `(g, dg/dtau)` at `u`, failing if `g` is not safely positive there.
pub fn g_closed(u: f64, theta: f64, params: &ModelParams, consts: &DerivedConstants) -> Result<(f64, f64)> {
    if !(u >= 0.0) {
        return Err(ModelError::Domain { function: "g_closed", arg: u });
    }
    let v = RiccatiKernel::new(theta, params, consts).eval(u);
    if !(v.g > G_FLOOR) {
        return Err(ModelError::DegenerateG { tau: u, value: v.g });
    }
    Ok((v.g, v.g_dot))
}

#[derive(Debug, Clone, Copy)]
pub struct OdeInputs<'a> {
    pub theta: f64,
    pub params: &'a ModelParams,
    pub consts: &'a DerivedConstants,
    pub tau_max: f64,
    /// Number of grid nodes, including both ends.
    pub n_grid: usize,
}

impl<'a> OdeInputs<'a> {
    pub const DEFAULT_GRID: usize = 2001;

    pub fn new(theta: f64, params: &'a ModelParams, consts: &'a DerivedConstants, tau_max: f64) -> Self {
        OdeInputs { theta, params, consts, tau_max, n_grid: Self::DEFAULT_GRID }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau_max > 0.0) || self.n_grid < 2 {
            return Err(ModelError::InvalidParams(format!("need tau_max > 0 and n_grid >= 2 (got {}, {})", self.tau_max, self.n_grid)));
        }
        Ok(())
    }
}

/// `a, b, c` and their `theta`-derivatives on a grid of `tau` values.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub taus: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub da: Vec<f64>,
    pub db: Vec<f64>,
    pub dc: Vec<f64>,
}

impl OdeSolution {
    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }
}

/// Closed-form `a, b` and Simpson-integrated `c` on an arbitrary increasing
/// grid starting at `tau = 0`.
pub fn abc_on_grid(taus: &[f64], theta: f64, params: &ModelParams, consts: &DerivedConstants) -> Result<OdeSolution> {
    assert!(!taus.is_empty() && taus[0] == 0.0, "grid must start at tau = 0");
    let kernel = RiccatiKernel::new(theta, params, consts);
    let g0 = kernel.eval(0.0);
    let b_init = consts.big_b + theta * params.a1;
    let n = taus.len();
    let (mut a, mut b, mut da, mut db) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut c_rate = vec![0.0; n];
    let mut dc_rate = vec![0.0; n];
    for (i, &tau) in taus.iter().enumerate() {
        let v = kernel.eval(tau);
        if !(v.g > G_FLOOR) {
            return Err(ModelError::DegenerateG { tau, value: v.g });
        }
        let inv_g = 1.0 / v.g;
        let decay = (-params.lambda * tau).exp();
        a[i] = -v.g_dot * inv_g;
        da[i] = -v.g_dot_theta * inv_g + v.g_dot * v.g_theta * inv_g * inv_g;
        let ratio = g0.g * decay * inv_g; // g(0) e^{-lambda tau} / g(tau)
        b[i] = b_init * ratio;
        db[i] = params.a1 * ratio + b_init * decay * g0.g_theta * inv_g - b_init * ratio * v.g_theta * inv_g;
        c_rate[i] = 0.5 * (a[i] + b[i] * b[i]);
        dc_rate[i] = 0.5 * da[i] + b[i] * db[i];
    }
    let mut c = cumulative_simpson(taus, &c_rate);
    let mut dc = cumulative_simpson(taus, &dc_rate);
    c.iter_mut().for_each(|v| *v += theta * params.a0);
    dc.iter_mut().for_each(|v| *v += params.a0);
    Ok(OdeSolution { taus: taus.to_vec(), a, b, c, da, db, dc })
}

/// Closed-form solution on the uniform grid described by `inputs`.
///
/// The Simpson integrals for `c` and `dc/dtheta` are checked against the
/// same integrals at half resolution. When the Richardson estimate exceeds
/// `1e-9` (relative to `max(1, |c|)`) the quadrature runs on a subdivided
/// grid and is sampled back at the requested nodes; if that still fails the
/// call errors.
pub fn abc_eval(inputs: &OdeInputs) -> Result<OdeSolution> {
    inputs.validate()?;
    const TOL: f64 = 1e-9;
    let intervals = inputs.n_grid - 1;
    let mut estimate = f64::INFINITY;
    for refine in [1usize, 2, 4, 8, 16] {
        let n = intervals * refine;
        let taus = uniform_grid(0.0, inputs.tau_max, n);
        let sol = abc_on_grid(&taus, inputs.theta, inputs.params, inputs.consts)?;
        estimate = if n.is_multiple_of(2) && n >= 4 {
            let coarse = abc_on_grid(&coarsen(&taus), inputs.theta, inputs.params, inputs.consts)?;
            let (last, clast) = (sol.len() - 1, coarse.len() - 1);
            [(sol.c[last], coarse.c[clast]), (sol.dc[last], coarse.dc[clast])]
                .iter()
                .map(|(fine, rough)| (fine - rough).abs() / 15.0 / fine.abs().max(1.0))
                .fold(0.0, f64::max)
        } else {
            0.0
        };
        if estimate <= TOL {
            if refine == 1 {
                return Ok(sol);
            }
            let pick = |v: &[f64]| v.iter().step_by(refine).copied().collect::<Vec<_>>();
            return Ok(OdeSolution {
                taus: uniform_grid(0.0, inputs.tau_max, intervals),
                a: pick(&sol.a),
                b: pick(&sol.b),
                c: pick(&sol.c),
                da: pick(&sol.da),
                db: pick(&sol.db),
                dc: pick(&sol.dc),
            });
        }
    }
    Err(ModelError::QuadratureTolerance { estimate, tolerance: TOL })
}

/// State `(a, b, c, da, db, dc)` of the augmented system.
type State = [f64; 6];

fn rhs(tau: f64, y: &State, lambda: f64, big_a: f64) -> State {
    let [a, b, _c, da, db, _dc] = *y;
    [
        lambda * big_a * (-lambda * tau).exp() - 2.0 * lambda * a + a * a,
        (a - lambda) * b,
        0.5 * (a + b * b),
        2.0 * (a - lambda) * da,
        da * b + (a - lambda) * db,
        0.5 * da + b * db,
    ]
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combine(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (w, k) in terms {
        for i in 0..6 {
            out[i] += h * w * k[i];
        }
    }
    out
}

/// Adaptive Dormand-Prince integration of the augmented Riccati system,
/// reporting values at the same uniform grid as [`abc_eval`].
pub fn abc_numeric(inputs: &OdeInputs) -> Result<OdeSolution> {
    inputs.validate()?;
    const RTOL: f64 = 1e-10;
    const ATOL: f64 = 1e-13;
    let p = inputs.params;
    let k = inputs.consts;
    let (lambda, big_a) = (p.lambda, k.big_a);
    let taus = uniform_grid(0.0, inputs.tau_max, inputs.n_grid - 1);
    let theta = inputs.theta;
    let mut y: State = [2.0 * (k.big_c + theta * p.a2), k.big_b + theta * p.a1, theta * p.a0, 2.0 * p.a2, p.a1, p.a0];
    let n = taus.len();
    let mut out: Vec<State> = Vec::with_capacity(n);
    out.push(y);
    let mut t = 0.0;
    let mut h = 1e-3_f64.min(inputs.tau_max);
    let mut k1 = rhs(t, &y, lambda, big_a);
    for &target in &taus[1..] {
        while t < target {
            let mut step = h.min(target - t);
            let last = step >= target - t;
            if step < 1e-14 * t.max(1.0) && !last {
                return Err(ModelError::StepSizeUnderflow { tau: t });
            }
            if last {
                step = target - t;
            }
            let k2 = rhs(t + C2 * step, &combine(&y, step, &[(A21, &k1)]), lambda, big_a);
            let k3 = rhs(t + C3 * step, &combine(&y, step, &[(A31, &k1), (A32, &k2)]), lambda, big_a);
            let k4 = rhs(t + C4 * step, &combine(&y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]), lambda, big_a);
            let k5 = rhs(t + C5 * step, &combine(&y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]), lambda, big_a);
            let k6 = rhs(t + step, &combine(&y, step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]), lambda, big_a);
            let y_new = combine(&y, step, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = rhs(t + step, &y_new, lambda, big_a);
            let mut err: f64 = 0.0;
            for i in 0..6 {
                let e = step * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let scale = ATOL + RTOL * y[i].abs().max(y_new[i].abs());
                err = err.max((e / scale).abs());
            }
            if !err.is_finite() {
                h = step * 0.1;
                if h < 1e-14 * t.max(1.0) {
                    return Err(ModelError::StepSizeUnderflow { tau: t });
                }
                continue;
            }
            if err <= 1.0 {
                t = if last { target } else { t + step };
                y = y_new;
                k1 = k7;
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // Do not let a short final step to a grid node shrink h.
                h = if last { h.max(step * grow) } else { step * grow };
            } else {
                h = step * (0.9 * err.powf(-0.2)).max(0.1);
                if h < 1e-14 * t.max(1.0) {
                    return Err(ModelError::StepSizeUnderflow { tau: t });
                }
            }
        }
        out.push(y);
    }
    let col = |j: usize| out.iter().map(|s| s[j]).collect::<Vec<_>>();
    Ok(OdeSolution { taus, a: col(0), b: col(1), c: col(2), da: col(3), db: col(4), dc: col(5) })
}
