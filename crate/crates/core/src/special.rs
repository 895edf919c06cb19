//! Bessel functions `J_n` and `Y_n` of orders 0, 1 and 2 on the positive
//! real axis.
//!
//! Three regimes:
//!
//! * `z <= 8`: ascending power series. The largest term is at most ~10^2
//!   times the result, so roughly 14 digits survive.
//! * `8 < z < 25`: Miller backward recurrence for `J_n`, normalised by
//!   `J_0 + 2 sum J_2k = 1`, with Neumann series for `Y_0` and `Y_1`.
//! * `z >= 25`: Hankel asymptotic expansion, truncated at its smallest term
//!   (about `e^{-2z}`).
//!
//! `Y_2` always comes from the forward recurrence `Y_2 = (2/z) Y_1 - Y_0`
//! outside the series regime, which is stable for the second kind.
//!
//! The pricing kernels only need arguments in `(0, 2]`, and they need the
//! scaled combinations `z^2 J_2`, `z^2 Y_2`, `z^3 J_1`, `z^3 Y_1` down to
//! arguments far below the point where `Y_2` overflows; [`ScaledBasis`]
//! provides those.

use std::f64::consts::{FRAC_2_PI, PI};

use crate::{ModelError, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_MAX: f64 = 8.0;
const HANKEL_MIN: f64 = 25.0;
/// Below this the second-kind functions use their two leading terms.
pub const TINY_ARG: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BesselOrder {
    One,
    Two,
}

impl BesselOrder {
    pub fn new(order: u32) -> Result<Self> {
        match order {
            1 => Ok(BesselOrder::One),
            2 => Ok(BesselOrder::Two),
            _ => Err(ModelError::InvalidParams(format!("Bessel order {order} not supported"))),
        }
    }

    pub fn as_u32(self) -> u32 {
        match self {
            BesselOrder::One => 1,
            BesselOrder::Two => 2,
        }
    }
}

/// `J_0, J_1, J_2` and `Y_0, Y_1, Y_2` at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselSet {
    pub j: [f64; 3],
    pub y: [f64; 3],
}

fn check_arg(function: &'static str, z: f64) -> Result<()> {
    if z > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(ModelError::Domain { function, arg: z })
    }
}

pub fn bessel_j(order: BesselOrder, z: f64) -> Result<f64> {
    check_arg("bessel_j", z)?;
    Ok(bessel_set(z).j[order.as_u32() as usize])
}

pub fn bessel_y(order: BesselOrder, z: f64) -> Result<f64> {
    check_arg("bessel_y", z)?;
    if z < TINY_ARG {
        return Ok(match order {
            BesselOrder::One => -FRAC_2_PI / z + z / PI * ((0.5 * z).ln() + EULER_GAMMA - 0.5),
            BesselOrder::Two => -4.0 / (PI * z * z) - 1.0 / PI,
        });
    }
    Ok(bessel_set(z).y[order.as_u32() as usize])
}

/// Order-zero helper, used for recurrence checks.
pub fn bessel_j0(z: f64) -> Result<f64> {
    check_arg("bessel_j0", z)?;
    Ok(bessel_set(z).j[0])
}

pub fn bessel_y0(z: f64) -> Result<f64> {
    check_arg("bessel_y0", z)?;
    Ok(bessel_set(z).y[0])
}

/// All six functions at `z > 0`. Panics in debug builds on non-positive input.
pub fn bessel_set(z: f64) -> BesselSet {
    debug_assert!(z > 0.0);
    if z <= SERIES_MAX {
        let s = Series::new(z);
        BesselSet { j: s.j, y: [s.y0(), s.z_y1() / z, s.z2_y2() / (z * z)] }
    } else if z < HANKEL_MIN {
        miller_neumann(z)
    } else {
        let (j0, y0) = hankel(0, z);
        let (j1, y1) = hankel(1, z);
        let (j2, y2) = hankel(2, z);
        BesselSet { j: [j0, j1, j2], y: [y0, y1, y2] }
    }
}

/// Ascending-series pieces at one argument.
///
/// `j[n]` holds `J_n(z)`; `psi_sum[n]` holds
/// `sum_k (psi(k+1) + psi(n+k+1)) (-z^2/4)^k / (k! (n+k)!)`.
struct Series {
    z: f64,
    j: [f64; 3],
    psi_sum: [f64; 3],
}

impl Series {
    fn new(z: f64) -> Self {
        let half = 0.5 * z;
        let t = -half * half;
        let mut j = [0.0; 3];
        let mut psi_sum = [0.0; 3];
        for n in 0..3 {
            // term_k = t^k / (k! (n+k)!)
            let mut term = 1.0 / factorial(n);
            let mut psi_k = -EULER_GAMMA; // psi(k+1)
            let mut psi_nk = -EULER_GAMMA + harmonic(n); // psi(n+k+1)
            let mut sum_j = term;
            let mut sum_p = (psi_k + psi_nk) * term;
            let mut k = 0usize;
            loop {
                k += 1;
                term *= t / ((k * (n + k)) as f64);
                psi_k += 1.0 / k as f64;
                psi_nk += 1.0 / (n + k) as f64;
                sum_j += term;
                let dp = (psi_k + psi_nk) * term;
                sum_p += dp;
                if term.abs() < 1e-17 * sum_j.abs().max(1e-300) && dp.abs() < 1e-17 * sum_p.abs().max(1e-300) {
                    break;
                }
                if k > 200 {
                    break;
                }
            }
            j[n] = sum_j * half.powi(n as i32);
            psi_sum[n] = sum_p;
        }
        Series { z, j, psi_sum }
    }

    fn log_half(&self) -> f64 {
        (0.5 * self.z).ln()
    }

    fn y0(&self) -> f64 {
        FRAC_2_PI * self.log_half() * self.j[0] - self.psi_sum[0] / PI
    }

    /// `z Y_1(z)`, finite as `z -> 0`.
    fn z_y1(&self) -> f64 {
        let z = self.z;
        let rest = FRAC_2_PI * self.log_half() * self.j[1] - (0.5 * z) / PI * self.psi_sum[1];
        -FRAC_2_PI + z * rest
    }

    /// `z^2 Y_2(z)`, finite as `z -> 0`.
    fn z2_y2(&self) -> f64 {
        let z = self.z;
        let z2 = z * z;
        let rest = FRAC_2_PI * self.log_half() * self.j[2] - 0.25 * z2 / PI * self.psi_sum[2];
        -4.0 / PI * (1.0 + 0.25 * z2) + z2 * rest
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

fn miller_neumann(z: f64) -> BesselSet {
    // Start well above the turning point so J_start is negligible.
    let start = {
        let m = (z + 20.0 + 6.0 * z.sqrt()) as usize;
        m + (m % 2)
    };
    let mut vals = vec![0.0_f64; start + 2];
    vals[start + 1] = 0.0;
    vals[start] = 1e-300;
    for k in (1..=start).rev() {
        vals[k - 1] = 2.0 * k as f64 / z * vals[k] - vals[k + 1];
        if vals[k - 1].abs() > 1e250 {
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm: f64 = vals[0] + 2.0 * vals.iter().skip(2).step_by(2).sum::<f64>();
    for v in vals.iter_mut() {
        *v /= norm;
    }
    let log_term = (0.5 * z).ln() + EULER_GAMMA;
    // Y0 = (2/pi)(ln(z/2) + gamma) J0 - (4/pi) sum_{k>=1} (-1)^k J_{2k} / k
    let mut s0 = 0.0;
    let mut sign = -1.0;
    for k in 1..=start / 2 {
        s0 += sign * vals[2 * k] / k as f64;
        sign = -sign;
    }
    let y0 = FRAC_2_PI * log_term * vals[0] - 2.0 * FRAC_2_PI * s0;
    // Y1 = -2 J0/(pi z) + (2/pi)(ln(z/2) + gamma - 1) J1
    //      - (2/pi) sum_{k>=1} (-1)^k (2k+1) J_{2k+1} / (k (k+1))
    let mut s1 = 0.0;
    let mut sign = -1.0;
    for k in 1..(start / 2) {
        let kf = k as f64;
        s1 += sign * (2.0 * kf + 1.0) * vals[2 * k + 1] / (kf * (kf + 1.0));
        sign = -sign;
    }
    let y1 = -FRAC_2_PI * vals[0] / z + FRAC_2_PI * (log_term - 1.0) * vals[1] - FRAC_2_PI * s1;
    let y2 = 2.0 / z * y1 - y0;
    BesselSet { j: [vals[0], vals[1], vals[2]], y: [y0, y1, y2] }
}

/// Hankel expansion for large `z`: returns `(J_n(z), Y_n(z))`.
fn hankel(n: u32, z: f64) -> (f64, f64) {
    let mu = 4.0 * (n * n) as f64;
    let eight_z = 8.0 * z;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * eight_z);
        if term.abs() > prev || term.abs() < 1e-18 {
            break;
        }
        prev = term.abs();
        // a_k contributes to Q for odd k, P for even k, with alternating signs.
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
    }
    let chi = z - (0.5 * n as f64 + 0.25) * PI;
    let (s, c) = chi.sin_cos();
    let amp = (FRAC_2_PI / z).sqrt();
    (amp * (p * c - q * s), amp * (p * s + q * c))
}

/// Scaled products needed by the Riccati closed form, robust as `z -> 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledBasis {
    /// `z^2 J_2(z)`
    pub z2_j2: f64,
    /// `z^2 Y_2(z)`, tends to `-4/pi`
    pub z2_y2: f64,
    /// `z^3 J_1(z)`
    pub z3_j1: f64,
    /// `z^3 Y_1(z)`, tends to `0` like `-2 z^2 / pi`
    pub z3_y1: f64,
}

impl ScaledBasis {
    pub fn at(z: f64) -> Self {
        // Below this every correction to the limits is under 1e-300.
        if z < 1e-150 {
            return ScaledBasis { z2_j2: 0.0, z2_y2: -4.0 / PI, z3_j1: 0.0, z3_y1: 0.0 };
        }
        debug_assert!(z > 0.0);
        if z <= SERIES_MAX {
            let s = Series::new(z);
            let z2 = z * z;
            ScaledBasis { z2_j2: z2 * s.j[2], z2_y2: s.z2_y2(), z3_j1: z2 * z * s.j[1], z3_y1: z2 * s.z_y1() }
        } else {
            let b = bessel_set(z);
            let z2 = z * z;
            ScaledBasis { z2_j2: z2 * b.j[2], z2_y2: z2 * b.y[2], z3_j1: z2 * z * b.j[1], z3_y1: z2 * z * b.y[1] }
        }
    }
}
