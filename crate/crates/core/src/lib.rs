//! Equilibrium asset pricing for an economy of Bayesian, finite-lived dynasties.
//!
//! The dividend is a quadratic function of an Ornstein-Uhlenbeck factor whose
//! reversion level is unknown to agents. Aggregating their beliefs yields a
//! state price density that is log-quadratic in the factor `x` plus a
//! historical-variance state `u`. From it this crate computes:
//!
//! * the short rate and zero-coupon bond prices ([`model`], [`pricing`]),
//! * the stock price as a one-dimensional integral over closed-form Riccati
//!   solutions built from Bessel functions ([`special`], [`ode`], [`pricing`]),
//! * the calibration of aggregate risk aversion ([`calibration`]),
//! * brute-force Monte Carlo oracles for every closed form ([`oracle`]).
//!
//! Monte Carlo work fans out over paths with rayon when the `parallel`
//! feature is enabled; results are bitwise identical either way.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beliefs;
pub mod calibration;
mod error;
pub mod model;
pub mod ode;
pub mod oracle;
pub mod ou;
pub mod par;
pub mod pricing;
pub mod quad;
pub mod special;
pub mod validate;

pub use error::{ModelError, Result};
pub use model::{DerivedConstants, MarketState, ModelParams};
