use thiserror::Error;

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("argument {arg} outside the domain of {function}")]
    Domain { function: &'static str, arg: f64 },

    /// The Riccati linearisation `g` vanished or changed sign, so `a(tau)` has a pole.
    #[error("g degenerates at tau = {tau} (g = {value:e})")]
    DegenerateG { tau: f64, value: f64 },

    #[error("pricing integrand does not decay at tau = {tau} (log-slope {slope:e})")]
    DivergentIntegral { tau: f64, slope: f64 },

    #[error("quadrature error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    QuadratureTolerance { estimate: f64, tolerance: f64 },

    #[error("ODE step size underflow at tau = {tau}")]
    StepSizeUnderflow { tau: f64 },

    #[error("cubic has no positive root: l(0) = {l0} >= 0")]
    NoPositiveRoot { l0: f64 },

    #[error("sampled age {age} exceeds the simulated window {window}")]
    AgeExceedsPath { age: f64, window: f64 },

    #[error("log-payoff {log_payoff} exceeds the overflow guard")]
    Overflow { log_payoff: f64 },
}
