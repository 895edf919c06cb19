//! Path-level parallelism with a sequential fallback.
//!
//! Every Monte Carlo routine in the crate maps a pure function over path
//! indices and reduces the collected results in index order, so the numbers
//! do not depend on the execution strategy or the thread count.

/// How a batch of independent evaluations is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to [`Execution::Sequential`] when the `parallel` feature is off.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Pairwise (tree) summation; the result depends only on the slice contents.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    /// Mean and standard error of `samples`, reduced with [`pairwise_sum`].
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, se: f64::NAN };
        }
        let mean = pairwise_sum(samples) / n as f64;
        if n == 1 {
            return Estimate { mean, se: 0.0 };
        }
        let sq: Vec<f64> = samples.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = pairwise_sum(&sq) / (n - 1) as f64;
        Estimate { mean, se: (var / n as f64).sqrt() }
    }

    /// `|self - other|` in units of the combined standard error; `0` when
    /// both are exact and equal.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let diff = (self.mean - other.mean).abs();
        let se = (self.se * self.se + other.se * other.se).sqrt();
        if diff == 0.0 {
            0.0
        } else {
            diff / se
        }
    }

    /// `|self - value| / se`.
    pub fn z_against(&self, value: f64) -> f64 {
        self.z_score(&Estimate { mean: value, se: 0.0 })
    }
}
