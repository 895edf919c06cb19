//! Composite Simpson quadrature on (possibly non-uniform) grids.

/// Running integral `F[i] = int_{x[0]}^{x[i]} f` by composite Simpson.
///
/// Nodes are grouped in pairs of intervals, each integrated with the
/// quadratic through its three points. Interior odd nodes take the partial
/// integral of the same quadratic; with an odd interval count the last
/// interval borrows the preceding node.
pub fn cumulative_simpson(xs: &[f64], fs: &[f64]) -> Vec<f64> {
    assert_eq!(xs.len(), fs.len());
    let n = xs.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * (xs[1] - xs[0]) * (fs[0] + fs[1]);
        return out;
    }
    let mut i = 0;
    while i + 2 < n {
        let h0 = xs[i + 1] - xs[i];
        let h1 = xs[i + 2] - xs[i + 1];
        let (f0, f1, f2) = (fs[i], fs[i + 1], fs[i + 2]);
        let s = h0 + h1;
        let first =
            h0 * (2.0 * h0 + 3.0 * h1) / (6.0 * s) * f0 + h0 * (h0 + 3.0 * h1) / (6.0 * h1) * f1 - h0 * h0 * h0 / (6.0 * h1 * s) * f2;
        let full = s * (2.0 * h0 - h1) / (6.0 * h0) * f0 + s * s * s / (6.0 * h0 * h1) * f1 - (h0 - 2.0 * h1) * s / (6.0 * h1) * f2;
        out[i + 1] = out[i] + first;
        out[i + 2] = out[i] + full;
        i += 2;
    }
    if i + 1 < n {
        // one interval left: second half of the quadratic through (i-1, i, i+1)
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        let s = h0 + h1;
        let second = -h1 * h1 * h1 / (6.0 * h0 * s) * fs[i - 1]
            + h1 * (3.0 * h0 + h1) / (6.0 * h0) * fs[i]
            + h1 * (3.0 * h0 + 2.0 * h1) / (6.0 * s) * fs[i + 1];
        out[i + 1] = out[i] + second;
    }
    out
}

/// Composite Simpson integral over the whole grid.
pub fn simpson(xs: &[f64], fs: &[f64]) -> f64 {
    cumulative_simpson(xs, fs).last().copied().unwrap_or(0.0)
}

/// Composite Simpson weights: `simpson(xs, fs) == dot(weights, fs)` when the
/// interval count is even.
pub fn simpson_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    assert!(n >= 3 && (n - 1).is_multiple_of(2), "simpson_weights needs an even interval count");
    let mut w = vec![0.0; n];
    for i in (0..n - 2).step_by(2) {
        let h0 = xs[i + 1] - xs[i];
        let h1 = xs[i + 2] - xs[i + 1];
        let s = h0 + h1;
        w[i] += s * (2.0 * h0 - h1) / (6.0 * h0);
        w[i + 1] += s * s * s / (6.0 * h0 * h1);
        w[i + 2] -= (h0 - 2.0 * h1) * s / (6.0 * h1);
    }
    w
}

/// `n + 1` equally spaced nodes on `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / n as f64;
    (0..=n).map(|i| if i == n { b } else { a + h * i as f64 }).collect()
}

/// Concatenates uniform segments `[breaks[k], breaks[k+1]]` with `panels[k]`
/// intervals each, sharing the break points.
pub fn piecewise_uniform_grid(breaks: &[f64], panels: &[usize]) -> Vec<f64> {
    assert_eq!(breaks.len(), panels.len() + 1);
    let mut out = vec![breaks[0]];
    for (k, &n) in panels.iter().enumerate() {
        let seg = uniform_grid(breaks[k], breaks[k + 1], n);
        out.extend_from_slice(&seg[1..]);
    }
    out
}

/// Every other node of `xs` (which must have an even interval count).
pub fn coarsen(xs: &[f64]) -> Vec<f64> {
    xs.iter().step_by(2).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactness() {
        // Full panels of equal halves are exact for cubics.
        let xs = uniform_grid(0.0, 1.5, 6);
        let f = |x: f64| 1.0 - 2.0 * x + 3.0 * x * x - 0.5 * x * x * x;
        let big_f = |x: f64| x - x * x + x * x * x - 0.125 * x.powi(4);
        let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let cum = cumulative_simpson(&xs, &fs);
        for i in [0, 2, 4, 6] {
            assert!((cum[i] - big_f(xs[i])).abs() < 1e-13);
        }
        // Uneven grids, half panels and the trailing interval: quadratics.
        let xs = [0.0, 0.1, 0.35, 0.5, 0.9, 1.0, 1.7];
        let g = |x: f64| 2.0 + x - x * x;
        let big_g = |x: f64| 2.0 * x + 0.5 * x * x - x * x * x / 3.0;
        let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
        let cum = cumulative_simpson(&xs, &gs);
        for (i, &x) in xs.iter().enumerate() {
            assert!((cum[i] - big_g(x)).abs() < 1e-13, "node {i}");
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |n: usize| {
            let xs = uniform_grid(0.0, 2.0, n);
            let fs: Vec<f64> = xs.iter().map(|x| (-x * x).exp()).collect();
            let cum = cumulative_simpson(&xs, &fs);
            let exact_mid = 0.746_824_132_812_427; // int_0^1 exp(-x^2)
            (cum[n / 2] - exact_mid).abs()
        };
        let ratio = err(40) / err(80);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn grids() {
        let g = piecewise_uniform_grid(&[0.0, 1.0, 3.0], &[4, 2]);
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0, 2.0, 3.0]);
        assert_eq!(coarsen(&g), vec![0.0, 0.5, 1.0, 3.0]);
        assert_eq!(simpson(&[0.0], &[1.0]), 0.0);
        assert_eq!(simpson(&[0.0, 2.0], &[1.0, 3.0]), 4.0);
        let xs = [0.0, 0.1, 0.35, 0.5, 0.9];
        let fs: Vec<f64> = xs.iter().map(|x: &f64| x.sin()).collect();
        let dot: f64 = simpson_weights(&xs).iter().zip(&fs).map(|(w, f)| w * f).sum();
        assert!((dot - simpson(&xs, &fs)).abs() < 1e-15);
    }
}
