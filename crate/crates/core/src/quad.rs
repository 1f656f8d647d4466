//! Quadrature helpers shared by the grid and profile code.

use nalgebra::{DMatrix, DVector};
use std::sync::OnceLock;

/// Width of the endpoint correction blocks of the Gregory rule.
const GREGORY_ORDER: usize = 8;

// Bernoulli numbers B_{q+1}/(q+1) for q = 0..7 (B_1 term excluded).
const BERNOULLI_OVER: [f64; GREGORY_ORDER] = [
    0.0,
    1.0 / 12.0,
    0.0,
    -1.0 / 120.0,
    0.0,
    1.0 / 252.0,
    0.0,
    -1.0 / 240.0,
];

fn gregory_corrections(m: usize) -> Vec<f64> {
    let a = DMatrix::from_fn(m, m, |q, i| if q == 0 { 1.0 } else { (i as f64).powi(q as i32) });
    let c = DVector::from_fn(m, |q, _| BERNOULLI_OVER[q]);
    let sol = a.lu().solve(&c).expect("Vandermonde system is regular");
    sol.iter().copied().collect()
}

fn cached_corrections(m: usize) -> &'static [f64] {
    static CACHE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    let all = CACHE.get_or_init(|| (1..=GREGORY_ORDER).map(gregory_corrections).collect());
    &all[m - 1]
}

/// Weights of the Gregory-corrected trapezoidal rule on `n` unit-spaced
/// nodes. Exact for polynomials of degree below the correction width and
/// spectrally accurate in the interior; all weights are positive.
pub fn gregory_weights(n: usize) -> Vec<f64> {
    assert!(n >= 2, "need at least two nodes");
    let mut w = vec![1.0; n];
    w[0] = 0.5;
    w[n - 1] = 0.5;
    let m = GREGORY_ORDER.min(n / 2);
    if m >= 2 {
        let a = cached_corrections(m);
        for i in 0..m {
            w[i] += a[i];
            w[n - 1 - i] += a[i];
        }
    }
    w
}

/// Trapezoidal rule in `s = ln y` for `int f(y) y dy` over
/// `[e^{s_lo}, e^{s_hi}]`. Intended for integrands that decay at both
/// ends, where the rule converges exponentially in `1/h`.
pub fn log_trapezoid<F: FnMut(f64) -> f64>(mut f: F, s_lo: f64, s_hi: f64, h: f64) -> f64 {
    let n = ((s_hi - s_lo) / h).ceil().max(1.0) as usize;
    let h = (s_hi - s_lo) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let s = s_lo + i as f64 * h;
        let y = s.exp();
        let wt = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += wt * f(y) * y * y;
    }
    acc * h
}

/// Same as [`log_trapezoid`] with the plain `dy / y` measure.
pub fn log_trapezoid_dy_over_y<F: FnMut(f64) -> f64>(mut f: F, s_lo: f64, s_hi: f64, h: f64) -> f64 {
    log_trapezoid(|y| f(y) / (y * y), s_lo, s_hi, h)
}
