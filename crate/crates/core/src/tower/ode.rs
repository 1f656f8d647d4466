//! Explicit Runge–Kutta integration: adaptive Dormand–Prince 5(4) with
//! output-time clamping, and a fixed-step variant whose solution map is a
//! smooth function of the initial data.

use crate::error::{LabError, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Right-hand side `dy/dx = f(x, y)` written into the last argument.
pub trait Rhs {
    fn eval(&mut self, x: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

impl<F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>> Rhs for F {
    fn eval(&mut self, x: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self(x, y, dy)
    }
}

/// One Dormand–Prince step. Returns the fifth-order solution and the
/// embedded error estimate.
pub fn dp_step<R: Rhs>(f: &mut R, x: f64, y: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    f.eval(x, y, &mut k[0])?;
    for s in 1..7 {
        for i in 0..n {
            let mut acc = y[i];
            for (j, kj) in k.iter().enumerate().take(s) {
                acc += h * A[s][j] * kj[i];
            }
            tmp[i] = acc;
        }
        f.eval(x + C[s] * h, &tmp, &mut k[s])?;
    }
    let mut y5 = vec![0.0; n];
    let mut err = vec![0.0; n];
    for i in 0..n {
        let mut s5 = 0.0;
        let mut s4 = 0.0;
        for s in 0..7 {
            s5 += B5[s] * k[s][i];
            s4 += B4[s] * k[s][i];
        }
        y5[i] = y[i] + h * s5;
        err[i] = h * (s5 - s4);
    }
    Ok((y5, err))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl AdaptiveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, h_init: 1e-3, h_min: 1e-14, max_steps: 1_000_000 }
    }
}

/// Adaptive integration from `x0` through the increasing output points
/// `outputs`. Steps are clamped so that each output point is hit exactly.
/// `check` is called after every accepted step and may halt integration.
pub fn integrate_adaptive<R: Rhs, G: FnMut(f64, &[f64]) -> Result<()>>(
    f: &mut R,
    x0: f64,
    y0: &[f64],
    outputs: &[f64],
    opts: AdaptiveOptions,
    mut check: G,
) -> Result<Vec<Vec<f64>>> {
    if opts.rtol <= 0.0 || opts.atol <= 0.0 {
        return Err(LabError::Parameter("tolerances must be positive".into()));
    }
    if outputs.windows(2).any(|w| w[1] < w[0]) || outputs.first().is_some_and(|&o| o < x0) {
        return Err(LabError::Parameter("output points must be increasing and after the start".into()));
    }
    let mut x = x0;
    let mut y = y0.to_vec();
    let mut h = opts.h_init;
    let mut out = Vec::with_capacity(outputs.len());
    let mut steps = 0usize;
    for &target in outputs {
        while x < target {
            let remaining = target - x;
            let clamp = h >= remaining;
            let step = if clamp { remaining } else { h };
            let (y_new, err) = dp_step(f, x, &y, step)?;
            let mut e = 0.0f64;
            for i in 0..y.len() {
                let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                e = e.max((err[i] / sc).abs());
            }
            if !e.is_finite() {
                return Err(LabError::Instability { t: x, detail: "non-finite error estimate".into() });
            }
            if e <= 1.0 {
                x = if clamp { target } else { x + step };
                y = y_new;
                check(x, &y)?;
                let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                if !clamp || fac < 1.0 {
                    h = step * fac;
                }
            } else {
                h = step * (0.9 * e.powf(-0.2)).clamp(0.1, 0.9);
                if h < opts.h_min {
                    return Err(LabError::Instability { t: x, detail: format!("step size {h:e} below minimum") });
                }
            }
            steps += 1;
            if steps > opts.max_steps {
                return Err(LabError::Instability { t: x, detail: "step budget exhausted".into() });
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}
