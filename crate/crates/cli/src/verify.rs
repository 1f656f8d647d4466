//! Identity and constant checks across the library.

use bubble_tower::functionals::energy;
use bubble_tower::grid::{FieldPair, RadialGrid, ScalarField};
use bubble_tower::ops::{apply_operator, OperatorKind};
use bubble_tower::profiles::{kappa, lambda_q, q_profile, TowerConfig};
use bubble_tower::quad::{log_trapezoid, log_trapezoid_dy_over_y};
use bubble_tower::tower::{constants, exact_solution, ode_rhs, RhsMode};
use bubble_tower::Result;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub k: u32,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

fn check(name: &str, k: u32, measured: f64, expected: f64, tolerance: f64) -> Check {
    let err = if expected == 0.0 { measured.abs() } else { (measured / expected - 1.0).abs() };
    Check { name: name.into(), k, measured, expected, tolerance, pass: err <= tolerance }
}

/// `fault` perturbs the quadrature of `κ`.
pub fn run(fault: bool) -> Result<Report> {
    let mut checks = Vec::new();
    let grid = Arc::new(RadialGrid::log_uniform(1e-6, 1e3, 8192)?);
    for k in 2..=5u32 {
        let kf = k as f64;
        let closed = 2.0 * PI / (PI / kf).sin();
        let mut kap = log_trapezoid(|y| lambda_q(k, y).powi(2), -40.0, 40.0, 0.01);
        if fault {
            kap *= 1.0 + 1e-6;
        }
        checks.push(check("kappa_quadrature", k, kap, closed, 1e-8));
        checks.push(check("kappa_closed_form", k, kappa(k), closed, 1e-14));
        let q = FieldPair { u: ScalarField::from_fn(&grid, |r| q_profile(k, r)), udot: ScalarField::zeros(&grid) };
        checks.push(check("bubble_energy", k, energy(&q, k), 4.0 * PI * kf, 1e-8));
        let residue = log_trapezoid_dy_over_y(|y| lambda_q(k, y).powi(3) * 4.0 * y.powf(-kf), -40.0, 40.0, 0.01);
        checks.push(check("interaction_residue", k, residue, 8.0 * kf * kf, 1e-6));
        let lq = ScalarField::from_fn(&grid, |r| lambda_q(k, r));
        let h = apply_operator(k, &OperatorKind::HScaled(1.0), &lq)?.norm_l2() / lq.norm_l2();
        checks.push(check("h_kernel_residual", k, h, 0.0, 1e-6));
        let a = apply_operator(k, &OperatorKind::AScaled(1.0), &lq)?.norm_l2() / lq.norm_l2();
        checks.push(check("a_kernel_residual", k, a, 0.0, 1e-6));
        let lq_err = (0..400)
            .map(|i| 10f64.powf(-6.0 + 9.0 * i as f64 / 399.0))
            .map(|y| (lambda_q(k, y) - kf * q_profile(k, y).sin()).abs())
            .fold(0.0, f64::max);
        checks.push(check("lambda_q_identity", k, lq_err, 0.0, 1e-13));
        let cfg = TowerConfig::alternating(k, vec![1.0])?;
        checks.push(check("asymptotic_value", k, cfg.asymptotic_value(), PI, 0.0));
    }
    for k in 3..=5u32 {
        let c = constants(k, 4)?;
        checks.push(check("eigen_residual", k, c.max_diagonalization_residual(), 0.0, 1e-12));
        let mut worst = 0.0f64;
        for i in 0..20 {
            let t = -10f64.powf(1.0 + 4.0 * i as f64 / 19.0);
            let s = exact_solution(&c, t)?;
            let d = ode_rhs(&c, &s, RhsMode::Leading)?;
            for j in 2..=4 {
                let a = c.alpha[j - 1];
                let bt = -a * (a + 1.0) * c.gamma[j - 1] * (-t).powf(-a - 2.0);
                worst = worst.max((d.b[j - 1] / bt - 1.0).abs());
            }
        }
        checks.push(check("exact_solution_residual", k, worst, 0.0, 1e-12));
    }
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(Report { checks, all_pass })
}
