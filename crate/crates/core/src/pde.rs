//! Method-of-lines solver for
//!
//! ```text
//!     u_t = u̇,    u̇_t = u_rr + u_r / r - k² sin(2u) / (2r²)
//! ```
//!
//! on a uniform radial grid. Spatial derivatives are the fourth-order
//! stencils of [`crate::grid`] with parity ghosts at the origin.

use crate::error::{LabError, Result};
use crate::functionals::energy;
use crate::grid::{FieldPair, GridKind, GridSpec, Origin, RadialGrid, ScalarField};
use crate::profiles::{lambda_q, multibubble, TowerConfig};
use crate::tower::{stable_manifold_init, ShootingConfig, TowerConstants};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Largest admissible Courant factor.
pub const MAX_CFL: f64 = 0.9;

/// Minimum number of grid points inside the innermost bubble core.
pub const MIN_CORE_POINTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeIntegrator {
    Rk4,
    /// Velocity Verlet.
    Leapfrog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// `u(r_max)` held at its initial value, `u̇(r_max) = 0`.
    DirichletAsymptotic,
    /// Outgoing-wave relation `∂_t w = -∂_r w - w / (2r)` for
    /// `w = u - u_∞`, where `u_∞` is the multiple of `π` nearest to
    /// `u(r_max)`.
    Absorbing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub k: u32,
    pub grid: GridSpec,
    pub cfl: f64,
    pub time_integrator: TimeIntegrator,
    pub boundary: Boundary,
    pub snapshot_cadence: f64,
}

impl SolverConfig {
    /// RK4, Dirichlet edge, `cfl = 0.5`, snapshots every `0.1`.
    pub fn uniform(k: u32, r_max: f64, n: usize) -> Self {
        Self {
            k,
            grid: GridSpec { kind: GridKind::Uniform, r_min: r_max / n as f64, r_max, n },
            cfl: 0.5,
            time_integrator: TimeIntegrator::Rk4,
            boundary: Boundary::DirichletAsymptotic,
            snapshot_cadence: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(LabError::Domain("k must be at least 1".into()));
        }
        if self.grid.kind != GridKind::Uniform {
            return Err(LabError::Configuration("the evolution runs on a uniform grid".into()));
        }
        if !(self.cfl > 0.0 && self.cfl <= MAX_CFL) {
            return Err(LabError::Configuration(format!("cfl must lie in (0, {MAX_CFL}], got {}", self.cfl)));
        }
        if !(self.snapshot_cadence > 0.0 && self.snapshot_cadence.is_finite()) {
            return Err(LabError::Configuration(format!(
                "snapshot cadence must be positive, got {}",
                self.snapshot_cadence
            )));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Arc<RadialGrid>> {
        self.validate()?;
        Ok(Arc::new(self.grid.build()?))
    }

    /// `cfl · dr`.
    pub fn max_dt(&self) -> f64 {
        self.cfl * self.grid.r_max / self.grid.n as f64
    }
}

fn nonfinite(t: f64, what: &str) -> LabError {
    LabError::Instability { t, detail: format!("non-finite values in {what}") }
}

fn check_finite(pair: &FieldPair, t: f64) -> Result<()> {
    if pair.u.values().iter().any(|v| !v.is_finite()) {
        return Err(nonfinite(t, "u"));
    }
    if pair.udot.values().iter().any(|v| !v.is_finite()) {
        return Err(nonfinite(t, "u̇"));
    }
    Ok(())
}

/// `u_rr + u_r / r - k² sin(2u) / (2r²)`.
fn acceleration(k: u32, u: &ScalarField) -> Vec<f64> {
    let grid = u.grid();
    let origin = Origin::Equivariant(k);
    let urr = grid.d_rr(u.values(), origin);
    let ur = grid.d_r(u.values(), origin);
    let k2 = (k * k) as f64;
    grid.nodes()
        .iter()
        .zip(u.values())
        .zip(urr.iter().zip(&ur))
        .map(|((&r, &v), (&a, &b))| {
            // sin(2u)/(2r²) → u/r² as r → 0
            let s = if r < 1e-150 { v } else { (2.0 * v).sin() * 0.5 };
            a + b / r - k2 * s / (r * r)
        })
        .collect()
}

/// Semidiscrete right side `(u̇, u_rr + u_r/r - k² sin(2u)/(2r²))` without
/// any outer boundary condition.
pub fn pde_rhs(k: u32, pair: &FieldPair) -> Result<FieldPair> {
    check_finite(pair, f64::NAN)?;
    let grid = pair.grid();
    let acc = acceleration(k, &pair.u);
    if acc.iter().any(|v| !v.is_finite()) {
        return Err(nonfinite(f64::NAN, "the right side"));
    }
    Ok(FieldPair { u: pair.udot.clone(), udot: ScalarField::new(grid.clone(), acc)? })
}

fn nearest_multiple_of_pi(x: f64) -> f64 {
    (x / PI).round() * PI
}

/// Outgoing-wave value of `u_t` at the last node.
fn absorbing_ut(u: &ScalarField) -> f64 {
    let grid = u.grid();
    let n = grid.len();
    let r = grid.r_max();
    let ur = grid.d_r(u.values(), Origin::OneSided);
    let w = u.values()[n - 1] - nearest_multiple_of_pi(u.values()[n - 1]);
    -ur[n - 1] - w / (2.0 * r)
}

/// Right side including the outer boundary condition.
fn rhs_with_boundary(cfg: &SolverConfig, pair: &FieldPair) -> Result<FieldPair> {
    let mut d = pde_rhs(cfg.k, pair)?;
    let n = pair.grid().len();
    match cfg.boundary {
        Boundary::DirichletAsymptotic => {
            d.u.values_mut()[n - 1] = 0.0;
            d.udot.values_mut()[n - 1] = 0.0;
        }
        Boundary::Absorbing => {
            let grid = pair.grid();
            let r = grid.r_max();
            let vr = grid.d_r(pair.udot.values(), Origin::OneSided);
            d.u.values_mut()[n - 1] = absorbing_ut(&pair.u);
            d.udot.values_mut()[n - 1] = -vr[n - 1] - pair.udot.values()[n - 1] / (2.0 * r);
        }
    }
    Ok(d)
}

fn combine(base: &FieldPair, c: f64, d: &FieldPair) -> FieldPair {
    let mut out = base.clone();
    out.u.axpy(c, &d.u);
    out.udot.axpy(c, &d.udot);
    out
}

/// One step of size `dt` (negative steps run backwards). Refused when
/// `|dt| > cfl · dr`.
pub fn step(cfg: &SolverConfig, pair: &FieldPair, dt: f64) -> Result<FieldPair> {
    cfg.validate()?;
    let limit = cfg.cfl * pair.grid().min_spacing();
    if !(dt.abs() <= limit * (1.0 + 1e-12)) {
        return Err(LabError::Cfl { dt: dt.abs(), limit });
    }
    match cfg.time_integrator {
        TimeIntegrator::Rk4 => {
            let k1 = rhs_with_boundary(cfg, pair)?;
            let k2 = rhs_with_boundary(cfg, &combine(pair, 0.5 * dt, &k1))?;
            let k3 = rhs_with_boundary(cfg, &combine(pair, 0.5 * dt, &k2))?;
            let k4 = rhs_with_boundary(cfg, &combine(pair, dt, &k3))?;
            let mut out = pair.clone();
            for (kk, c) in [(&k1, 1.0), (&k2, 2.0), (&k3, 2.0), (&k4, 1.0)] {
                out.u.axpy(c * dt / 6.0, &kk.u);
                out.udot.axpy(c * dt / 6.0, &kk.udot);
            }
            Ok(out)
        }
        TimeIntegrator::Leapfrog => leapfrog(cfg, pair, dt),
    }
}

fn leapfrog(cfg: &SolverConfig, pair: &FieldPair, dt: f64) -> Result<FieldPair> {
    check_finite(pair, f64::NAN)?;
    let n = pair.grid().len();
    let kick = |v: &mut ScalarField, u: &ScalarField| {
        let a = acceleration(cfg.k, u);
        let vals = v.values_mut();
        for (vi, ai) in vals.iter_mut().zip(&a).take(n - 1) {
            *vi += 0.5 * dt * ai;
        }
        vals[n - 1] = match cfg.boundary {
            Boundary::DirichletAsymptotic => 0.0,
            Boundary::Absorbing => absorbing_ut(u),
        };
    };
    let mut v = pair.udot.clone();
    kick(&mut v, &pair.u);
    let mut u = pair.u.clone();
    u.axpy(dt, &v);
    kick(&mut v, &u);
    let out = FieldPair { u, udot: v };
    check_finite(&out, f64::NAN)?;
    Ok(out)
}

/// Stability summary for one snapshot interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub steps: usize,
    pub max_abs_udot: f64,
    /// `r u̇ u_r` at the last interior node: radial energy flux per unit
    /// angle.
    pub boundary_flux: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionRecord {
    pub k: u32,
    pub times: Vec<f64>,
    pub snapshots: Vec<FieldPair>,
    pub energy_series: Vec<f64>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Time of the failure when the run stopped early.
    pub failure: Option<(f64, String)>,
    /// `r_max` minus the radius outside which the initial data is at rest.
    pub reflection_time: f64,
    pub dt: f64,
}

impl EvolutionRecord {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    /// `max_t |E(t) - E(t_0)| / |E(t_0)|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy_series[0];
        let scale = if e0.abs() > 0.0 { e0.abs() } else { 1.0 };
        self.energy_series.iter().map(|e| (e - e0).abs() / scale).fold(0.0, f64::max)
    }
}

/// Radius beyond which the pair equals its edge value to `1e-12`.
pub fn support_radius(pair: &FieldPair) -> f64 {
    let u = pair.u.values();
    let v = pair.udot.values();
    let n = u.len();
    let edge = u[n - 1];
    let scale = u.iter().chain(v).fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let nodes = pair.grid().nodes();
    (0..n)
        .rev()
        .find(|&i| (u[i] - edge).abs() > 1e-12 * scale || v[i].abs() > 1e-12 * scale)
        .map_or(0.0, |i| nodes[i])
}

/// Advances `pair0` from `t_span.0` to `t_span.1`. Numerical blow-up does
/// not raise: the record is returned truncated with `failure` set.
pub fn evolve(cfg: &SolverConfig, pair0: &FieldPair, t_span: (f64, f64)) -> Result<EvolutionRecord> {
    cfg.validate()?;
    let (t_start, t_end) = t_span;
    if !(t_end > t_start && t_start.is_finite() && t_end.is_finite()) {
        return Err(LabError::Configuration(format!("invalid time span ({t_start}, {t_end})")));
    }
    let grid = pair0.grid();
    if grid.spec() != cfg.grid {
        return Err(LabError::Configuration("initial data is not on the configured grid".into()));
    }
    check_finite(pair0, t_start)?;
    let dr = grid.min_spacing();
    let per_snapshot = (cfg.snapshot_cadence / (cfg.cfl * dr)).ceil().max(1.0) as usize;
    let dt = cfg.snapshot_cadence / per_snapshot as f64;
    let mut rec = EvolutionRecord {
        k: cfg.k,
        times: vec![t_start],
        snapshots: vec![pair0.clone()],
        energy_series: vec![energy(pair0, cfg.k)],
        diagnostics: Vec::new(),
        failure: None,
        reflection_time: grid.r_max() - support_radius(pair0),
        dt,
    };
    let mut pair = pair0.clone();
    let mut t = t_start;
    while t < t_end && rec.failure.is_none() {
        let remaining = t_end - t;
        let (steps, h) = if remaining >= cfg.snapshot_cadence * (1.0 - 1e-12) {
            (per_snapshot, dt)
        } else {
            let s = (remaining / (cfg.cfl * dr)).ceil().max(1.0) as usize;
            (s, remaining / s as f64)
        };
        let mut max_v = 0.0f64;
        let mut done = 0;
        for _ in 0..steps {
            match step(cfg, &pair, h) {
                Ok(next) => {
                    pair = next;
                    done += 1;
                    max_v = max_v.max(pair.udot.max_abs());
                }
                Err(e) => {
                    rec.failure = Some((t + done as f64 * h, e.to_string()));
                    break;
                }
            }
        }
        let t_here = if rec.failure.is_none() && steps == done && h != dt {
            t_end
        } else {
            t + done as f64 * h
        };
        if done == 0 {
            break;
        }
        let n = grid.len();
        let ur = grid.d_r(pair.u.values(), Origin::OneSided);
        rec.diagnostics.push(StepDiagnostics {
            t: t_here,
            steps: done,
            max_abs_udot: max_v,
            boundary_flux: grid.nodes()[n - 2] * pair.udot.values()[n - 2] * ur[n - 2],
            stable: rec.failure.is_none(),
        });
        rec.times.push(t_here);
        rec.energy_series.push(energy(&pair, cfg.k));
        rec.snapshots.push(pair.clone());
        t = t_here;
    }
    Ok(rec)
}

/// Multi-bubble data `(𝒬, Σ_j b_j ι_j ΛQ_{λ_j} / λ_j)` for a configuration.
pub fn tower_data(cfg: &TowerConfig, grid: &Arc<RadialGrid>) -> FieldPair {
    let k = cfg.k();
    let u = ScalarField::from_fn(grid, |r| multibubble(cfg, r));
    let udot = ScalarField::from_fn(grid, |r| {
        cfg.iota.iter().zip(&cfg.lambda).zip(&cfg.b).map(|((s, l), b)| s * b / l * lambda_q(k, r / l)).sum()
    });
    FieldPair { u, udot }
}

/// Samples the stable-manifold initial data with unstable coordinates
/// `nu0` on `grid`. Refused when fewer than [`MIN_CORE_POINTS`] nodes lie
/// in the innermost core `(0, λ_J]`.
pub fn build_initial_data(
    consts: &TowerConstants,
    shooting: &ShootingConfig,
    nu0: &[f64],
    grid: &Arc<RadialGrid>,
) -> Result<(FieldPair, TowerConfig)> {
    let state = stable_manifold_init(consts, shooting, nu0)?;
    let cfg = TowerConfig::alternating(consts.k, state.lambda.clone())?.with_b(state.b.clone())?;
    let inner = cfg.lambda[cfg.len() - 1];
    let pts = grid.points_in(0.0, inner);
    if pts < MIN_CORE_POINTS {
        return Err(LabError::Configuration(format!(
            "grid resolves the innermost bubble (λ = {inner:e}) with {pts} points, need {MIN_CORE_POINTS}"
        )));
    }
    if grid.r_max() < 4.0 * cfg.lambda[0] {
        return Err(LabError::Configuration(format!(
            "r_max = {} does not contain the outer bubble (λ = {})",
            grid.r_max(),
            cfg.lambda[0]
        )));
    }
    Ok((tower_data(&cfg, grid), cfg))
}
