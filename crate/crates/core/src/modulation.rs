//! Modulation decomposition `u = 𝒬(ι, λ) + g` with the gauge
//! `<𝒵_{;i}, g> = <𝒵_{;i}, ġ> = 0`, refined velocities and tracking along
//! an evolution.

use crate::error::{LabError, Result};
use crate::grid::{FieldPair, ScalarField};
use crate::ops::{norm, NormKind};
use crate::pde::{tower_data, EvolutionRecord};
use crate::profiles::{kappa, lambda_q, OrthogonalityProfile, TowerConfig};
use crate::tower::{nu_transform, NuState, ShootingConfig, TowerConstants, TowerState};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Bound on `max_i |F_i|`.
    pub tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub cfg: TowerConfig,
    pub g: FieldPair,
    /// `λ_i^{-2} <𝒵_{;i}, g>`.
    pub residuals_u: Vec<f64>,
    /// `λ_i^{-1} <𝒵_{;i}, ġ>`.
    pub residuals_udot: Vec<f64>,
    pub bhat: Vec<f64>,
    pub iterations: usize,
    /// `ln λ` after each Newton step.
    pub trace: Vec<Vec<f64>>,
}

impl Decomposition {
    pub fn max_residual(&self) -> f64 {
        self.residuals_u.iter().chain(&self.residuals_udot).fold(0.0, |m, r| m.max(r.abs()))
    }
}

struct Sampled {
    z: Vec<ScalarField>,
    yz: Vec<ScalarField>,
    lq: Vec<ScalarField>,
}

fn sample(pair: &FieldPair, z: &OrthogonalityProfile, k: u32, lambda: &[f64]) -> Sampled {
    let grid = pair.grid();
    Sampled {
        z: lambda.iter().map(|&l| ScalarField::from_fn(grid, |r| z.eval(r / l))).collect(),
        yz: lambda.iter().map(|&l| ScalarField::from_fn(grid, |r| z.scaling_derivative(r / l))).collect(),
        lq: lambda.iter().map(|&l| ScalarField::from_fn(grid, |r| lambda_q(k, r / l))).collect(),
    }
}

fn remainder(pair: &FieldPair, cfg: &TowerConfig) -> FieldPair {
    let base = tower_data(cfg, pair.grid());
    FieldPair { u: pair.u.sub(&base.u), udot: pair.udot.sub(&base.udot) }
}

fn gauge(s: &Sampled, lambda: &[f64], g: &ScalarField) -> Vec<f64> {
    s.z.iter().zip(lambda).map(|(z, l)| z.inner(g) / (l * l)).collect()
}

fn ordered(lambda: &[f64]) -> bool {
    lambda.iter().all(|l| *l > 0.0 && l.is_finite()) && lambda.windows(2).all(|w| w[1] < w[0])
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton iteration in `ln λ` on `F_i = λ_i^{-2} <𝒵_{;i}, u - 𝒬(ι, λ)>`,
/// followed by the linear solve for `b`.
pub fn decompose(
    pair: &FieldPair,
    k: u32,
    iota: &[f64],
    lambda_guess: &[f64],
    opts: &NewtonOptions,
) -> Result<Decomposition> {
    let jn = iota.len();
    if lambda_guess.len() != jn || jn == 0 {
        return Err(LabError::Configuration(format!(
            "{} signs but {} scales in the guess",
            jn,
            lambda_guess.len()
        )));
    }
    if !ordered(lambda_guess) {
        return Err(LabError::Configuration(format!("guess is not ordered: {lambda_guess:?}")));
    }
    let z = OrthogonalityProfile::cutoff(k)?;
    let mut lambda = lambda_guess.to_vec();
    let mut trace = Vec::new();
    let with = |lambda: &[f64]| TowerConfig::new(k, iota.to_vec(), lambda.to_vec(), vec![0.0; jn]);
    let eval = |lambda: &[f64]| -> Result<(Sampled, FieldPair, Vec<f64>)> {
        let cfg = with(lambda)?;
        let s = sample(pair, &z, k, lambda);
        let rem = remainder(pair, &cfg);
        let f = gauge(&s, lambda, &rem.u);
        Ok((s, rem, f))
    };
    let (mut s, mut rem, mut f) = eval(&lambda)?;
    let mut iterations = 0;
    while max_abs(&f) > opts.tol {
        if iterations == opts.max_iter {
            return Err(LabError::Basin {
                iterations,
                detail: format!("|F| = {:e} after the iteration budget; trace {trace:?}", max_abs(&f)),
            });
        }
        iterations += 1;
        let jac = DMatrix::from_fn(jn, jn, |i, j| {
            let li2 = lambda[i] * lambda[i];
            let mut v = iota[j] * s.z[i].inner(&s.lq[j]) / li2;
            if i == j {
                let mut w = s.z[i].scale(2.0);
                w.axpy(1.0, &s.yz[i]);
                v -= w.inner(&rem.u) / li2;
            }
            v
        });
        let Some(delta) = jac.lu().solve(&DVector::from_vec(f.iter().map(|x| -x).collect())) else {
            return Err(LabError::Basin { iterations, detail: "singular Jacobian".into() });
        };
        let f_norm = max_abs(&f);
        let mut step = 1.0;
        let accepted = loop {
            let cand: Vec<f64> = lambda.iter().zip(delta.iter()).map(|(l, d)| l * (step * d).exp()).collect();
            if ordered(&cand) {
                let next = eval(&cand)?;
                if max_abs(&next.2) < f_norm || step < 1e-3 {
                    break Some((cand, next));
                }
            }
            step *= 0.5;
            if step < 1e-6 {
                break None;
            }
        };
        let Some((cand, next)) = accepted else {
            return Err(LabError::Basin {
                iterations,
                detail: format!("step halving failed to keep the scales ordered at λ = {lambda:?}"),
            });
        };
        lambda = cand;
        (s, rem, f) = next;
        trace.push(lambda.iter().map(|l| l.ln()).collect());
    }
    // b from the full Gram system
    let m = DMatrix::from_fn(jn, jn, |i, j| iota[j] * s.z[i].inner(&s.lq[j]) / (lambda[i] * lambda[j]));
    let rhs = DVector::from_fn(jn, |i, _| s.z[i].inner(&pair.udot) / lambda[i]);
    let b = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| LabError::Basin { iterations, detail: "singular velocity system".into() })?;
    let cfg = with(&lambda)?.with_b(b.iter().copied().collect())?;
    let g = remainder(pair, &cfg);
    let residuals_u = gauge(&s, &lambda, &g.u);
    let residuals_udot = s.z.iter().zip(&lambda).map(|(z, l)| z.inner(&g.udot) / l).collect();
    let bhat = refined_bhat(pair, &cfg);
    Ok(Decomposition { cfg, g, residuals_u, residuals_udot, bhat, iterations, trace })
}

/// `b̂_j = ι_j <ΛQ_{;j}, u̇> / (κ λ_j)`.
pub fn refined_bhat(pair: &FieldPair, cfg: &TowerConfig) -> Vec<f64> {
    let k = cfg.k();
    let kap = kappa(k);
    let grid = pair.grid();
    cfg.iota
        .iter()
        .zip(&cfg.lambda)
        .map(|(s, &l)| {
            let lq = ScalarField::from_fn(grid, |r| lambda_q(k, r / l));
            s * lq.inner(&pair.udot) / (kap * l)
        })
        .collect()
}

/// Which of the bootstrap bounds hold at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFlags {
    /// `‖g‖_{Ḣ¹} ≤ |t|^{-1}`.
    pub g_hdot1: bool,
    /// `‖g‖_{Ḣ²} ≤ |t|^{-1-ε_0}`.
    pub g_hdot2: bool,
    /// `|λ_1 - 1| ≤ |t|^{-ε_1}`.
    pub lambda1: bool,
    /// `|b_1| ≤ |t|^{-1}`.
    pub b1: bool,
    /// `|ν_j| ≤ |t|^{-ε_j}` for each `j ≥ 2`.
    pub nu: Vec<bool>,
    /// `|ν̇_j| ≤ 1` for each `j ≥ 2`.
    pub nudot: Vec<bool>,
}

impl WindowFlags {
    pub fn all(&self) -> bool {
        self.g_hdot1 && self.g_hdot2 && self.lambda1 && self.b1 && self.nu.iter().chain(&self.nudot).all(|x| *x)
    }
}

pub fn window_flags(k: u32, t: f64, eps: &[f64], d: &Decomposition, nu: &NuState) -> Result<WindowFlags> {
    let at = -t;
    let h1 = norm(k, &NormKind::Hdot1, &d.g)?;
    let h2 = norm(k, &NormKind::Hdot2, &d.g)?;
    Ok(WindowFlags {
        g_hdot1: h1 <= 1.0 / at,
        g_hdot2: h2 <= at.powf(-1.0 - eps[0]),
        lambda1: (nu.lambda1 - 1.0).abs() <= at.powf(-eps[1]),
        b1: nu.b1.abs() <= 1.0 / at,
        nu: nu.nu.iter().enumerate().map(|(i, v)| v.abs() <= at.powf(-eps[i + 2])).collect(),
        nudot: nu.nudot.iter().map(|v| v.abs() <= 1.0).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackFrame {
    pub t: f64,
    pub decomposition: Decomposition,
    /// Present when a construction context was supplied and `t < 0`.
    pub nu: Option<NuState>,
    pub window: Option<WindowFlags>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSeries {
    pub frames: Vec<TrackFrame>,
    /// Time and message of the first snapshot that could not be decomposed.
    pub failure: Option<(f64, String)>,
}

/// Constants and windows used to express tracked parameters in `ν`
/// coordinates.
#[derive(Debug, Clone, Copy)]
pub struct TrackContext<'a> {
    pub consts: &'a TowerConstants,
    pub shooting: &'a ShootingConfig,
}

/// Decomposes every snapshot, warm-starting from the previous frame.
pub fn track(
    record: &EvolutionRecord,
    iota: &[f64],
    first_guess: &[f64],
    opts: &NewtonOptions,
    ctx: Option<TrackContext<'_>>,
) -> Result<TrackSeries> {
    let k = record.k;
    let mut frames: Vec<TrackFrame> = Vec::new();
    let mut guess = first_guess.to_vec();
    for (t, snap) in record.times.iter().zip(&record.snapshots) {
        let d = match decompose(snap, k, iota, &guess, opts) {
            Ok(d) => d,
            Err(e) => return Ok(TrackSeries { frames, failure: Some((*t, e.to_string())) }),
        };
        guess = d.cfg.lambda.clone();
        let (nu, window) = match ctx {
            Some(c) if *t < 0.0 => {
                let state = TowerState { t: *t, lambda: d.cfg.lambda.clone(), b: d.cfg.b.clone() };
                let mut nu = nu_transform(c.consts, &state)?;
                nu.nuhatdot = Some(
                    (2..=c.consts.j).map(|j| d.bhat[j - 1] / c.consts.b_ex(j, *t) - 1.0).collect(),
                );
                let w = window_flags(k, *t, &c.shooting.eps, &d, &nu)?;
                (Some(nu), Some(w))
            }
            _ => (None, None),
        };
        frames.push(TrackFrame { t: *t, decomposition: d, nu, window });
    }
    Ok(TrackSeries { frames, failure: None })
}
