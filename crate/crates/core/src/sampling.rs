//! Seeded random test fields and the orthogonality projector.
//!
//! Samples are sums of Gaussians in `s = ln r`. Each trial draws from its
//! own ChaCha stream, so results do not depend on evaluation order.

use crate::error::{LabError, Result};
use crate::grid::{FieldPair, RadialGrid, ScalarField};
use crate::ops;
use crate::profiles::{lambda_q, OrthogonalityProfile, TowerConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    /// Gaussians per component.
    pub bumps: usize,
    /// Range of centres in `ln r`.
    pub s_lo: f64,
    pub s_hi: f64,
    /// Range of widths in `ln r`.
    pub w_lo: f64,
    pub w_hi: f64,
}

impl SampleSpec {
    /// Centres spread from below the innermost to beyond the outermost
    /// bubble.
    pub fn around(cfg: &TowerConfig) -> Self {
        let lmax = cfg.lambda[0].ln();
        let lmin = cfg.lambda[cfg.len() - 1].ln();
        Self { bumps: 4, s_lo: lmin - 2.5, s_hi: lmax + 2.5, w_lo: 0.3, w_hi: 1.2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bumps == 0 || !(self.s_lo < self.s_hi) || !(0.0 < self.w_lo && self.w_lo <= self.w_hi) {
            return Err(LabError::Parameter(format!("invalid sample spec {self:?}")));
        }
        Ok(())
    }
}

/// Generator for trial `trial` under `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

pub fn random_field<R: Rng>(grid: &Arc<RadialGrid>, spec: &SampleSpec, rng: &mut R) -> ScalarField {
    let bumps: Vec<(f64, f64, f64)> = (0..spec.bumps)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let c = rng.gen_range(spec.s_lo..=spec.s_hi);
            let w = rng.gen_range(spec.w_lo..=spec.w_hi);
            (a, c, w)
        })
        .collect();
    ScalarField::from_fn(grid, |r| {
        let s = r.ln();
        bumps.iter().map(|(a, c, w)| a * (-0.5 * ((s - c) / w).powi(2)).exp()).sum()
    })
}

pub fn random_pair<R: Rng>(grid: &Arc<RadialGrid>, spec: &SampleSpec, rng: &mut R) -> FieldPair {
    let u = random_field(grid, spec, rng);
    let udot = random_field(grid, spec, rng);
    FieldPair { u, udot }
}

/// Rescale to unit `Ḣ² × Ḣ¹` norm.
pub fn normalize_hdot2(k: u32, pair: &FieldPair) -> Result<FieldPair> {
    let n = (ops::hdot2_sq(k, &pair.u) + ops::hdot1_sq(k, &pair.udot)).sqrt();
    if !(n > 0.0) {
        return Err(LabError::DegenerateSample(n));
    }
    Ok(FieldPair { u: pair.u.scale(1.0 / n), udot: pair.udot.scale(1.0 / n) })
}

/// Removes `ΛQ_{λ_j}` components so that `<Z_{λ_i}, g> = 0` for every `i`.
#[derive(Debug, Clone)]
pub struct Orthogonalizer {
    z: Vec<ScalarField>,
    modes: Vec<ScalarField>,
    gram: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Orthogonalizer {
    pub fn new(cfg: &TowerConfig, grid: &Arc<RadialGrid>, profile: &OrthogonalityProfile) -> Result<Self> {
        let k = cfg.k();
        let z: Vec<ScalarField> =
            cfg.lambda.iter().map(|&l| ScalarField::from_fn(grid, |r| profile.eval(r / l))).collect();
        let modes: Vec<ScalarField> =
            cfg.lambda.iter().map(|&l| ScalarField::from_fn(grid, |r| lambda_q(k, r / l))).collect();
        let j = cfg.len();
        let g = DMatrix::from_fn(j, j, |a, b| z[a].inner(&modes[b]));
        let lu = g.lu();
        if lu.determinant().abs() < 1e-300 {
            return Err(LabError::Configuration("singular orthogonality Gram matrix".into()));
        }
        Ok(Self { z, modes, gram: lu })
    }

    /// `<Z_{λ_i}, g>` for each `i`.
    pub fn residuals(&self, g: &ScalarField) -> Vec<f64> {
        self.z.iter().map(|z| z.inner(g)).collect()
    }

    pub fn project(&self, g: &ScalarField) -> ScalarField {
        let rhs = DVector::from_vec(self.residuals(g));
        let c = self.gram.solve(&rhs).expect("non-singular Gram matrix");
        let mut out = g.clone();
        for (m, ci) in self.modes.iter().zip(c.iter()) {
            out.axpy(-ci, m);
        }
        out
    }

    pub fn project_pair(&self, pair: &FieldPair) -> FieldPair {
        FieldPair { u: self.project(&pair.u), udot: self.project(&pair.udot) }
    }
}
