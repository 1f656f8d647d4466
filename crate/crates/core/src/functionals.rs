//! Energy, the second-order energy `E₂`, the Morawetz forms `M₀` and `M`,
//! the energy-Morawetz functional `I`, the nonlinear remainder `NL_𝒬` and
//! sampled coercivity and monotonicity probes.

use crate::error::{LabError, Result};
use crate::grid::{FieldPair, Origin, RadialGrid, ScalarField};
use crate::ops::{self, OperatorKind, PsiParams, TowerOperator};
use crate::profiles::{self, OrthogonalityProfile, TowerConfig};
use crate::sampling::{self, Orthogonalizer, SampleSpec};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// `2π ∫ ½(u̇² + u_r² + k² sin²u / r²) r dr`.
pub fn energy(pair: &FieldPair, k: u32) -> f64 {
    let kf = k as f64;
    let ur = pair.u.d_r(Origin::Equivariant(k));
    let dens: Vec<f64> = (0..ur.values().len())
        .map(|i| {
            let r = pair.u.grid().nodes()[i];
            let u = pair.u.values()[i];
            let v = pair.udot.values()[i];
            let s = u.sin();
            0.5 * (v * v + ur.values()[i].powi(2) + kf * kf * s * s / (r * r))
        })
        .collect();
    2.0 * PI * pair.u.grid().integrate(&dens)
}

/// `<H_𝒬 g, H_𝒬 g> + <ġ, H_𝒬 ġ>`.
pub fn quadratic_e2(cfg: &TowerConfig, g: &FieldPair) -> f64 {
    let h = TowerOperator::new(cfg, g.grid());
    e2_with(&h, g)
}

fn e2_with(h: &TowerOperator, g: &FieldPair) -> f64 {
    let hg = h.apply(&g.u);
    hg.inner(&hg) + g.udot.inner(&h.apply(&g.udot))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorawetzParams {
    /// Weight of the correction term in `M₀`.
    pub delta: f64,
    /// Geometric weight across bubbles.
    pub delta0: f64,
    pub psi: PsiParams,
}

impl Default for MorawetzParams {
    fn default() -> Self {
        Self { delta: 0.1, delta0: 0.1, psi: PsiParams::default() }
    }
}

impl MorawetzParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(LabError::Parameter(format!("delta = {} outside (0, 0.5]", self.delta)));
        }
        if !(self.delta0 > 0.0 && self.delta0 < 1.0) {
            return Err(LabError::Parameter(format!("delta0 = {} outside (0, 1)", self.delta0)));
        }
        self.psi.validate()
    }
}

/// `M₀[λ; g, ġ] = <A_λ ġ, Λ_{ψ,λ}(A_λ g)> - δ<A_λ ġ, λ(r+λ)^{-2} A_λ g>`.
pub fn morawetz_m0(k: u32, lambda: f64, params: &MorawetzParams, g: &ScalarField, gdot: &ScalarField) -> Result<f64> {
    params.validate()?;
    let ag = ops::apply_operator(k, &OperatorKind::AScaled(lambda), g)?;
    let agd = ops::apply_operator(k, &OperatorKind::AScaled(lambda), gdot)?;
    Ok(m0_core(k, lambda, params, &ag, &agd))
}

fn m0_core(k: u32, lambda: f64, params: &MorawetzParams, ag: &ScalarField, agd: &ScalarField) -> f64 {
    let grid = ag.grid();
    let lp = ops::lambda_psi(grid, lambda, &params.psi, ag.values(), Origin::Equivariant(k + 1));
    let r = grid.nodes();
    let dens: Vec<f64> = (0..r.len())
        .map(|i| {
            let corr = params.delta * lambda / (r[i] + lambda).powi(2) * ag.values()[i];
            agd.values()[i] * (lp[i] - corr)
        })
        .collect();
    grid.integrate(&dens)
}

/// `Σ_j δ₀^{j-1} M₀[λ_j; g, ġ]`.
pub fn morawetz_m(cfg: &TowerConfig, params: &MorawetzParams, g: &ScalarField, gdot: &ScalarField) -> Result<f64> {
    params.validate()?;
    let mut acc = 0.0;
    let mut w = 1.0;
    for &l in &cfg.lambda {
        acc += w * morawetz_m0(cfg.k(), l, params, g, gdot)?;
        w *= params.delta0;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityRecord {
    pub lhs: f64,
    pub mor_sq: f64,
    pub ratio: f64,
}

/// Cached operators for repeated monotonicity and coercivity evaluations
/// around one configuration.
#[derive(Debug, Clone)]
pub struct Probe {
    pub cfg: TowerConfig,
    pub grid: Arc<RadialGrid>,
    pub h: TowerOperator,
    pub orth: Orthogonalizer,
}

impl Probe {
    pub fn new(cfg: &TowerConfig, grid: &Arc<RadialGrid>) -> Result<Self> {
        cfg.validate()?;
        let z = OrthogonalityProfile::cutoff(cfg.k())?;
        Ok(Self {
            cfg: cfg.clone(),
            grid: grid.clone(),
            h: TowerOperator::new(cfg, grid),
            orth: Orthogonalizer::new(cfg, grid, &z)?,
        })
    }

    /// `lhs = -{M[g, -H_𝒬 g] + M[ġ, ġ]}` after projection onto the
    /// orthogonality conditions, and `mor_sq = Σ δ₀^{j-1}||g||²_{Mor(λ_j)}`.
    pub fn monotonicity_defect(&self, params: &MorawetzParams, pair: &FieldPair) -> Result<MonotonicityRecord> {
        params.validate()?;
        let k = self.cfg.k();
        let p = self.orth.project_pair(pair);
        let mhg = self.h.apply(&p.u).scale(-1.0);
        let mut lhs = 0.0;
        let mut mor = 0.0;
        let mut w = 1.0;
        for &l in &self.cfg.lambda {
            let a = |f: &ScalarField| ops::apply_operator(k, &OperatorKind::AScaled(l), f);
            let ag = a(&p.u)?;
            let agd = a(&p.udot)?;
            let amhg = a(&mhg)?;
            lhs -= w * (m0_core(k, l, params, &ag, &amhg) + m0_core(k, l, params, &agd, &agd));
            mor += w * ops::mor_sq(k, l, &p);
            w *= params.delta0;
        }
        if mor < 1e-28 {
            return Err(LabError::DegenerateSample(mor));
        }
        Ok(MonotonicityRecord { lhs, mor_sq: mor, ratio: lhs / mor })
    }

    pub fn energy_morawetz(&self, params: &EnergyMorawetzParams, pair: &FieldPair) -> Result<f64> {
        let e2 = e2_with(&self.h, pair);
        if params.delta_tilde == 0.0 {
            return Ok(e2);
        }
        Ok(e2 + params.delta_tilde * morawetz_m(&self.cfg, &params.mor, &pair.u, &pair.udot)?)
    }

    /// `quadratic form / norm²` of the projected sample.
    pub fn coercivity_ratio(&self, form: CoercivityForm, g: &ScalarField) -> Result<f64> {
        let k = self.cfg.k();
        let p = self.orth.project(g);
        let (num, den) = match form {
            CoercivityForm::Hdot1 => (self.h.apply(&p).inner(&p), ops::hdot1_sq(k, &p)),
            CoercivityForm::Hdot2 => {
                let hp = self.h.apply(&p);
                (hp.inner(&hp), ops::hdot2_sq(k, &p))
            }
            CoercivityForm::AWeightedInner | CoercivityForm::AWeightedOuter => {
                let l = self.cfg.lambda[0];
                let ag = ops::apply_operator(k, &OperatorKind::AScaled(l), &p)?;
                let d = p.d_r(Origin::Equivariant(k));
                let weight = |r: f64| {
                    let y = r / l;
                    match form {
                        CoercivityForm::AWeightedInner => 1.0 / ((1.0 + y) * y * y),
                        _ => 1.0 / ((1.0 + y) * (1.0 + y)),
                    }
                };
                let num = ag.zip_with(&ag, |r, a, _| a * a * weight(r)).integral();
                let den = d.zip_with(&p, |r, a, b| (a * a + b * b / (r * r)) * weight(r)).integral();
                (num, den)
            }
        };
        if !(den > 1e-28) {
            return Err(LabError::DegenerateSample(den));
        }
        Ok(num / den)
    }
}

/// Functional value of `M` on orthogonalized data after projection; see
/// [`Probe::monotonicity_defect`].
pub fn monotonicity_defect(
    cfg: &TowerConfig,
    params: &MorawetzParams,
    pair: &FieldPair,
) -> Result<MonotonicityRecord> {
    Probe::new(cfg, pair.grid())?.monotonicity_defect(params, pair)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub trials: usize,
    pub seed: u64,
    /// Extremes of `I / ||g||²_{Ḣ²}` over the validation sample.
    pub min_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyMorawetzParams {
    pub delta_tilde: f64,
    pub mor: MorawetzParams,
    #[serde(default)]
    pub validation: Option<Validation>,
}

impl Default for EnergyMorawetzParams {
    fn default() -> Self {
        Self { delta_tilde: 0.05, mor: MorawetzParams::default(), validation: None }
    }
}

impl EnergyMorawetzParams {
    /// Parameters whose functional was positive on `trials` orthogonalized
    /// samples around `probe`.
    pub fn validated(
        probe: &Probe,
        delta_tilde: f64,
        mor: MorawetzParams,
        trials: usize,
        seed: u64,
    ) -> Result<Self> {
        mor.validate()?;
        if !(delta_tilde >= 0.0) {
            return Err(LabError::Parameter(format!("delta_tilde = {delta_tilde} must be non-negative")));
        }
        let mut out = Self { delta_tilde, mor, validation: None };
        let spec = SampleSpec::around(&probe.cfg);
        let k = probe.cfg.k();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for t in 0..trials {
            let pair = sampling::random_pair(&probe.grid, &spec, &mut sampling::trial_rng(seed, t as u64));
            let p = sampling::normalize_hdot2(k, &probe.orth.project_pair(&pair))?;
            let ratio = probe.energy_morawetz(&out, &p)?;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        if !(lo > 0.0) {
            return Err(LabError::Parameter(format!(
                "energy-Morawetz functional not positive for delta_tilde = {delta_tilde}: min ratio {lo:e}"
            )));
        }
        out.validation = Some(Validation { trials, seed, min_ratio: lo, max_ratio: hi });
        Ok(out)
    }
}

/// `I = E₂ + δ̃ M[λ⃗; g, ġ]`.
pub fn energy_morawetz_i(cfg: &TowerConfig, params: &EnergyMorawetzParams, pair: &FieldPair) -> Result<f64> {
    let h = TowerOperator::new(cfg, pair.grid());
    let e2 = e2_with(&h, pair);
    if params.delta_tilde == 0.0 {
        return Ok(e2);
    }
    Ok(e2 + params.delta_tilde * morawetz_m(cfg, &params.mor, &pair.u, &pair.udot)?)
}

/// `sin x - x`, by series for small `|x|`.
fn sin_minus_id(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let x2 = x * x;
        x * x2 * (-1.0 / 6.0 + x2 * (1.0 / 120.0 + x2 * (-1.0 / 5040.0 + x2 / 362_880.0)))
    } else {
        x.sin() - x
    }
}

/// `NL_𝒬(g) = (k²/2r²)((cos 2g - 1) sin 2𝒬 + (sin 2g - 2g) cos 2𝒬)`.
pub fn nonlinear_nl(cfg: &TowerConfig, g: &ScalarField) -> ScalarField {
    let kf = cfg.k() as f64;
    g.map(|r, v| {
        let (s, c) = profiles::multibubble_sin_cos(cfg, r);
        let sin2q = 2.0 * s * c;
        let cos2q = c * c - s * s;
        let sg = v.sin();
        kf * kf / (2.0 * r * r) * (-2.0 * sg * sg * sin2q + sin_minus_id(2.0 * v) * cos2q)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoercivityForm {
    /// `<H_𝒬 g, g> / ||g||²_{Ḣ¹}`.
    Hdot1,
    /// `<H_𝒬 g, H_𝒬 g> / ||g||²_{Ḣ²}`.
    Hdot2,
    /// `∫|A g|²/((1+y)y²)` against the same weight on `|g|_{-1}²`.
    AWeightedInner,
    /// `∫|A g|²/(1+y)²` against the same weight on `|g|_{-1}²`.
    AWeightedOuter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoercivityRecord {
    pub min_ratio: f64,
    pub argmin: usize,
    pub trials: usize,
}

/// Smallest ratio of the chosen form over `trials` orthogonalized samples.
pub fn coercivity_sample(
    cfg: &TowerConfig,
    grid: &Arc<RadialGrid>,
    form: CoercivityForm,
    trials: usize,
    seed: u64,
) -> Result<CoercivityRecord> {
    let probe = Probe::new(cfg, grid)?;
    let spec = SampleSpec::around(cfg);
    let mut best = (f64::INFINITY, 0usize);
    for t in 0..trials {
        let g = sampling::random_field(grid, &spec, &mut sampling::trial_rng(seed, t as u64));
        let r = probe.coercivity_ratio(form, &g)?;
        if r < best.0 {
            best = (r, t);
        }
    }
    Ok(CoercivityRecord { min_ratio: best.0, argmin: best.1, trials })
}
