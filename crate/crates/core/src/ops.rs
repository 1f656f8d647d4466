//! Linearized operators around bubbles and multi-bubbles, the truncated
//! virial operator and the norms used throughout the laboratory.
//!
//! Fields handed to `H`, `A` and `Λ_s` are assumed to vanish like `r^k` at
//! the origin. `A g` gains one power of `r`, so `A*`, `H̃` and `Λ_ψ`
//! extend their input like `r^{k+1}`.

use crate::error::{LabError, Result};
use crate::grid::{FieldPair, Origin, RadialGrid, ScalarField};
use crate::profiles::{self, TowerConfig};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Weight `ψ(y) = y/<y> - δ' y/<y>^2` of the truncated virial operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiParams {
    pub delta_prime: f64,
}

impl Default for PsiParams {
    fn default() -> Self {
        Self { delta_prime: 0.1 }
    }
}

impl PsiParams {
    pub fn new(delta_prime: f64) -> Result<Self> {
        let p = Self { delta_prime };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.delta_prime;
        if !(d > 0.0 && d <= 0.2) {
            return Err(LabError::Parameter(format!("psi parameter delta' = {d} outside (0, 0.2]")));
        }
        for i in 0..=400 {
            let y = (-10.0 + 0.05 * i as f64).exp();
            let v = self.psi(y);
            if !(0.0..=1.0).contains(&v) {
                return Err(LabError::Parameter(format!("psi({y:e}) = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn psi(&self, y: f64) -> f64 {
        let b2 = 1.0 + y * y;
        y / b2.sqrt() - self.delta_prime * y / b2
    }

    pub fn psi_prime(&self, y: f64) -> f64 {
        let b2 = 1.0 + y * y;
        1.0 / (b2 * b2.sqrt()) - self.delta_prime * (1.0 - y * y) / (b2 * b2)
    }

    /// `(min, max)` of `ψ(y) (1+y)/y` over the given sample points.
    pub fn comparability_constants(&self, ys: &[f64]) -> (f64, f64) {
        ys.iter()
            .map(|&y| self.psi(y) * (1.0 + y) / y)
            .fold((f64::INFINITY, 0.0), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    /// `H_U = -∂_rr - r^{-1}∂_r + k^2 cos(2U)/r^2` for a sampled background.
    HOfU(ScalarField),
    /// `H_λ = H_{Q_λ}`.
    HScaled(f64),
    /// `A_λ = -∂_r + k cos Q_λ / r`.
    AScaled(f64),
    /// `A*_λ = ∂_r + (1 + k cos Q_λ) / r`.
    AstarScaled(f64),
    /// `H̃_λ = A_λ A*_λ = -∂_rr - r^{-1}∂_r + Ṽ(r/λ)/r^2`.
    HtildeScaled(f64),
    /// `Λ_{ψ,λ} g = ψ_λ ∂_r g + ½(∂_r ψ_λ + ψ_λ / r) g`.
    LambdaPsiScaled(f64, PsiParams),
    /// `Λ_s = r∂_r + 1 - s`.
    LambdaS(f64),
}

fn check_scale(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(LabError::Parameter(format!("scale must be positive, got {lambda}")))
    }
}

/// Potential `Ṽ = k^2 + 1 + 2k cos Q`.
pub fn htilde_potential(k: u32, y: f64) -> f64 {
    let kf = k as f64;
    kf * kf + 1.0 + 2.0 * kf * profiles::bubble_sin_cos(k, y).1
}

/// `-y ∂_y Ṽ = 2k sin Q · ΛQ ≥ 0`.
pub fn htilde_potential_virial(k: u32, y: f64) -> f64 {
    let kf = k as f64;
    let s = profiles::bubble_sin_cos(k, y).0;
    2.0 * kf * kf * s * s
}

pub fn apply_operator(k: u32, op: &OperatorKind, g: &ScalarField) -> Result<ScalarField> {
    profiles::EquivariantIndex::new(k)?;
    let grid = g.grid().clone();
    let r = grid.nodes();
    let kf = k as f64;
    let out = match op {
        OperatorKind::HOfU(u) => {
            if !u.same_grid(g) {
                return Err(LabError::Configuration("background lives on another grid".into()));
            }
            let pot: Vec<f64> = u.values().iter().zip(r).map(|(v, ri)| kf * kf * (2.0 * v).cos() / (ri * ri)).collect();
            schrodinger(&grid, &pot, g.values(), Origin::Equivariant(k))
        }
        OperatorKind::HScaled(l) => {
            check_scale(*l)?;
            let pot = bubble_h_potential(k, *l, r);
            schrodinger(&grid, &pot, g.values(), Origin::Equivariant(k))
        }
        OperatorKind::AScaled(l) => {
            check_scale(*l)?;
            let d = grid.d_r(g.values(), Origin::Equivariant(k));
            (0..r.len())
                .map(|i| -d[i] + kf * profiles::bubble_sin_cos(k, r[i] / l).1 / r[i] * g.values()[i])
                .collect()
        }
        OperatorKind::AstarScaled(l) => {
            check_scale(*l)?;
            let d = grid.d_r(g.values(), Origin::Equivariant(k + 1));
            (0..r.len())
                .map(|i| d[i] + (1.0 + kf * profiles::bubble_sin_cos(k, r[i] / l).1) / r[i] * g.values()[i])
                .collect()
        }
        OperatorKind::HtildeScaled(l) => {
            check_scale(*l)?;
            let pot: Vec<f64> = r.iter().map(|ri| htilde_potential(k, ri / l) / (ri * ri)).collect();
            schrodinger(&grid, &pot, g.values(), Origin::Equivariant(k + 1))
        }
        OperatorKind::LambdaPsiScaled(l, psi) => {
            check_scale(*l)?;
            psi.validate()?;
            lambda_psi(&grid, *l, psi, g.values(), Origin::Equivariant(k + 1))
        }
        OperatorKind::LambdaS(s) => {
            let d = grid.d_r(g.values(), Origin::Equivariant(k));
            (0..r.len()).map(|i| r[i] * d[i] + (1.0 - s) * g.values()[i]).collect()
        }
    };
    Ok(ScalarField::from_raw(grid, out))
}

fn bubble_h_potential(k: u32, lambda: f64, r: &[f64]) -> Vec<f64> {
    let kf = k as f64;
    r.iter()
        .map(|ri| {
            let (s, c) = profiles::bubble_sin_cos(k, ri / lambda);
            kf * kf * (c * c - s * s) / (ri * ri)
        })
        .collect()
}

fn schrodinger(grid: &RadialGrid, pot: &[f64], g: &[f64], origin: Origin) -> Vec<f64> {
    let d = grid.d_r(g, origin);
    let dd = grid.d_rr(g, origin);
    let r = grid.nodes();
    (0..g.len()).map(|i| -dd[i] - d[i] / r[i] + pot[i] * g[i]).collect()
}

pub(crate) fn lambda_psi(grid: &RadialGrid, lambda: f64, psi: &PsiParams, g: &[f64], origin: Origin) -> Vec<f64> {
    let d = grid.d_r(g, origin);
    let r = grid.nodes();
    (0..g.len())
        .map(|i| {
            let y = r[i] / lambda;
            let p = psi.psi(y);
            p * d[i] + 0.5 * (psi.psi_prime(y) / lambda + p / r[i]) * g[i]
        })
        .collect()
}

/// `H_𝒬` around a multi-bubble with its potential cached.
#[derive(Debug, Clone)]
pub struct TowerOperator {
    k: u32,
    grid: Arc<RadialGrid>,
    potential: Vec<f64>,
}

impl TowerOperator {
    pub fn new(cfg: &TowerConfig, grid: &Arc<RadialGrid>) -> Self {
        let kf = cfg.k() as f64;
        let potential = grid
            .nodes()
            .iter()
            .map(|&r| {
                let (s, c) = profiles::multibubble_sin_cos(cfg, r);
                kf * kf * (c * c - s * s) / (r * r)
            })
            .collect();
        Self { k: cfg.k(), grid: grid.clone(), potential }
    }

    pub fn apply(&self, g: &ScalarField) -> ScalarField {
        assert!(**g.grid() == *self.grid, "field lives on another grid");
        let v = schrodinger(&self.grid, &self.potential, g.values(), Origin::Equivariant(self.k));
        ScalarField::from_raw(self.grid.clone(), v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    /// `(||g||²_{Ḣ¹_k} + ||ġ||²_{L²})^{1/2}`.
    Hdot1,
    /// `(||g||²_{Ḣ²_k} + ||ġ||²_{Ḣ¹_k})^{1/2}`.
    Hdot2,
    /// `(||g||² + ||ġ||²)^{1/2}`.
    L2,
    /// `(Σ_j δ₀^{j-1} ||·||²_{Mor(λ_j)})^{1/2}`.
    Mor { lambdas: Vec<f64>, delta0: f64 },
    /// `|| |g|_{-ℓ} ||_{L²}` of the first component.
    WeightedMinus(u32),
}

pub fn norm(k: u32, kind: &NormKind, pair: &FieldPair) -> Result<f64> {
    let (g, gd) = (&pair.u, &pair.udot);
    let v = match kind {
        NormKind::Hdot1 => (hdot1_sq(k, g) + gd.inner(gd)).sqrt(),
        NormKind::Hdot2 => (hdot2_sq(k, g) + hdot1_sq(k, gd)).sqrt(),
        NormKind::L2 => (g.inner(g) + gd.inner(gd)).sqrt(),
        NormKind::Mor { lambdas, delta0 } => {
            if !(*delta0 > 0.0 && *delta0 < 1.0) {
                return Err(LabError::Parameter(format!("delta0 = {delta0} outside (0, 1)")));
            }
            let mut acc = 0.0;
            let mut w = 1.0;
            for &l in lambdas {
                check_scale(l)?;
                acc += w * mor_sq(k, l, pair);
                w *= delta0;
            }
            acc.sqrt()
        }
        NormKind::WeightedMinus(l) => weighted_minus(k, *l, g)?.norm_l2(),
    };
    Ok(v)
}

/// `∫ |∂_r g|² + |g/r|²`.
pub fn hdot1_sq(k: u32, g: &ScalarField) -> f64 {
    weighted_minus_sq(k, 1, g).integral()
}

/// `∫ |∂_rr g|² + |r^{-1}∂_r g|² + |r^{-2} g|²`.
pub fn hdot2_sq(k: u32, g: &ScalarField) -> f64 {
    weighted_minus_sq(k, 2, g).integral()
}

/// Pointwise `|g|_{-ℓ}` for `ℓ ≤ 2`.
pub fn weighted_minus(k: u32, ell: u32, g: &ScalarField) -> Result<ScalarField> {
    if ell > 2 {
        return Err(LabError::Capability(format!(
            "|g|_{{-{ell}}} needs derivatives of order {ell}; only ℓ ≤ 2 is available"
        )));
    }
    Ok(weighted_minus_sq(k, ell, g).map(|_, v| v.sqrt()))
}

fn weighted_minus_sq(k: u32, ell: u32, g: &ScalarField) -> ScalarField {
    let origin = Origin::Equivariant(k);
    match ell {
        0 => g.map(|_, v| v * v),
        1 => {
            let d = g.d_r(origin);
            d.zip_with(g, |r, a, b| a * a + b * b / (r * r))
        }
        _ => {
            let d = g.d_r(origin);
            let dd = g.d_rr(origin);
            let part = dd.zip_with(&d, |r, a, b| a * a + b * b / (r * r));
            part.zip_with(g, |r, a, b| a + b * b / (r * r * r * r))
        }
    }
}

/// `||(g, ġ)||²_{Mor(λ)}`.
pub fn mor_sq(k: u32, lambda: f64, pair: &FieldPair) -> f64 {
    let origin = Origin::Equivariant(k);
    let g = &pair.u;
    let grid = g.grid();
    let r = grid.nodes();
    let dd = grid.d_rr(g.values(), origin);
    let d = grid.d_r(g.values(), origin);
    let gd = pair.udot.values();
    let dgd = grid.d_r(gd, origin);
    let gv = g.values();
    let integrand: Vec<f64> = (0..r.len())
        .map(|i| {
            let ri = r[i];
            let y = ri / lambda;
            let gdot_m1 = dgd[i] * dgd[i] + gd[i] * gd[i] / (ri * ri);
            let g_m1 = d[i] * d[i] + gv[i] * gv[i] / (ri * ri);
            (dd[i] * dd[i] + gdot_m1) / ((lambda + ri) * (1.0 + y)) + g_m1 / (ri * ri * (lambda + ri))
        })
        .collect();
    grid.integrate(&integrand)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::lambda_q;

    fn log_grid(n: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::log_uniform(1e-4, 1e3, n).unwrap())
    }

    fn bump(r: f64) -> f64 {
        // smooth, supported in (e^{-3}, e^3)
        let x = r.ln() / 3.0;
        if x.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - x * x)).exp()
        }
    }

    #[test]
    fn kernel_of_h_and_a() {
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for n in [1024, 2048, 4096] {
            let g = log_grid(n);
            let lq = ScalarField::from_fn(&g, |r| lambda_q(3, r));
            let h = apply_operator(3, &OperatorKind::HScaled(1.0), &lq).unwrap().norm_l2();
            let a = apply_operator(3, &OperatorKind::AScaled(1.0), &lq).unwrap().norm_l2();
            assert!(h < prev.0 / 4.0 && a < prev.1 / 4.0, "n = {n}: {h:e}, {a:e}");
            prev = (h, a);
        }
        assert!(prev.0 < 1e-6 && prev.1 < 1e-6);
    }

    #[test]
    fn factorization_and_duality() {
        let mut prev = f64::INFINITY;
        for n in [2048, 4096, 8192] {
            let g = log_grid(n);
            let f = ScalarField::from_fn(&g, bump);
            let h = apply_operator(3, &OperatorKind::HScaled(0.7), &f).unwrap();
            let a = apply_operator(3, &OperatorKind::AScaled(0.7), &f).unwrap();
            let asa = apply_operator(3, &OperatorKind::AstarScaled(0.7), &a).unwrap();
            let err = asa.sub(&h).norm_l2() / h.norm_l2();
            assert!(err < prev / 4.0, "n = {n}: {err:e}");
            prev = err;
        }
        assert!(prev < 1e-7, "{prev:e}");
        let g = log_grid(4096);
        let f = ScalarField::from_fn(&g, bump);
        let a = apply_operator(3, &OperatorKind::AScaled(0.7), &f).unwrap();
        let other = ScalarField::from_fn(&g, |r| bump(r * 1.3) * r);
        let lhs = a.inner(&other);
        let rhs = f.inner(&apply_operator(3, &OperatorKind::AstarScaled(0.7), &other).unwrap());
        assert!((lhs - rhs).abs() < 1e-8 * lhs.abs().max(1.0));
    }

    #[test]
    fn htilde_is_a_astar() {
        let g = log_grid(8192);
        let f = ScalarField::from_fn(&g, |r| bump(r) * r.sin());
        let a = apply_operator(4, &OperatorKind::AstarScaled(1.3), &f).unwrap();
        let aas = apply_operator(4, &OperatorKind::AScaled(1.3), &a).unwrap();
        let ht = apply_operator(4, &OperatorKind::HtildeScaled(1.3), &f).unwrap();
        let err = aas.sub(&ht).norm_l2() / ht.norm_l2();
        assert!(err < 1e-7, "{err:e}");
    }

    #[test]
    fn lambda_psi_antisymmetric() {
        let g = log_grid(4096);
        let f = ScalarField::from_fn(&g, bump);
        let h = ScalarField::from_fn(&g, |r| bump(r * 0.8) * (1.0 + r));
        let op = OperatorKind::LambdaPsiScaled(0.5, PsiParams::default());
        let s = f.inner(&apply_operator(3, &op, &h).unwrap()) + h.inner(&apply_operator(3, &op, &f).unwrap());
        assert!(s.abs() < 1e-9 * f.norm_l2() * h.norm_l2(), "{s:e}");
    }

    #[test]
    fn psi_bounds_and_validation() {
        let p = PsiParams::default();
        let ys: Vec<f64> = (0..200).map(|i| (-8.0 + 0.08 * i as f64).exp()).collect();
        let (c, cc) = p.comparability_constants(&ys);
        assert!(c > 0.5 && cc <= 2.0, "({c}, {cc})");
        assert!(PsiParams::new(0.0).is_err());
        assert!(PsiParams::new(0.3).is_err());
        for y in [0.1, 1.0, 4.0] {
            let fd = (p.psi(y + 1e-6) - p.psi(y - 1e-6)) / 2e-6;
            assert!((fd - p.psi_prime(y)).abs() < 1e-8);
        }
    }

    #[test]
    fn htilde_potential_repulsive() {
        for k in 2..=5u32 {
            let floor = ((k - 1) * (k - 1)) as f64;
            for i in 0..2000 {
                let y = (-10.0 + 0.01 * i as f64).exp();
                assert!(htilde_potential(k, y) >= floor - 1e-12);
                assert!(htilde_potential_virial(k, y) >= 0.0);
                let fd = -y * (htilde_potential(k, y * (1.0 + 1e-6)) - htilde_potential(k, y * (1.0 - 1e-6))) / (2e-6 * y);
                assert!((fd - htilde_potential_virial(k, y)).abs() < 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn norms_of_zero_and_capability() {
        let g = log_grid(512);
        let z = FieldPair::zeros(&g);
        for kind in [
            NormKind::Hdot1,
            NormKind::Hdot2,
            NormKind::L2,
            NormKind::Mor { lambdas: vec![1.0, 0.01], delta0: 0.1 },
            NormKind::WeightedMinus(2),
        ] {
            assert_eq!(norm(3, &kind, &z).unwrap(), 0.0);
        }
        assert!(matches!(norm(3, &NormKind::WeightedMinus(3), &z), Err(LabError::Capability(_))));
        assert!(apply_operator(3, &OperatorKind::AScaled(0.0), &z.u).is_err());
    }

    #[test]
    fn hdot1_of_lambda_q_self_converges() {
        let val = |n| {
            let g = Arc::new(RadialGrid::log_uniform(1e-6, 1e3, n).unwrap());
            let lq = ScalarField::from_fn(&g, |r| lambda_q(3, r));
            hdot1_sq(3, &lq).sqrt()
        };
        let (a, b, c) = (val(1024), val(2048), val(4096));
        assert!((b - c).abs() < (a - b).abs() / 4.0 + 1e-13);
        // (ΛQ)' = k cos Q ΛQ / r
        let exact = crate::quad::log_trapezoid_dy_over_y(
            |y| {
                let (s, co) = crate::profiles::bubble_sin_cos(3, y);
                9.0 * s * s * (9.0 * co * co + 1.0)
            },
            -30.0,
            30.0,
            0.01,
        )
        .sqrt();
        assert!((c / exact - 1.0).abs() < 1e-7, "{c} vs {exact}");
    }

    #[test]
    fn mor_norm_scaling() {
        // Rescaling g by μ in r maps Mor(λ) to Mor(μλ) with a factor μ^{-3}.
        let g = log_grid(8192);
        let mu = 3.0;
        let base = |r: f64| bump(r) * r;
        let p1 = FieldPair::new(ScalarField::from_fn(&g, base), ScalarField::from_fn(&g, |r| bump(r * 1.1))).unwrap();
        let p2 = FieldPair::new(
            ScalarField::from_fn(&g, |r| base(r / mu)),
            ScalarField::from_fn(&g, |r| bump(r / mu * 1.1) / mu),
        )
        .unwrap();
        let a = mor_sq(3, 0.4, &p1);
        let b = mor_sq(3, 0.4 * mu, &p2);
        assert!((b * mu.powi(3) / a - 1.0).abs() < 1e-8, "{}", b * mu.powi(3) / a);
    }
}
