//! Harmonic map profile, multi-bubbles, interaction terms and the
//! orthogonality profile used to fix the modulation gauge.
//!
//! All trigonometric quantities of a bubble are evaluated through the
//! rational forms in `s = y^k`,
//!
//! ```text
//!     sin Q = 2s / (1 + s^2),    cos Q = (1 - s^2) / (1 + s^2),
//! ```
//!
//! which keep full relative accuracy both where `Q` is close to `0` and
//! where it is close to `pi`.

use crate::error::{LabError, Result};
use crate::quad;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Corotational index `k`. Profiles require `k >= 2`; the tower ODE
/// additionally requires `k >= 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct EquivariantIndex(u32);

impl EquivariantIndex {
    pub fn new(k: u32) -> Result<Self> {
        if k < 2 {
            return Err(LabError::Domain(format!("corotational index k = {k} must be >= 2")));
        }
        Ok(Self(k))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

impl TryFrom<u32> for EquivariantIndex {
    type Error = LabError;
    fn try_from(k: u32) -> Result<Self> {
        Self::new(k)
    }
}

impl From<EquivariantIndex> for u32 {
    fn from(k: EquivariantIndex) -> u32 {
        k.0
    }
}

/// `||Lambda Q||^2_{L^2(r dr)} = 2 pi / sin(pi / k)`.
pub fn kappa(k: u32) -> f64 {
    2.0 * PI / (PI / k as f64).sin()
}

/// `(sin Q(y), cos Q(y))` through the rational parametrisation.
#[inline]
pub fn bubble_sin_cos(k: u32, y: f64) -> (f64, f64) {
    sin_cos_from_power(y.powi(k as i32))
}

/// `(sin Q, cos Q)` given `s = y^k`.
#[inline]
pub fn sin_cos_from_power(s: f64) -> (f64, f64) {
    if s <= 1.0 {
        let d = 1.0 + s * s;
        (2.0 * s / d, (1.0 - s * s) / d)
    } else {
        let t = 1.0 / s;
        let d = 1.0 + t * t;
        (2.0 * t / d, (t * t - 1.0) / d)
    }
}

/// The harmonic map `Q(r) = 2 arctan(r^k)`.
pub fn q_profile(k: u32, r: f64) -> f64 {
    let s = r.powi(k as i32);
    if s <= 1.0 {
        2.0 * s.atan()
    } else {
        PI - 2.0 * (1.0 / s).atan()
    }
}

/// `Lambda Q(y) = y Q'(y) = 2k y^k / (1 + y^{2k}) = k sin Q(y)`.
pub fn lambda_q(k: u32, y: f64) -> f64 {
    k as f64 * bubble_sin_cos(k, y).0
}

/// `y d/dy (Lambda Q) = k cos Q Lambda Q`.
pub fn lambda_q_scaling_derivative(k: u32, y: f64) -> f64 {
    let (s, c) = bubble_sin_cos(k, y);
    let kf = k as f64;
    kf * kf * s * c
}

/// Signs, scales and scale velocities of a multi-bubble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerConfig {
    pub k: EquivariantIndex,
    pub iota: Vec<f64>,
    pub lambda: Vec<f64>,
    pub b: Vec<f64>,
}

impl TowerConfig {
    pub fn new(k: u32, iota: Vec<f64>, lambda: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let k = EquivariantIndex::new(k)?;
        let cfg = Self { k, iota, lambda, b };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default signs `iota_j = (-1)^{j-1}` and zero velocities.
    pub fn alternating(k: u32, lambda: Vec<f64>) -> Result<Self> {
        let j = lambda.len();
        Self::new(k, alternating_signs(j), lambda, vec![0.0; j])
    }

    pub fn with_b(mut self, b: Vec<f64>) -> Result<Self> {
        self.b = b;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.lambda.len();
        if j == 0 {
            return Err(LabError::Configuration("a tower needs at least one bubble".into()));
        }
        if self.iota.len() != j || self.b.len() != j {
            return Err(LabError::Configuration(format!(
                "length mismatch: iota {}, lambda {j}, b {}",
                self.iota.len(),
                self.b.len()
            )));
        }
        if self.iota.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(LabError::Configuration("signs must be +1 or -1".into()));
        }
        if self.lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(LabError::Configuration("scales must be positive and finite".into()));
        }
        if self.lambda.windows(2).any(|w| w[1] >= w[0]) {
            return Err(LabError::Configuration(format!(
                "scales must be strictly decreasing, got {:?}",
                self.lambda
            )));
        }
        if self.b.iter().any(|b| !b.is_finite()) {
            return Err(LabError::Configuration("velocities must be finite".into()));
        }
        Ok(())
    }

    pub fn k(&self) -> u32 {
        self.k.get()
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// `max_{j >= 2} lambda_j / lambda_{j-1}`, zero for a single bubble.
    pub fn max_ratio(&self) -> f64 {
        self.lambda.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max)
    }

    /// Membership in the scale-separated class `P_J(alpha)`.
    pub fn is_separated(&self, alpha: f64) -> bool {
        self.max_ratio() < alpha
    }

    /// Limit of the multi-bubble as `r -> infinity`.
    pub fn asymptotic_value(&self) -> f64 {
        self.iota.iter().sum::<f64>() * PI
    }
}

pub fn alternating_signs(j: usize) -> Vec<f64> {
    (0..j).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()
}

/// `sum_j iota_j Q(r / lambda_j)`.
pub fn multibubble(cfg: &TowerConfig, r: f64) -> f64 {
    let k = cfg.k();
    cfg.iota.iter().zip(&cfg.lambda).map(|(s, l)| s * q_profile(k, r / l)).sum()
}

/// `(sin, cos)` of the multi-bubble angle by angle addition of the
/// individual bubbles.
pub fn multibubble_sin_cos(cfg: &TowerConfig, r: f64) -> (f64, f64) {
    let k = cfg.k();
    let mut acc = (0.0, 1.0);
    for (s, l) in cfg.iota.iter().zip(&cfg.lambda) {
        let (sq, cq) = bubble_sin_cos(k, r / l);
        acc = add_angles(acc, (s * sq, cq));
    }
    acc
}

#[inline]
fn add_angles(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.1 + a.1 * b.0, a.1 * b.1 - a.0 * b.0)
}

/// `f(sum a_j) - sum f(a_j)` for `f(u) = sin(2u)/2`, accumulated by the
/// cancellation-free pairwise identity
/// `f(S + a) - f(S) - f(a) = -sin(2S) sin^2 a - sin(2a) sin^2 S`.
#[inline]
fn nonlinear_excess(angles: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut it = angles;
    let Some(mut acc) = it.next() else { return 0.0 };
    let mut excess = 0.0;
    for a in it {
        let sin2s = 2.0 * acc.0 * acc.1;
        let sin2a = 2.0 * a.0 * a.1;
        excess += -sin2s * a.0 * a.0 - sin2a * acc.0 * acc.0;
        acc = add_angles(acc, a);
    }
    excess
}

/// The interaction term `f_i = -(k^2/r^2) {f(Q_tower) - sum_j f(Q_{;j})}`.
///
/// Below `r = 1e-8 lambda_J` the term is `O(r^{2k-2})` and the limit `0` is
/// returned.
pub fn interaction_term(cfg: &TowerConfig, r: f64) -> f64 {
    let j = cfg.len();
    if j < 2 || r <= 1e-8 * cfg.lambda[j - 1] {
        return 0.0;
    }
    let k = cfg.k();
    let kf = k as f64;
    let excess = nonlinear_excess(cfg.iota.iter().zip(&cfg.lambda).map(|(s, l)| {
        let (sq, cq) = bubble_sin_cos(k, r / l);
        (s * sq, cq)
    }));
    -kf * kf / (r * r) * excess
}

/// `<Lambda Q_{;i}, f_i>` in `L^2(r dr)`, computed by the exponentially
/// convergent trapezoidal rule in `ln(r / lambda_i)`. `i` is zero-based.
pub fn interaction_inner_product(cfg: &TowerConfig, i: usize) -> f64 {
    interaction_inner_product_raw(cfg.k(), &cfg.iota, &cfg.lambda, i, 0.1)
}

pub(crate) fn interaction_inner_product_raw(
    k: u32,
    iota: &[f64],
    lambda: &[f64],
    i: usize,
    h: f64,
) -> f64 {
    let j = lambda.len();
    if j < 2 {
        return 0.0;
    }
    let kf = k as f64;
    let ln_li = lambda[i].ln();
    let mut s_lo = -40.0 / kf;
    let mut s_hi = 40.0 / kf;
    if i + 1 < j {
        s_lo = s_lo.min(lambda[i + 1].ln() - ln_li - 20.0 / kf);
    }
    if i > 0 {
        s_hi = s_hi.max(lambda[i - 1].ln() - ln_li + 20.0 / kf);
    }
    s_lo = s_lo.max(-80.0);
    s_hi = s_hi.min(80.0);
    let n = ((s_hi - s_lo) / h).ceil() as usize;
    let h = (s_hi - s_lo) / n as f64;
    // ln of the bubble arguments' k-th powers, shifted per node.
    let shifts: Vec<f64> = lambda.iter().map(|l| kf * (ln_li - l.ln())).collect();
    let mut acc = 0.0;
    for node in 0..=n {
        let s = s_lo + node as f64 * h;
        let ks = kf * s;
        let mut own_sin = 0.0;
        let excess = nonlinear_excess((0..j).map(|m| {
            let (sq, cq) = sin_cos_from_power((ks + shifts[m]).clamp(-700.0, 700.0).exp());
            if m == i {
                own_sin = sq;
            }
            (iota[m] * sq, cq)
        }));
        let wt = if node == 0 || node == n { 0.5 } else { 1.0 };
        // r dr = r^2 ds cancels the 1/r^2 of the interaction term.
        acc += wt * iota[i] * kf * own_sin * (-kf * kf * excess);
    }
    acc * h
}

/// Smooth cutoff: `1` on `r <= 1`, `0` on `r >= 2`, built from the
/// standard `exp(-1/x)` partition.
pub fn cutoff(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        smooth_step(2.0 - r)
    }
}

/// `d chi / dr`.
pub fn cutoff_derivative(r: f64) -> f64 {
    if r <= 1.0 || r >= 2.0 {
        0.0
    } else {
        -smooth_step_derivative(2.0 - r)
    }
}

fn bump(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

fn bump_derivative(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp() / (x * x)
    } else {
        0.0
    }
}

fn smooth_step(x: f64) -> f64 {
    let a = bump(x);
    let b = bump(1.0 - x);
    a / (a + b)
}

fn smooth_step_derivative(x: f64) -> f64 {
    let a = bump(x);
    let b = bump(1.0 - x);
    let da = bump_derivative(x);
    let db = -bump_derivative(1.0 - x);
    (da * (a + b) - a * (da + db)) / ((a + b) * (a + b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZVariant {
    /// `chi Lambda Q / int chi (Lambda Q)^2`.
    Cutoff,
    /// `Lambda Q / kappa`; decays only like `y^{-k}`.
    Pure,
}

/// Orthogonality profile `Z` normalised so that `<Z, Lambda Q> = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthogonalityProfile {
    k: u32,
    variant: ZVariant,
    norm: f64,
}

impl OrthogonalityProfile {
    /// Cutoff variant, valid for every `k >= 2`.
    pub fn cutoff(k: u32) -> Result<Self> {
        EquivariantIndex::new(k)?;
        let norm = cutoff_normalization(k);
        if norm < 1e-12 {
            return Err(LabError::DegenerateCutoff(norm));
        }
        Ok(Self { k, variant: ZVariant::Cutoff, norm })
    }

    /// Pure variant. Intended for `k >= 4`; smaller `k` must pass
    /// `acknowledge_slow_decay`.
    pub fn pure(k: u32, acknowledge_slow_decay: bool) -> Result<Self> {
        EquivariantIndex::new(k)?;
        if k < 4 && !acknowledge_slow_decay {
            return Err(LabError::Parameter(format!(
                "pure orthogonality profile needs k >= 4 (got {k}) unless acknowledged"
            )));
        }
        Ok(Self { k, variant: ZVariant::Pure, norm: kappa(k) })
    }

    pub fn new(k: u32, variant: ZVariant) -> Result<Self> {
        match variant {
            ZVariant::Cutoff => Self::cutoff(k),
            ZVariant::Pure => Self::pure(k, false),
        }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn variant(&self) -> ZVariant {
        self.variant
    }

    /// `int chi (Lambda Q)^2` (cutoff) or `kappa` (pure).
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self.variant {
            ZVariant::Cutoff => cutoff(y) * lambda_q(self.k, y) / self.norm,
            ZVariant::Pure => lambda_q(self.k, y) / self.norm,
        }
    }

    /// `y Z'(y)`.
    pub fn scaling_derivative(&self, y: f64) -> f64 {
        let lq = lambda_q(self.k, y);
        let ylq = lambda_q_scaling_derivative(self.k, y);
        match self.variant {
            ZVariant::Cutoff => (y * cutoff_derivative(y) * lq + cutoff(y) * ylq) / self.norm,
            ZVariant::Pure => ylq / self.norm,
        }
    }

    /// Support radius in `y` (infinite for the pure variant).
    pub fn support(&self) -> f64 {
        match self.variant {
            ZVariant::Cutoff => 2.0,
            ZVariant::Pure => f64::INFINITY,
        }
    }
}

fn cutoff_normalization(k: u32) -> f64 {
    let n = 8001;
    let dy = 2.0 / (n - 1) as f64;
    let w = quad::gregory_weights(n);
    (0..n)
        .map(|i| {
            let y = i as f64 * dy;
            let lq = lambda_q(k, y);
            w[i] * cutoff(y) * lq * lq * y
        })
        .sum::<f64>()
        * dy
}

/// `|| Lambda Q_{lambda_in} Lambda Q_{lambda_out} / (lambda_in lambda_out) ||_{L^1(r dr)}`.
pub fn bubble_overlap(k: u32, lambda_in: f64, lambda_out: f64) -> Result<f64> {
    EquivariantIndex::new(k)?;
    if !(lambda_in > 0.0 && lambda_in <= lambda_out) {
        return Err(LabError::Parameter(format!(
            "need 0 < lambda_in <= lambda_out, got ({lambda_in}, {lambda_out})"
        )));
    }
    let kf = k as f64;
    let s_lo = lambda_in.ln() - 40.0 / (kf + 1.0);
    let s_hi = lambda_out.ln() + 40.0 / (kf - 1.0);
    let integrand = |r: f64| lambda_q(k, r / lambda_in) * lambda_q(k, r / lambda_out);
    let coarse = quad::log_trapezoid(integrand, s_lo, s_hi, 0.1);
    let fine = quad::log_trapezoid(integrand, s_lo, s_hi, 0.05);
    if (coarse - fine).abs() > 1e-9 * fine.abs().max(1e-300) {
        return Err(LabError::Resolution(format!(
            "bubble overlap estimates {coarse:e} and {fine:e} disagree"
        )));
    }
    Ok(fine / (lambda_in * lambda_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn q_profile_values() {
        assert_eq!(q_profile(3, 0.0), 0.0);
        assert_relative_eq!(q_profile(3, 1.0), PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(q_profile(3, 2.0), 2.0 * 8f64.atan(), epsilon = 1e-15);
        assert_relative_eq!(q_profile(3, 2.0), 2.892_882_66, epsilon = 1e-8);
    }

    #[test]
    fn lambda_q_identity_and_values() {
        assert_relative_eq!(lambda_q(3, 1.0), 3.0, epsilon = 1e-15);
        assert!(lambda_q(3, 1e-30) < 1e-80);
        assert!(lambda_q(3, 1e30) < 1e-80);
        let mut worst: f64 = 0.0;
        for i in 0..20_000 {
            let y = (-12.0 + i as f64 * 1.2e-3).exp();
            for k in 2..=6 {
                let d = (lambda_q(k, y) - k as f64 * q_profile(k, y).sin()).abs();
                worst = worst.max(d);
            }
        }
        assert!(worst < 1e-13, "max deviation {worst:e}");
    }

    #[test]
    fn multibubble_examples() {
        let single = TowerConfig::alternating(3, vec![1.0]).unwrap();
        assert_relative_eq!(multibubble(&single, 0.7), q_profile(3, 0.7), epsilon = 1e-15);
        let two = TowerConfig::alternating(3, vec![1.0, 0.01]).unwrap();
        assert_relative_eq!(multibubble(&two, 0.01), -1.570_794_3, epsilon = 1e-7);
        assert!(multibubble(&two, 1e12).abs() < 1e-15);
        assert_eq!(two.asymptotic_value(), 0.0);
        let three = TowerConfig::alternating(3, vec![1.0, 0.1, 0.01]).unwrap();
        assert_relative_eq!(three.asymptotic_value(), PI);
    }

    #[test]
    fn config_validation() {
        assert!(TowerConfig::alternating(3, vec![1.0, 2.0]).is_err());
        assert!(TowerConfig::alternating(1, vec![1.0]).is_err());
        assert!(TowerConfig::new(3, vec![1.0, 0.5], vec![1.0, 0.1], vec![0.0, 0.0]).is_err());
        let c = TowerConfig::alternating(3, vec![1.0, 0.05, 0.001]).unwrap();
        assert!(c.is_separated(0.06));
        assert!(!c.is_separated(0.05));
    }

    #[test]
    fn interaction_vanishes_for_single_bubble() {
        let single = TowerConfig::alternating(4, vec![0.3]).unwrap();
        for r in [1e-3, 0.3, 2.0, 50.0] {
            assert_eq!(interaction_term(&single, r), 0.0);
        }
        assert_eq!(interaction_inner_product(&single, 0), 0.0);
    }

    #[test]
    fn interaction_matches_direct_difference_where_well_conditioned() {
        let cfg = TowerConfig::alternating(3, vec![1.0, 0.3]).unwrap();
        let f = |u: f64| (2.0 * u).sin() / 2.0;
        for r in [0.1, 0.3, 0.8, 2.0] {
            let tower = multibubble(&cfg, r);
            let sep: f64 = cfg
                .iota
                .iter()
                .zip(&cfg.lambda)
                .map(|(s, l)| f(s * q_profile(3, r / l)))
                .sum();
            let direct = -9.0 / (r * r) * (f(tower) - sep);
            assert_relative_eq!(interaction_term(&cfg, r), direct, max_relative = 1e-9);
        }
    }

    #[test]
    fn interaction_inner_product_leading_term() {
        // The alternating pair attracts: the projection is -8k^2 eps^k.
        for eps in [1e-2, 1e-3] {
            let cfg = TowerConfig::alternating(3, vec![1.0, eps]).unwrap();
            let v = interaction_inner_product(&cfg, 1);
            let rel = v / (-72.0 * eps.powi(3)) - 1.0;
            assert!(rel.abs() < 1e-3, "eps {eps}: relative deviation {rel:e}");
        }
        // Same sign pair: sign flips.
        let cfg = TowerConfig::new(3, vec![1.0, 1.0], vec![1.0, 1e-3], vec![0.0; 2]).unwrap();
        assert!(interaction_inner_product(&cfg, 1) > 0.0);
    }

    #[test]
    fn interaction_pointwise_bound() {
        // |f_i| <= C r^{-2} Lambda Q_{lambda_1} Lambda Q_{lambda_2}
        let cfg = TowerConfig::alternating(3, vec![1.0, 1e-2]).unwrap();
        let mut c_fit: f64 = 0.0;
        for i in 0..2000 {
            let r = (-12.0 + i as f64 * 0.01).exp();
            let bound = lambda_q(3, r) * lambda_q(3, r / 1e-2) / (r * r);
            c_fit = c_fit.max(interaction_term(&cfg, r).abs() / bound);
        }
        assert!(c_fit.is_finite() && c_fit < 10.0, "fitted constant {c_fit}");
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.5), 1.0);
        assert_eq!(cutoff(2.5), 0.0);
        assert_relative_eq!(cutoff(1.5), 0.5, epsilon = 1e-15);
        let mut prev = 1.0;
        for i in 0..=1000 {
            let r = 1.0 + i as f64 * 1e-3;
            let c = cutoff(r);
            assert!((0.0..=1.0).contains(&c) && c <= prev + 1e-15);
            prev = c;
        }
        // derivative against central differences
        for r in [1.2, 1.5, 1.8] {
            let fd = (cutoff(r + 1e-6) - cutoff(r - 1e-6)) / 2e-6;
            assert_relative_eq!(cutoff_derivative(r), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn orthogonality_profile_normalization() {
        for k in 2..=5 {
            let z = OrthogonalityProfile::cutoff(k).unwrap();
            let v = quad::log_trapezoid(|y| z.eval(y) * lambda_q(k, y), -40.0, 1.0, 0.002);
            assert!((v - 1.0).abs() < 1e-10, "k = {k}: {v}");
            assert_eq!(z.eval(2.0), 0.0);
            assert_eq!(z.eval(3.7), 0.0);
        }
        assert!(OrthogonalityProfile::pure(3, false).is_err());
        let z = OrthogonalityProfile::pure(3, true).unwrap();
        assert_relative_eq!(z.normalization(), 4.0 * PI / 3f64.sqrt(), epsilon = 1e-12);
        let v = quad::log_trapezoid(|y| z.eval(y) * lambda_q(3, y), -30.0, 30.0, 0.02);
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn orthogonality_profile_scaling_derivative() {
        let z = OrthogonalityProfile::cutoff(3).unwrap();
        for y in [0.3, 1.0, 1.4, 1.9] {
            let fd = y * (z.eval(y + 1e-6) - z.eval(y - 1e-6)) / 2e-6;
            assert_relative_eq!(z.scaling_derivative(y), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn kappa_closed_form_matches_quadrature() {
        for k in 2..=5 {
            let q = quad::log_trapezoid(|y| lambda_q(k, y).powi(2), -40.0, 40.0, 0.02);
            assert_relative_eq!(q, kappa(k), max_relative = 1e-12);
        }
        assert_relative_eq!(kappa(3), 7.255_197_5, epsilon = 1e-7);
    }

    #[test]
    fn bubble_overlap_values() {
        assert_relative_eq!(bubble_overlap(3, 1.0, 1.0).unwrap(), kappa(3), max_relative = 1e-10);
        let a = bubble_overlap(3, 0.01, 1.0).unwrap();
        let b = bubble_overlap(3, 0.001, 1.0).unwrap();
        assert!(((a / b) / 100.0 - 1.0).abs() < 0.05, "ratio {}", a / b);
        assert!(bubble_overlap(3, 2.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn q_inversion_symmetry(y in 1e-3f64..1e3, k in 2u32..7) {
            prop_assert!((q_profile(k, 1.0 / y) - (PI - q_profile(k, y))).abs() < 1e-14);
        }

        #[test]
        fn q_monotone_in_range(y in 1e-4f64..1e4, k in 2u32..7) {
            let q = q_profile(k, y);
            // PI - 2 atan(y^-k) rounds to PI once y^-k drops below ulp(PI).
            prop_assert!((0.0..=PI).contains(&q));
            prop_assert!(q_profile(k, y * 1.001) >= q);
        }

        #[test]
        fn interaction_odd_under_global_sign_flip(r in 1e-3f64..10.0, ratio in 1e-3f64..0.5) {
            let a = TowerConfig::alternating(3, vec![1.0, ratio]).unwrap();
            let flipped = TowerConfig::new(3, vec![-1.0, 1.0], vec![1.0, ratio], vec![0.0; 2]).unwrap();
            let (fa, fb) = (interaction_term(&a, r), interaction_term(&flipped, r));
            prop_assert!((fa + fb).abs() <= 1e-12 * fa.abs().max(1e-300));
        }

        #[test]
        fn overlap_scale_invariant(c in 0.01f64..100.0, ratio in 1e-3f64..1.0) {
            let a = bubble_overlap(3, ratio, 1.0).unwrap();
            let b = bubble_overlap(3, c * ratio, c).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a);
        }
    }
}
