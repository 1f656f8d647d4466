//! Closed-form constants of the tower construction, the formal modulation
//! ODE, its exact power-law solution, the linearization around it and the
//! shooting driver.
//!
//! Internally trajectories are integrated in the relative variables
//! `ν_j = λ_j/λ_j^ex - 1`, `ν̇_j = b_j/b_j^ex - 1` (for `j ≥ 2`) and the
//! logarithmic time `τ = -ln|t|`, in which the leading system is
//! autonomous:
//!
//! ```text
//!     dν_j/dτ = α_j (ν̇_j - ν_j)
//!     dν̇_j/dτ = (α_j + 1) [ (1+ν_j)^{k-1} (1+ν_{j-1})^{-k} - 1 - ν̇_j ]
//! ```
//!
//! with `ν_1 := λ_1 - 1`. The first bubble is carried as `(λ_1, b_1)`.

mod fit;
mod ode;
mod shoot;

pub use fit::{exponent_fit, FitResult};
pub use ode::{dp_step, integrate_adaptive, AdaptiveOptions, Rhs};
pub use shoot::{default_eps, shoot, BracketRecord, ExitEvent, ShootingConfig, ShootingReport, WindowReport};

use crate::error::{LabError, Result};
use crate::profiles::{self, alternating_signs};
use serde::{Deserialize, Serialize};

/// Eigenstructure of the linearized `2×2` block of bubble `j ≥ 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStructure {
    pub j: usize,
    pub alpha: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    /// `A_j = [[-α, α], [(k-1)(α+1), -(α+1)]]`.
    pub a: [[f64; 2]; 2],
    /// Columns are the unstable and stable eigenvectors.
    pub p: [[f64; 2]; 2],
    pub p_inv: [[f64; 2]; 2],
    /// `max |A - P diag(σ+, σ-) P^{-1}|`.
    pub residual: f64,
}

impl ModeStructure {
    fn new(k: u32, j: usize, alpha: f64) -> Self {
        let kf = k as f64;
        let half = alpha + 0.5;
        let disc = (half * half + (kf - 2.0) * alpha * (alpha + 1.0)).sqrt();
        let sp = -half + disc;
        // product form avoids cancellation in the small root
        let sm = -(kf - 2.0) * alpha * (alpha + 1.0) / sp;
        let a = [[-alpha, alpha], [(kf - 1.0) * (alpha + 1.0), -(alpha + 1.0)]];
        let p = [[1.0, 1.0], [1.0 + sp / alpha, 1.0 + sm / alpha]];
        let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
        let p_inv = [[p[1][1] / det, -p[0][1] / det], [-p[1][0] / det, p[0][0] / det]];
        let mut residual = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                let v = p[r][0] * sp * p_inv[0][c] + p[r][1] * sm * p_inv[1][c];
                residual = residual.max((v - a[r][c]).abs());
            }
        }
        Self { j, alpha, sigma_plus: sp, sigma_minus: sm, a, p, p_inv, residual }
    }

    /// `(P_u, P_s) = P^{-1} (ν, ν̇)`.
    pub fn project(&self, nu: f64, nudot: f64) -> (f64, f64) {
        (
            self.p_inv[0][0] * nu + self.p_inv[0][1] * nudot,
            self.p_inv[1][0] * nu + self.p_inv[1][1] * nudot,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerConstants {
    pub k: u32,
    pub j: usize,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub kappa: f64,
    /// Entries for `j = 2..=J`.
    pub modes: Vec<ModeStructure>,
}

/// `α_j = (k/(k-2))^{j-1} - 1`, one-based `j`.
pub fn alpha(k: u32, j: usize) -> f64 {
    let kf = k as f64;
    (kf / (kf - 2.0)).powi(j as i32 - 1) - 1.0
}

pub fn constants(k: u32, j_count: usize) -> Result<TowerConstants> {
    if k < 3 {
        return Err(LabError::Domain(format!("tower constants need k >= 3, got k = {k}")));
    }
    if j_count == 0 {
        return Err(LabError::Domain("a tower needs J >= 1".into()));
    }
    let kf = k as f64;
    let kappa = profiles::kappa(k);
    let alpha: Vec<f64> = (1..=j_count).map(|j| self::alpha(k, j)).collect();
    let mut gamma = vec![1.0];
    for j in 1..j_count {
        let a = alpha[j];
        let prev: f64 = gamma[j - 1];
        let g = (kappa * a * (a + 1.0) / (8.0 * kf * kf)).powf(1.0 / (kf - 2.0)) * prev.powf(kf / (kf - 2.0));
        gamma.push(g);
    }
    let modes = (1..j_count).map(|j| ModeStructure::new(k, j + 1, alpha[j])).collect();
    Ok(TowerConstants { k, j: j_count, alpha, gamma, kappa, modes })
}

impl TowerConstants {
    /// Mode data of bubble `j` (one-based, `j ≥ 2`).
    pub fn mode(&self, j: usize) -> &ModeStructure {
        &self.modes[j - 2]
    }

    pub fn sigma_plus(&self, j: usize) -> f64 {
        self.mode(j).sigma_plus
    }

    pub fn sigma_minus(&self, j: usize) -> f64 {
        self.mode(j).sigma_minus
    }

    pub fn lambda_ex(&self, j: usize, t: f64) -> f64 {
        self.gamma[j - 1] * (-t).powf(-self.alpha[j - 1])
    }

    pub fn b_ex(&self, j: usize, t: f64) -> f64 {
        let a = self.alpha[j - 1];
        -a * self.gamma[j - 1] * (-t).powf(-a - 1.0)
    }

    pub fn max_diagonalization_residual(&self) -> f64 {
        self.modes.iter().map(|m| m.residual).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerState {
    pub t: f64,
    pub lambda: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuState {
    pub t: f64,
    pub lambda1: f64,
    pub b1: f64,
    /// `ν_j` for `j = 2..=J`.
    pub nu: Vec<f64>,
    /// `ν̇_j` for `j = 2..=J`.
    pub nudot: Vec<f64>,
    /// Optional refined `(b̂_j - b_j^ex)/b_j^ex`.
    pub nuhatdot: Option<Vec<f64>>,
}

fn check_time(t: f64) -> Result<()> {
    if t < 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(LabError::Domain(format!("times must be negative, got t = {t}")))
    }
}

pub fn exact_solution(consts: &TowerConstants, t: f64) -> Result<TowerState> {
    check_time(t)?;
    let lambda = (1..=consts.j).map(|j| consts.lambda_ex(j, t)).collect();
    let b = (1..=consts.j).map(|j| consts.b_ex(j, t)).collect();
    Ok(TowerState { t, lambda, b })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhsMode {
    /// `b_{j,t} = -8k² κ^{-1} λ_j^{k-1} / λ_{j-1}^k`.
    Leading,
    /// `b_{j,t} = κ^{-1} λ_j^{-1} <ΛQ_{;j}, f_i>` by quadrature.
    FullInteraction,
}

/// Time derivative `(λ_t, b_t)` of a state under alternating signs.
pub fn ode_rhs(consts: &TowerConstants, state: &TowerState, mode: RhsMode) -> Result<TowerState> {
    ode_rhs_with_signs(consts, state, mode, &alternating_signs(consts.j))
}

pub fn ode_rhs_with_signs(
    consts: &TowerConstants,
    state: &TowerState,
    mode: RhsMode,
    iota: &[f64],
) -> Result<TowerState> {
    check_time(state.t)?;
    let jn = consts.j;
    if state.lambda.len() != jn || state.b.len() != jn || iota.len() != jn {
        return Err(LabError::Configuration("state length does not match J".into()));
    }
    if state.lambda.iter().any(|&l| !(l > 0.0)) || state.lambda.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LabError::Configuration(format!("scales must be positive and decreasing: {:?}", state.lambda)));
    }
    let kf = consts.k as f64;
    let lambda_t = state.b.iter().map(|b| -b).collect();
    let mut b_t = vec![0.0; jn];
    for j in 1..jn {
        b_t[j] = match mode {
            RhsMode::Leading => {
                -8.0 * kf * kf / consts.kappa * state.lambda[j].powf(kf - 1.0) / state.lambda[j - 1].powf(kf)
            }
            RhsMode::FullInteraction => {
                profiles::interaction_inner_product_raw(consts.k, iota, &state.lambda, j, 0.1)
                    / (consts.kappa * state.lambda[j])
            }
        };
    }
    Ok(TowerState { t: state.t, lambda: lambda_t, b: b_t })
}

pub fn nu_transform(consts: &TowerConstants, state: &TowerState) -> Result<NuState> {
    check_time(state.t)?;
    let t = state.t;
    let nu = (2..=consts.j).map(|j| state.lambda[j - 1] / consts.lambda_ex(j, t) - 1.0).collect();
    let nudot = (2..=consts.j).map(|j| state.b[j - 1] / consts.b_ex(j, t) - 1.0).collect();
    Ok(NuState { t, lambda1: state.lambda[0], b1: state.b[0], nu, nudot, nuhatdot: None })
}

pub fn nu_inverse(consts: &TowerConstants, nu: &NuState) -> Result<TowerState> {
    check_time(nu.t)?;
    let t = nu.t;
    let mut lambda = vec![nu.lambda1];
    let mut b = vec![nu.b1];
    for j in 2..=consts.j {
        lambda.push((1.0 + nu.nu[j - 2]) * consts.lambda_ex(j, t));
        b.push((1.0 + nu.nudot[j - 2]) * consts.b_ex(j, t));
    }
    Ok(TowerState { t, lambda, b })
}

/// Relation between `ν̇_{0,j}` and `ν_{0,j}` used to complete the initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitRelation {
    /// `ν̇_0 = -(1 + σ_+/α) ν_0`.
    #[default]
    AsPrinted,
    /// `ν̇_0 = +(1 + σ_+/α) ν_0`: data on the unstable eigenvector, so the
    /// stable coordinate vanishes.
    UnstableEigenvector,
}

impl InitRelation {
    pub fn factor(self, mode: &ModeStructure) -> f64 {
        let f = 1.0 + mode.sigma_plus / mode.alpha;
        match self {
            InitRelation::AsPrinted => -f,
            InitRelation::UnstableEigenvector => f,
        }
    }
}

/// Initial state at `t0` with `λ_{0,1} = 1`, `b_{0,1} = 0` and `ν_{0,j}`
/// inside the box `|ν_{0,j}| ≤ |t0|^{-ε_j}`.
pub fn stable_manifold_init(consts: &TowerConstants, cfg: &ShootingConfig, nu0: &[f64]) -> Result<TowerState> {
    cfg.validate(consts)?;
    if nu0.len() + 1 != consts.j {
        return Err(LabError::Parameter(format!("expected {} coordinates, got {}", consts.j - 1, nu0.len())));
    }
    let t0 = cfg.t0;
    for (idx, &v) in nu0.iter().enumerate() {
        let j = idx + 2;
        let bound = (-t0).powf(-cfg.eps[j]);
        if v.abs() > bound * (1.0 + 1e-14) {
            return Err(LabError::Domain(format!("|ν_0,{j}| = {v:e} exceeds the box bound {bound:e}")));
        }
    }
    nu_inverse(consts, &init_nu_state(consts, cfg, nu0))
}

pub(crate) fn init_nu_state(consts: &TowerConstants, cfg: &ShootingConfig, nu0: &[f64]) -> NuState {
    let nudot = nu0
        .iter()
        .enumerate()
        .map(|(idx, &v)| cfg.init_relation.factor(consts.mode(idx + 2)) * v)
        .collect();
    NuState { t: cfg.t0, lambda1: 1.0, b1: 0.0, nu: nu0.to_vec(), nudot, nuhatdot: None }
}

/// Right-hand side in `(τ, y)` with `y = [λ_1 - 1, b_1, ν_2, ν̇_2, ...]`.
pub(crate) struct NuSystem<'a> {
    pub consts: &'a TowerConstants,
    pub mode: RhsMode,
    pub iota: Vec<f64>,
    lambda_buf: Vec<f64>,
}

impl<'a> NuSystem<'a> {
    pub fn new(consts: &'a TowerConstants, mode: RhsMode) -> Self {
        Self { consts, mode, iota: alternating_signs(consts.j), lambda_buf: vec![0.0; consts.j] }
    }
}

pub(crate) fn pack(nu: &NuState) -> Vec<f64> {
    let mut y = vec![nu.lambda1 - 1.0, nu.b1];
    for (a, b) in nu.nu.iter().zip(&nu.nudot) {
        y.push(*a);
        y.push(*b);
    }
    y
}

pub(crate) fn unpack(t: f64, y: &[f64]) -> NuState {
    let jn = y.len() / 2;
    NuState {
        t,
        lambda1: 1.0 + y[0],
        b1: y[1],
        nu: (1..jn).map(|j| y[2 * j]).collect(),
        nudot: (1..jn).map(|j| y[2 * j + 1]).collect(),
        nuhatdot: None,
    }
}

pub(crate) fn tau_of(t: f64) -> f64 {
    -(-t).ln()
}

pub(crate) fn t_of(tau: f64) -> f64 {
    -(-tau).exp()
}

impl Rhs for NuSystem<'_> {
    fn eval(&mut self, tau: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let c = self.consts;
        let kf = c.k as f64;
        let abs_t = (-tau).exp();
        dy[0] = -abs_t * y[1];
        dy[1] = 0.0;
        for idx in 1..c.j {
            let j = idx + 1;
            let a = c.alpha[idx];
            let nu = y[2 * idx];
            let nud = y[2 * idx + 1];
            let nu_prev = if idx == 1 { y[0] } else { y[2 * idx - 2] };
            if nu <= -1.0 || nu_prev <= -1.0 {
                return Err(LabError::BlowDown { t: -abs_t, detail: format!("λ_{j} or λ_{} reached zero", j - 1) });
            }
            dy[2 * idx] = a * (nud - nu);
            dy[2 * idx + 1] = match self.mode {
                RhsMode::Leading => {
                    let excess = ((kf - 1.0) * nu.ln_1p() - kf * nu_prev.ln_1p()).exp_m1();
                    (a + 1.0) * (excess - nud)
                }
                RhsMode::FullInteraction => {
                    let t = -abs_t;
                    self.lambda_buf[0] = 1.0 + y[0];
                    for m in 1..c.j {
                        self.lambda_buf[m] = c.lambda_ex(m + 1, t) * (1.0 + y[2 * m]);
                    }
                    if self.lambda_buf.windows(2).any(|w| w[1] >= w[0]) {
                        return Err(LabError::BlowDown { t, detail: "bubble scales lost their ordering".into() });
                    }
                    let ip = profiles::interaction_inner_product_raw(c.k, &self.iota, &self.lambda_buf, idx, 0.1);
                    let b_t = ip / (c.kappa * self.lambda_buf[idx]);
                    abs_t * b_t / c.b_ex(j, t) - (1.0 + nud) * (a + 1.0)
                }
            };
        }
        Ok(())
    }
}

/// Adaptive integration from `state0` to each of the increasing times
/// `times` (all in `[state0.t, 0)`).
pub fn integrate(
    consts: &TowerConstants,
    state0: &TowerState,
    times: &[f64],
    mode: RhsMode,
    tol: f64,
) -> Result<Vec<TowerState>> {
    check_time(state0.t)?;
    for &t in times {
        check_time(t)?;
    }
    let nu0 = nu_transform(consts, state0)?;
    let taus: Vec<f64> = times.iter().map(|&t| tau_of(t)).collect();
    let mut sys = NuSystem::new(consts, mode);
    let ys = integrate_adaptive(&mut sys, tau_of(state0.t), &pack(&nu0), &taus, AdaptiveOptions::with_tol(tol), |tau, y| {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(LabError::BlowDown { t: t_of(tau), detail: "non-finite modulation parameters".into() });
        }
        Ok(())
    })?;
    ys.iter().zip(times).map(|(y, &t)| nu_inverse(consts, &unpack(t, y))).collect()
}
