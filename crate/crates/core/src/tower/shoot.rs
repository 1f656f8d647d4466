//! Nested bisection over the unstable coordinates `ν_{0,j}`.
//!
//! Trajectories are integrated with a fixed-step Dormand–Prince scheme in
//! `τ = -ln|t|`, so the exit sign is a deterministic function of the data.
//! Level `j` is classified on the subsystem of bubbles `1..=j`; once a
//! level-`j` candidate survives its window the next level is solved with
//! that candidate fixed.

use super::ode::dp_step;
use super::{init_nu_state, pack, t_of, tau_of, unpack, NuState, NuSystem, Rhs, RhsMode, TowerConstants};
use super::InitRelation;
use crate::error::{LabError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootingConfig {
    pub t0: f64,
    pub t_boot: f64,
    /// `ε_0, ε_1, ..., ε_J`.
    pub eps: Vec<f64>,
    /// Bisection stops once the bracket is narrower than this fraction of
    /// the box half-width.
    pub bisection_tol: f64,
    pub max_iter: usize,
    pub rhs_mode: RhsMode,
    #[serde(default)]
    pub init_relation: InitRelation,
    /// Fixed steps per unit of `ln|t|`.
    #[serde(default = "default_steps")]
    pub steps_per_unit: usize,
}

fn default_steps() -> usize {
    60
}

/// Default chain `ε_0 > ε_1 > ... > ε_J`.
pub fn default_eps(consts: &TowerConstants) -> Vec<f64> {
    let kf = consts.k as f64;
    let jn = consts.j;
    let bound = |j: usize| if j == 1 { 2.0 / (kf - 2.0) } else { consts.sigma_plus(j) };
    let mut eps = vec![0.0; jn + 1];
    eps[jn] = 0.5 * bound(jn).min(0.5);
    for j in (1..jn).rev() {
        eps[j] = (0.99 * bound(j)).min(1.2 * eps[j + 1]);
    }
    eps[0] = 0.49f64.min(1.2 * eps[1]);
    eps
}

impl ShootingConfig {
    pub fn default_for(consts: &TowerConstants, t0: f64, t_boot: f64) -> Result<Self> {
        let cfg = Self {
            t0,
            t_boot,
            eps: default_eps(consts),
            bisection_tol: 1e-15,
            max_iter: 60,
            rhs_mode: RhsMode::Leading,
            init_relation: InitRelation::AsPrinted,
            steps_per_unit: default_steps(),
        };
        cfg.validate(consts)?;
        Ok(cfg)
    }

    pub fn validate(&self, consts: &TowerConstants) -> Result<()> {
        let bad = |m: String| Err(LabError::Configuration(m));
        if !(self.t0 < self.t_boot && self.t_boot < 0.0) || !self.t0.is_finite() {
            return bad(format!("need t0 < T_boot < 0, got t0 = {}, T_boot = {}", self.t0, self.t_boot));
        }
        if self.eps.len() != consts.j + 1 {
            return bad(format!("expected {} values of ε, got {}", consts.j + 1, self.eps.len()));
        }
        if self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return bad("each ε must lie in (0, 1)".into());
        }
        if self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("ε must be strictly decreasing: {:?}", self.eps));
        }
        if self.eps[0] >= 0.5 {
            return bad("ε_0 must be below 1/2".into());
        }
        if self.eps[1] >= 2.0 / (consts.k as f64 - 2.0) {
            return bad("ε_1 must be below 2/(k-2)".into());
        }
        for j in 2..=consts.j {
            if self.eps[j] >= consts.sigma_plus(j) {
                return bad(format!("ε_{j} must be below σ_{j},+ = {}", consts.sigma_plus(j)));
            }
        }
        if !(self.bisection_tol > 0.0) || self.max_iter == 0 || self.steps_per_unit < 4 {
            return bad("bisection_tol > 0, max_iter >= 1 and steps_per_unit >= 4 are required".into());
        }
        Ok(())
    }

    fn box_bound(&self, j: usize) -> f64 {
        (-self.t0).powf(-self.eps[j])
    }
}

/// First time a window `|ν_j| ≤ |t|^{-ε_j}` is left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitEvent {
    pub level: usize,
    pub t: f64,
    pub nu: f64,
    /// `d/dt(|t|^{ε_j}|ν_j|)` at the crossing.
    pub derivative: f64,
}

impl ExitEvent {
    pub fn sign(&self) -> f64 {
        self.nu.signum()
    }
}

/// One evaluated candidate of the bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketRecord {
    pub level: usize,
    pub iteration: usize,
    /// Fixed outer coordinates `ν_{0,2..j-1}`.
    pub outer: Vec<f64>,
    pub nu0: f64,
    /// `+1`/`-1` for the exit sign, `0` for a surviving candidate.
    pub sign: f64,
    pub exit_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    /// `max_t |t|^{ε_j}|ν_j(t)|` for `j ≥ 2`.
    pub max_nu_ratio: Vec<f64>,
    /// `max_t |ν̇_j(t)|` for `j ≥ 2`.
    pub max_abs_nudot: Vec<f64>,
    /// `max_t |t|^{ε_1}|λ_1 - 1|`.
    pub max_lambda1_ratio: f64,
    /// `max_t |t||b_1|`.
    pub max_b1_ratio: f64,
    /// `|ν_j(T_boot)|` for `j ≥ 2`.
    pub nu_final: Vec<f64>,
    pub all_hold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingReport {
    pub nu0_star: Vec<f64>,
    pub trajectory: Vec<NuState>,
    pub window: WindowReport,
    /// Candidates evaluated per level `j = 2..=J`.
    pub iterations: Vec<usize>,
    pub history: Vec<BracketRecord>,
    pub exits: Vec<ExitEvent>,
    /// Every recorded exit had a positive outward derivative.
    pub exit_rule_consistent: bool,
    /// Exit signs were monotone in `ν_{0,j}` for every bracket searched.
    pub monotone: bool,
    pub grid_scans: usize,
}

enum RunOutcome {
    Exit(ExitEvent),
    Survived(Vec<NuState>),
}

struct Driver<'a> {
    consts: &'a TowerConstants,
    cfg: &'a ShootingConfig,
    subs: Vec<TowerConstants>,
    history: Vec<BracketRecord>,
    exits: Vec<ExitEvent>,
    iterations: Vec<usize>,
    monotone: bool,
    grid_scans: usize,
}

enum Level {
    Found(Vec<f64>, Vec<NuState>),
    /// An outer level left its window once inner levels were added.
    Outer(ExitEvent),
    /// No surviving candidate at a nested level.
    Unresolved,
}

impl TowerConstants {
    /// Constants of the first `j` bubbles.
    pub fn truncated(&self, j: usize) -> TowerConstants {
        TowerConstants {
            k: self.k,
            j,
            alpha: self.alpha[..j].to_vec(),
            gamma: self.gamma[..j].to_vec(),
            kappa: self.kappa,
            modes: self.modes[..j.saturating_sub(1)].to_vec(),
        }
    }
}

fn window_ratio(eps: f64, tau: f64, nu: f64) -> f64 {
    (-eps * tau).exp() * nu.abs()
}

impl<'a> Driver<'a> {
    /// Integrate the subsystem of `nu0.len() + 1` bubbles, halting at the
    /// first window exit among levels `2..=nu0.len()+1`.
    fn run(&mut self, nu0: &[f64]) -> Result<RunOutcome> {
        let sub = &self.subs[nu0.len()];
        let cfg = self.cfg;
        let mut sys = NuSystem::new(sub, cfg.rhs_mode);
        let tau0 = tau_of(cfg.t0);
        let tau1 = tau_of(cfg.t_boot);
        let n = ((tau1 - tau0) * cfg.steps_per_unit as f64).ceil() as usize;
        let h = (tau1 - tau0) / n as f64;
        let mut y = pack(&init_nu_state(sub, cfg, nu0));
        let mut traj = vec![unpack(cfg.t0, &y)];
        let levels = nu0.len();
        for step in 0..n {
            let tau = tau0 + step as f64 * h;
            let (y_new, _) = dp_step(&mut sys, tau, &y, h)?;
            if y_new.iter().any(|v| !v.is_finite()) {
                return Err(LabError::Instability { t: t_of(tau), detail: "non-finite modulation state".into() });
            }
            let tau_new = if step + 1 == n { tau1 } else { tau + h };
            let exited: Vec<usize> = (0..levels)
                .filter(|&m| window_ratio(cfg.eps[m + 2], tau_new, y_new[2 + 2 * m]) > 1.0)
                .collect();
            if !exited.is_empty() {
                return Ok(RunOutcome::Exit(self.locate_exit(&mut sys, tau, &y, h, &exited)?));
            }
            y = y_new;
            traj.push(unpack(t_of(tau_new), &y));
        }
        Ok(RunOutcome::Survived(traj))
    }

    /// Earliest crossing inside a step, found by bisection on partial steps.
    fn locate_exit(&self, sys: &mut NuSystem, tau: f64, y: &[f64], h: f64, exited: &[usize]) -> Result<ExitEvent> {
        let eps = &self.cfg.eps;
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for &m in exited {
            let (mut lo, mut hi) = (0.0, 1.0);
            let mut y_hi = dp_step(sys, tau, y, h)?.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let ym = dp_step(sys, tau, y, mid * h)?.0;
                if window_ratio(eps[m + 2], tau + mid * h, ym[2 + 2 * m]) > 1.0 {
                    hi = mid;
                    y_hi = ym;
                } else {
                    lo = mid;
                }
            }
            if best.as_ref().is_none_or(|b| hi < b.0) {
                best = Some((hi, m, y_hi));
            }
        }
        let (theta, m, yc) = best.expect("at least one exited level");
        let tau_c = tau + theta * h;
        let mut dy = vec![0.0; yc.len()];
        sys.eval(tau_c, &yc, &mut dy)?;
        let e = eps[m + 2];
        let nu = yc[2 + 2 * m];
        // d/dτ(e^{-ετ}|ν|) has the sign of d/dt(|t|^ε|ν|).
        let derivative = (-e * tau_c).exp() * nu.signum() * (dy[2 + 2 * m] - e * nu) * (-tau_c).exp();
        Ok(ExitEvent { level: m + 2, t: t_of(tau_c), nu, derivative })
    }

    fn classify(&mut self, outer: &[f64], x: f64, iteration: usize) -> Result<std::result::Result<Level, f64>> {
        let level = outer.len() + 2;
        let mut nu0 = outer.to_vec();
        nu0.push(x);
        let outcome = self.run(&nu0)?;
        self.iterations[level - 2] += 1;
        let (sign, exit_t, result) = match outcome {
            RunOutcome::Exit(ev) => {
                self.exits.push(ev.clone());
                let s = ev.sign();
                let t = ev.t;
                if ev.level < level {
                    (s, Some(t), Ok(Level::Outer(ev)))
                } else {
                    (s, Some(t), Err(s))
                }
            }
            RunOutcome::Survived(traj) if level == self.consts.j => (0.0, None, Ok(Level::Found(nu0, traj))),
            RunOutcome::Survived(traj) => match self.solve(&nu0)? {
                Level::Outer(ev) if ev.level == level => (ev.sign(), Some(ev.t), Err(ev.sign())),
                Level::Unresolved => {
                    // the candidate is not yet close enough to the stable
                    // manifold: classify by the terminal unstable coordinate
                    let last = traj.last().expect("non-empty trajectory");
                    let (pu, _) = self.consts.mode(level).project(last.nu[level - 2], last.nudot[level - 2]);
                    let s = if pu >= 0.0 { 1.0 } else { -1.0 };
                    (s, None, Err(s))
                }
                other => (0.0, None, Ok(other)),
            },
        };
        self.history.push(BracketRecord { level, iteration, outer: outer.to_vec(), nu0: x, sign, exit_t });
        Ok(result)
    }

    /// Solve level `outer.len() + 2` with the outer coordinates fixed.
    fn solve(&mut self, outer: &[f64]) -> Result<Level> {
        let bound = self.cfg.box_bound(outer.len() + 2);
        self.solve_bracket(outer, -bound, bound)
    }

    fn solve_bracket(&mut self, outer: &[f64], mut lo: f64, mut hi: f64) -> Result<Level> {
        let level = outer.len() + 2;
        let bound = self.cfg.box_bound(level);
        let nested = !outer.is_empty();
        let mut seen: Vec<(f64, f64)> = Vec::new();
        let mut iter = 0usize;
        let mut s_lo = match self.classify(outer, lo, iter)? {
            Ok(l) => return Ok(l),
            Err(s) => s,
        };
        iter += 1;
        seen.push((lo, s_lo));
        let s_hi = match self.classify(outer, hi, iter)? {
            Ok(l) => return Ok(l),
            Err(s) => s,
        };
        iter += 1;
        seen.push((hi, s_hi));
        if s_lo == s_hi && nested {
            return Ok(Level::Unresolved);
        }
        if s_lo == s_hi {
            // no sign change across the bracket: scan a grid for one
            self.grid_scans += 1;
            let (a, b) = (lo, hi);
            let mut prev = (lo, s_lo);
            let mut found = false;
            for i in 1..64 {
                let x = a + (b - a) * i as f64 / 64.0;
                let s = match self.classify(outer, x, iter)? {
                    Ok(l) => return Ok(l),
                    Err(s) => s,
                };
                iter += 1;
                seen.push((x, s));
                if s != prev.1 {
                    lo = prev.0;
                    s_lo = prev.1;
                    hi = x;
                    found = true;
                    break;
                }
                prev = (x, s);
            }
            if !found {
                return Err(LabError::ShootingFailed {
                    level,
                    detail: "no sign change of the exit on a 64-point scan".into(),
                });
            }
        }
        while iter < self.cfg.max_iter + 2 && hi - lo > self.cfg.bisection_tol * bound {
            let mid = 0.5 * (lo + hi);
            let s = match self.classify(outer, mid, iter)? {
                Ok(l) => {
                    self.check_monotone(&seen);
                    return Ok(l);
                }
                Err(s) => s,
            };
            iter += 1;
            seen.push((mid, s));
            if s == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.check_monotone(&seen);
        if nested {
            return Ok(Level::Unresolved);
        }
        let tail: Vec<String> = self
            .history
            .iter()
            .rev()
            .filter(|r| r.level == level)
            .take(6)
            .map(|r| format!("({:.17e}, {:+})", r.nu0, r.sign))
            .collect();
        Err(LabError::ShootingFailed {
            level,
            detail: format!("bracket [{lo:e}, {hi:e}] after {iter} candidates; last {}", tail.join(" ")),
        })
    }

    fn check_monotone(&mut self, seen: &[(f64, f64)]) {
        let mut v = seen.to_vec();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let changes = v.windows(2).filter(|w| w[0].1 != w[1].1).count();
        if changes > 1 {
            self.monotone = false;
        }
    }
}

fn window_report(consts: &TowerConstants, cfg: &ShootingConfig, traj: &[NuState]) -> WindowReport {
    let m = consts.j - 1;
    let mut max_nu_ratio = vec![0.0f64; m];
    let mut max_abs_nudot = vec![0.0f64; m];
    let mut max_l1 = 0.0f64;
    let mut max_b1 = 0.0f64;
    for s in traj {
        let at = -s.t;
        for i in 0..m {
            max_nu_ratio[i] = max_nu_ratio[i].max(at.powf(cfg.eps[i + 2]) * s.nu[i].abs());
            max_abs_nudot[i] = max_abs_nudot[i].max(s.nudot[i].abs());
        }
        max_l1 = max_l1.max(at.powf(cfg.eps[1]) * (s.lambda1 - 1.0).abs());
        max_b1 = max_b1.max(at * s.b1.abs());
    }
    let nu_final = traj.last().map(|s| s.nu.iter().map(|v| v.abs()).collect()).unwrap_or_default();
    let all_hold = max_nu_ratio.iter().all(|&r| r <= 1.0)
        && max_abs_nudot.iter().all(|&r| r <= 1.0)
        && max_l1 <= 1.0
        && max_b1 <= 1.0;
    WindowReport { max_nu_ratio, max_abs_nudot, max_lambda1_ratio: max_l1, max_b1_ratio: max_b1, nu_final, all_hold }
}

impl<'a> Driver<'a> {
    fn new(consts: &'a TowerConstants, cfg: &'a ShootingConfig) -> Self {
        Driver {
            consts,
            cfg,
            subs: (1..=consts.j).map(|j| consts.truncated(j)).collect(),
            history: Vec::new(),
            exits: Vec::new(),
            iterations: vec![0; consts.j.saturating_sub(1)],
            monotone: true,
            grid_scans: 0,
        }
    }
}

/// Find `ν_0*` whose trajectory stays in every window on `[t0, T_boot]`.
pub fn shoot(consts: &TowerConstants, cfg: &ShootingConfig) -> Result<ShootingReport> {
    cfg.validate(consts)?;
    let mut driver = Driver::new(consts, cfg);
    let (nu0_star, trajectory) = if consts.j == 1 {
        match driver.run(&[])? {
            RunOutcome::Survived(traj) => (Vec::new(), traj),
            RunOutcome::Exit(ev) => {
                return Err(LabError::ShootingFailed { level: 1, detail: format!("unexpected exit {ev:?}") })
            }
        }
    } else {
        match driver.solve(&[])? {
            Level::Found(nu0, traj) => (nu0, traj),
            Level::Outer(ev) => {
                return Err(LabError::ShootingFailed { level: ev.level, detail: format!("outer exit {ev:?}") })
            }
            Level::Unresolved => unreachable!("the outermost level reports failure directly"),
        }
    };
    let window = window_report(consts, cfg, &trajectory);
    let exit_rule_consistent = driver.exits.iter().all(|e| e.derivative > 0.0);
    Ok(ShootingReport {
        nu0_star,
        trajectory,
        window,
        iterations: driver.iterations,
        history: driver.history,
        exits: driver.exits,
        exit_rule_consistent,
        monotone: driver.monotone,
        grid_scans: driver.grid_scans,
    })
}
