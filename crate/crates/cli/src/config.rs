//! Per-command run configurations. Every field has a default, so a config
//! file only lists what it changes; unknown keys are rejected.

use crate::error::{CliError, CliResult};
use bubble_tower::functionals::MorawetzParams;
use bubble_tower::grid::{GridKind, GridSpec};
use bubble_tower::pde::{Boundary, TimeIntegrator};
use bubble_tower::sampling::SampleSpec;
use bubble_tower::tower::{
    constants, default_eps, InitRelation, RhsMode, ShootingConfig, TowerConstants,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

/// Tower commands need `k >= 3`.
fn tower_constants(k: u32, j: usize) -> CliResult<TowerConstants> {
    if k < 3 {
        return Err(CliError::Usage(format!("tower commands need k >= 3, got {k}")));
    }
    Ok(constants(k, j)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeExactConfig {
    pub k: u32,
    #[serde(rename = "J")]
    pub j: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
}

impl Default for OdeExactConfig {
    fn default() -> Self {
        Self { k: 3, j: 2, t_start: -1e4, t_end: -1e2, samples: 100 }
    }
}

impl OdeExactConfig {
    pub fn constants(&self) -> CliResult<TowerConstants> {
        if !(self.t_start < self.t_end && self.t_end < 0.0) || self.samples < 2 {
            return Err(CliError::Usage("need t_start < t_end < 0 and at least two samples".into()));
        }
        tower_constants(self.k, self.j)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeShootConfig {
    pub k: u32,
    #[serde(rename = "J")]
    pub j: usize,
    pub t0: f64,
    pub t_boot: f64,
    /// `ε_0, ..., ε_J`; the default chain when absent.
    pub eps: Option<Vec<f64>>,
    pub rhs_mode: RhsMode,
    pub init_relation: InitRelation,
    pub bisection_tol: f64,
    pub max_iter: usize,
    pub steps_per_unit: usize,
}

impl Default for OdeShootConfig {
    fn default() -> Self {
        Self {
            k: 3,
            j: 2,
            t0: -1e4,
            t_boot: -1e2,
            eps: None,
            rhs_mode: RhsMode::Leading,
            init_relation: InitRelation::AsPrinted,
            bisection_tol: 1e-15,
            max_iter: 60,
            steps_per_unit: 60,
        }
    }
}

impl OdeShootConfig {
    pub fn resolve(&self) -> CliResult<(TowerConstants, ShootingConfig)> {
        let consts = tower_constants(self.k, self.j)?;
        let cfg = ShootingConfig {
            t0: self.t0,
            t_boot: self.t_boot,
            eps: self.eps.clone().unwrap_or_else(|| default_eps(&consts)),
            bisection_tol: self.bisection_tol,
            max_iter: self.max_iter,
            rhs_mode: self.rhs_mode,
            init_relation: self.init_relation,
            steps_per_unit: self.steps_per_unit,
        };
        cfg.validate(&consts)?;
        Ok((consts, cfg))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeEvolveConfig {
    pub k: u32,
    #[serde(rename = "J")]
    pub j: usize,
    pub t0: f64,
    pub t_end: f64,
    /// Unstable coordinates `ν_{0,2..J}`; zero when absent.
    pub nu0: Option<Vec<f64>>,
    pub eps: Option<Vec<f64>>,
    pub init_relation: InitRelation,
    pub r_max: f64,
    /// Grid size; when absent, the larger of 4096 and 32 points per
    /// innermost core.
    pub n: Option<usize>,
    pub cfl: f64,
    pub time_integrator: TimeIntegrator,
    pub boundary: Boundary,
    pub snapshot_cadence: f64,
    /// Decompose every snapshot.
    pub track: bool,
    pub newton_tol: f64,
}

impl Default for PdeEvolveConfig {
    fn default() -> Self {
        Self {
            k: 3,
            j: 1,
            t0: -2.0,
            t_end: -1.0,
            nu0: None,
            eps: None,
            init_relation: InitRelation::AsPrinted,
            r_max: 20.0,
            n: None,
            cfl: 0.5,
            time_integrator: TimeIntegrator::Rk4,
            boundary: Boundary::DirichletAsymptotic,
            snapshot_cadence: 0.25,
            track: true,
            newton_tol: 1e-10,
        }
    }
}

impl PdeEvolveConfig {
    pub fn resolve(&self) -> CliResult<(TowerConstants, ShootingConfig)> {
        let consts = tower_constants(self.k, self.j)?;
        if !(self.t0 < self.t_end && self.t_end < 0.0) {
            return Err(CliError::Usage(format!("need t0 < t_end < 0, got ({}, {})", self.t0, self.t_end)));
        }
        let cfg = ShootingConfig {
            t0: self.t0,
            t_boot: self.t_end,
            eps: self.eps.clone().unwrap_or_else(|| default_eps(&consts)),
            bisection_tol: 1e-15,
            max_iter: 60,
            rhs_mode: RhsMode::Leading,
            init_relation: self.init_relation,
            steps_per_unit: 60,
        };
        cfg.validate(&consts)?;
        Ok((consts, cfg))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecomposeConfig {
    /// Signs; alternating when absent.
    pub iota: Option<Vec<f64>>,
    /// Starting scales; the exact power laws at the snapshot time when
    /// absent.
    pub lambda_guess: Option<Vec<f64>>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self { iota: None, lambda_guess: None, max_iter: 50, tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MorawetzSampleConfig {
    pub k: u32,
    pub lambdas: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub morawetz: MorawetzParams,
    pub grid: GridSpec,
    /// Gaussian sample layout; spread around the bubbles when absent.
    pub sample: Option<SampleSpec>,
}

impl Default for MorawetzSampleConfig {
    fn default() -> Self {
        Self {
            k: 3,
            lambdas: vec![1.0, 1e-2],
            trials: 100,
            seed: 0,
            morawetz: MorawetzParams::default(),
            grid: GridSpec { kind: GridKind::LogUniform, r_min: 1e-6, r_max: 1e3, n: 4096 },
            sample: None,
        }
    }
}
