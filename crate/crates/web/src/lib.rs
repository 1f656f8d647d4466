//! Browser bindings for the bubble-tower laboratory. Every export returns
//! a JSON string; errors surface as JavaScript exceptions.

use bubble_tower::functionals::energy;
use bubble_tower::modulation::{decompose, NewtonOptions};
use bubble_tower::profiles::{lambda_q, multibubble, TowerConfig};
use bubble_tower::sampling::{random_pair, trial_rng, SampleSpec};
use bubble_tower::tower::constants;
use bubble_tower::{FieldPair, LabError, RadialGrid, ScalarField};
use serde_json::json;
use std::f64::consts::PI;
use std::sync::Arc;
use wasm_bindgen::prelude::*;

type Out = std::result::Result<String, LabError>;

fn to_js(r: Out) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

fn tower(k: u32, lambdas: &[f64]) -> Result<TowerConfig, LabError> {
    TowerConfig::alternating(k, lambdas.to_vec())
}

/// Grid wide enough for every scale in the tower.
fn grid_for(lambdas: &[f64], n: usize) -> Result<Arc<RadialGrid>, LabError> {
    let lo = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().cloned().fold(0.0, f64::max);
    Ok(Arc::new(RadialGrid::log_uniform(lo * 1e-6, hi * 1e3, n)?))
}

fn static_pair(cfg: &TowerConfig, grid: &Arc<RadialGrid>) -> FieldPair {
    FieldPair {
        u: ScalarField::from_fn(grid, |r| multibubble(cfg, r)),
        udot: ScalarField::zeros(grid),
    }
}

pub fn constants_json(k: u32, j: usize) -> Out {
    Ok(json!(constants(k, j)?).to_string())
}

/// Profile and energy density `π (u_r² + k² sin² u / r²) r` sampled on
/// `points` log-spaced radii in `[r_lo, r_hi]`.
pub fn profile_json(k: u32, lambdas: &[f64], r_lo: f64, r_hi: f64, points: usize) -> Out {
    let cfg = tower(k, lambdas)?;
    if !(r_lo > 0.0 && r_lo < r_hi) || points < 2 {
        return Err(LabError::Parameter(
            "need 0 < r_lo < r_hi and at least two points".into(),
        ));
    }
    let kf = k as f64;
    let (mut r, mut u, mut e) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..points {
        let x = r_lo * (r_hi / r_lo).powf(i as f64 / (points - 1) as f64);
        let ux = multibubble(&cfg, x);
        let ur: f64 = cfg
            .iota
            .iter()
            .zip(&cfg.lambda)
            .map(|(s, l)| s * lambda_q(k, x / l))
            .sum::<f64>()
            / x;
        r.push(x);
        u.push(ux);
        e.push(PI * (ur * ur + kf * kf * ux.sin().powi(2) / (x * x)) * x);
    }
    let grid = grid_for(lambdas, 8192)?;
    let total = energy(&static_pair(&cfg, &grid), k);
    Ok(json!({
        "r": r,
        "u": u,
        "energy_density": e,
        "energy": total,
        "bubble_energy": 4.0 * PI * kf,
    })
    .to_string())
}

/// Perturbs a static tower by `noise` times a random Gaussian field,
/// starts Newton from scales off by `offset` and reports what it recovers.
pub fn recover_json(k: u32, lambdas: &[f64], noise: f64, offset: f64, seed: u64) -> Out {
    let cfg = tower(k, lambdas)?;
    let grid = grid_for(lambdas, 4096)?;
    let mut pair = static_pair(&cfg, &grid);
    let bump = random_pair(&grid, &SampleSpec::around(&cfg), &mut trial_rng(seed, 0));
    let scale = noise / bump.u.max_abs().max(f64::MIN_POSITIVE);
    pair.u.axpy(scale, &bump.u);
    let guess: Vec<f64> = lambdas.iter().map(|l| l * (1.0 + offset)).collect();
    let d = decompose(&pair, k, &cfg.iota, &guess, &NewtonOptions::default())?;
    Ok(json!({
        "true_lambda": lambdas,
        "guess": guess,
        "lambda": d.cfg.lambda,
        "b": d.cfg.b,
        "iterations": d.iterations,
        "max_residual": d.max_residual(),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn tower_constants(k: u32, j: usize) -> Result<String, JsValue> {
    to_js(constants_json(k, j))
}

#[wasm_bindgen]
pub fn tower_profile(
    k: u32,
    lambdas: Vec<f64>,
    r_lo: f64,
    r_hi: f64,
    points: usize,
) -> Result<String, JsValue> {
    to_js(profile_json(k, &lambdas, r_lo, r_hi, points))
}

#[wasm_bindgen]
pub fn recover_scales(
    k: u32,
    lambdas: Vec<f64>,
    noise: f64,
    offset: f64,
    seed: u64,
) -> Result<String, JsValue> {
    to_js(recover_json(k, &lambdas, noise, offset, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: Out) -> Value {
        serde_json::from_str(&s.unwrap()).unwrap()
    }

    #[test]
    fn constants_export() {
        let v = parse(constants_json(3, 3));
        assert_eq!(v["alpha"][2], 8.0);
        assert!(constants_json(2, 2).is_err());
    }

    #[test]
    fn profile_energy_counts_bubbles() {
        let v = parse(profile_json(2, &[1.0, 1e-2], 1e-4, 1e2, 200));
        let ratio = v["energy"].as_f64().unwrap() / v["bubble_energy"].as_f64().unwrap();
        assert!((ratio - 2.0).abs() < 0.05, "{ratio}");
        assert_eq!(v["r"].as_array().unwrap().len(), 200);
        assert!(profile_json(2, &[1.0], 1.0, 0.5, 10).is_err());
    }

    #[test]
    fn recovery_without_noise_is_exact() {
        let v = parse(recover_json(3, &[1.0, 1e-2], 0.0, 0.05, 1));
        for (got, want) in v["lambda"].as_array().unwrap().iter().zip([1.0, 1e-2]) {
            assert!((got.as_f64().unwrap() / want - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn recovery_with_noise_stays_close() {
        let v = parse(recover_json(3, &[1.0, 1e-2], 1e-3, 0.05, 1));
        assert!(v["max_residual"].as_f64().unwrap() < 1e-10);
        for (got, want) in v["lambda"].as_array().unwrap().iter().zip([1.0, 1e-2]) {
            assert!((got.as_f64().unwrap() / want - 1.0).abs() < 1e-2);
        }
    }
}
