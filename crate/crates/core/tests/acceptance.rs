//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line with its
//! measured values and runtime; the process fails if a gating criterion
//! fails. Criterion 10 is reported but does not gate.

use bubble_tower::functionals::{energy, MorawetzParams, Probe};
use bubble_tower::grid::{FieldPair, RadialGrid, ScalarField};
use bubble_tower::modulation::{decompose, track, NewtonOptions, TrackContext};
use bubble_tower::ops::{apply_operator, hdot1_sq, OperatorKind};
use bubble_tower::pde::{build_initial_data, evolve, tower_data, SolverConfig};
use bubble_tower::profiles::{
    interaction_inner_product, kappa, lambda_q, q_profile, OrthogonalityProfile, TowerConfig,
};
use bubble_tower::quad::{log_trapezoid, log_trapezoid_dy_over_y};
use bubble_tower::sampling::{random_field, random_pair, trial_rng, Orthogonalizer, SampleSpec};
use bubble_tower::tower::{
    constants, exact_solution, exponent_fit, integrate, nu_inverse, nu_transform, ode_rhs, shoot, NuState,
    RhsMode, ShootingConfig, TowerConstants,
};
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn log_grid(n: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::log_uniform(1e-6, 1e3, n).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn c1_constants() -> Outcome {
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let g = log_grid(8192);
    for k in 2..=5u32 {
        let kf = k as f64;
        let kap = log_trapezoid(|y| lambda_q(k, y).powi(2), -40.0, 40.0, 0.01);
        worst.0 = worst.0.max(rel(kap, 2.0 * PI / (PI / kf).sin()));
        let q = FieldPair { u: ScalarField::from_fn(&g, |r| q_profile(k, r)), udot: ScalarField::zeros(&g) };
        worst.1 = worst.1.max(rel(energy(&q, k), 4.0 * PI * kf));
        let residue = log_trapezoid_dy_over_y(|y| lambda_q(k, y).powi(3) * 4.0 * y.powf(-kf), -40.0, 40.0, 0.01);
        worst.2 = worst.2.max(rel(residue, 8.0 * kf * kf));
        assert!(rel(kappa(k), 2.0 * PI / (PI / kf).sin()) < 1e-15);
    }
    outcome(
        worst.0 < 1e-8 && worst.1 < 1e-8 && worst.2 < 1e-6,
        format!("kappa rel {:.1e}, E[Q] rel {:.1e}, residue rel {:.1e}", worst.0, worst.1, worst.2),
    )
}

fn c2_operators() -> Outcome {
    let k = 3;
    let mut lq_err = 0.0f64;
    for y in (0..2000).map(|i| 10f64.powf(-6.0 + 9.0 * i as f64 / 1999.0)) {
        lq_err = lq_err.max((lambda_q(k, y) - k as f64 * q_profile(k, y).sin()).abs());
    }
    let bump = |r: f64| r.powi(3) * (-(r.ln()).powi(2)).exp();
    let mut errs = [Vec::new(), Vec::new(), Vec::new()];
    for n in [1024, 2048, 4096] {
        let g = log_grid(n);
        let lq = ScalarField::from_fn(&g, |r| lambda_q(k, r));
        errs[0].push(apply_operator(k, &OperatorKind::HScaled(1.0), &lq).unwrap().norm_l2());
        errs[1].push(apply_operator(k, &OperatorKind::AScaled(1.0), &lq).unwrap().norm_l2());
        let f = ScalarField::from_fn(&g, bump);
        let h = apply_operator(k, &OperatorKind::HScaled(0.7), &f).unwrap();
        let a = apply_operator(k, &OperatorKind::AScaled(0.7), &f).unwrap();
        let asa = apply_operator(k, &OperatorKind::AstarScaled(0.7), &a).unwrap();
        errs[2].push(asa.sub(&h).norm_l2() / h.norm_l2());
    }
    let order = |e: &Vec<f64>| (e[0] / e[1]).log2().min((e[1] / e[2]).log2());
    let orders: Vec<f64> = errs.iter().map(order).collect();
    outcome(
        lq_err < 1e-13 && orders.iter().all(|p| *p >= 2.0),
        format!(
            "|ΛQ - k sin Q| {lq_err:.1e}; orders HΛQ {:.2}, AΛQ {:.2}, A*A-H {:.2}",
            orders[0], orders[1], orders[2]
        ),
    )
}

fn c3_interaction() -> Outcome {
    let k = 3u32;
    let kf = k as f64;
    let defect = |eps: f64| {
        let cfg = TowerConfig::alternating(k, vec![1.0, eps]).unwrap();
        let ip = interaction_inner_product(&cfg, 1);
        let iota = cfg.iota[0] * cfg.iota[1];
        (ip / (iota * 8.0 * kf * kf * eps.powi(3)) - 1.0, ip / (8.0 * kf * kf * eps.powi(3)))
    };
    let (a, la) = defect(1e-2);
    let (b, _) = defect(1e-3);
    outcome(
        a.abs() <= 0.05 && a.abs() >= 5.0 * b.abs(),
        format!(
            "defect {a:.3e} at 1e-2, {b:.3e} at 1e-3 (factor {:.1}); unsigned ratio {la:.4}",
            a.abs() / b.abs()
        ),
    )
}

fn c4_exact_ode() -> Outcome {
    let mut worst = 0.0f64;
    for k in 3..=5u32 {
        for jn in 1..=4usize {
            let c = constants(k, jn).unwrap();
            for i in 0..100 {
                let t = -10f64.powf(1.0 + 5.0 * i as f64 / 99.0);
                let s = exact_solution(&c, t).unwrap();
                let d = ode_rhs(&c, &s, RhsMode::Leading).unwrap();
                for j in 1..=jn {
                    let a = c.alpha[j - 1];
                    let lt = a * c.gamma[j - 1] * (-t).powf(-a - 1.0);
                    let bt = -a * (a + 1.0) * c.gamma[j - 1] * (-t).powf(-a - 2.0);
                    let scale_l = lt.abs().max(f64::MIN_POSITIVE);
                    worst = worst.max((d.lambda[j - 1] - lt).abs() / scale_l.max(s.lambda[j - 1] / -t));
                    if j > 1 {
                        worst = worst.max((d.b[j - 1] - bt).abs() / bt.abs());
                    } else {
                        worst = worst.max(d.b[0].abs());
                    }
                }
            }
        }
    }
    outcome(worst < 1e-12, format!("max relative residual {worst:.2e}"))
}

/// Exponent of `|t|` in a linear perturbation of `ν_j` along one
/// eigenvector, in the subsystem of the first `j` bubbles.
fn fitted_exponent(c: &TowerConstants, j: usize, unstable: bool, t0: f64, t1: f64, amp: f64) -> f64 {
    let m = c.mode(j);
    let col = if unstable { 0 } else { 1 };
    let mut nu = vec![0.0; j - 1];
    let mut nudot = vec![0.0; j - 1];
    nu[j - 2] = amp * m.p[0][col];
    nudot[j - 2] = amp * m.p[1][col];
    let state = nu_inverse(c, &NuState { t: t0, lambda1: 1.0, b1: 0.0, nu, nudot, nuhatdot: None }).unwrap();
    let times: Vec<f64> = (0..40).map(|i| t0 * (t1 / t0).powf(i as f64 / 39.0)).collect();
    let traj = integrate(c, &state, &times, RhsMode::Leading, 1e-13).unwrap();
    let coord: Vec<f64> = traj
        .iter()
        .map(|s| {
            let n = nu_transform(c, s).unwrap();
            let (pu, ps) = m.project(n.nu[j - 2], n.nudot[j - 2]);
            if unstable {
                pu
            } else {
                ps
            }
        })
        .collect();
    // ν ∝ e^{στ} = |t|^{-σ}
    -exponent_fit(&times, &coord).unwrap().slope
}

fn c5_eigen() -> Outcome {
    let k = 3u32;
    let kf = k as f64;
    let c = constants(k, 3).unwrap();
    let resid = c.max_diagonalization_residual();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for j in 2..=3 {
        let sub = c.truncated(j);
        let sp = sub.sigma_plus(j);
        let sm = sub.sigma_minus(j);
        let fp = fitted_exponent(&sub, j, true, -1e3, -1e2, 1e-10);
        let span = if j == 2 { -2e2 } else { -7e2 };
        let fm = fitted_exponent(&sub, j, false, -1e3, span, 1e-6);
        worst = worst.max(rel(fp, sp)).max(rel(fm, sm));
        let a = c.alpha[j - 1];
        let h = a + 0.5;
        let printed = ((h * h + (kf - 1.0) * a * (a + 1.0)).sqrt() - h, -(h * h + (kf - 1.0) * a * (a + 1.0)).sqrt() - h);
        parts.push(format!(
            "j={j}: σ+ {sp:.4} fit {fp:.4}, σ- {sm:.4} fit {fm:.4} ((k-1)-discriminant values {:.4}, {:.4})",
            printed.0, printed.1
        ));
    }
    outcome(resid < 1e-12 && worst < 0.05, format!("residual {resid:.1e}; {}", parts.join("; ")))
}

fn c6_shooting() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for jn in [2usize, 3] {
        let c = constants(3, jn).unwrap();
        for mode in [RhsMode::Leading, RhsMode::FullInteraction] {
            let mut cfg = ShootingConfig::default_for(&c, -1e4, -1e2).unwrap();
            cfg.rhs_mode = mode;
            match shoot(&c, &cfg) {
                Ok(rep) => {
                    let ok = rep.window.all_hold && rep.exit_rule_consistent;
                    pass &= ok;
                    let ratio = rep.window.max_nu_ratio.iter().fold(0.0f64, |m, x| m.max(*x));
                    parts.push(format!(
                        "J={jn} {mode:?}: ν0* {:.3e}, max |t|^ε|ν| {ratio:.3e}, iters {:?}, exits {}",
                        rep.nu0_star.last().copied().unwrap_or(0.0),
                        rep.iterations,
                        rep.exits.len()
                    ));
                }
                Err(e) => {
                    pass = false;
                    parts.push(format!("J={jn} {mode:?}: {e}"));
                }
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn c7_morawetz() -> Outcome {
    let g = log_grid(4096);
    let cfg = TowerConfig::alternating(3, vec![1.0, 1e-2]).unwrap();
    let probe = Probe::new(&cfg, &g).unwrap();
    let spec = SampleSpec::around(&cfg);
    let params = MorawetzParams { delta0: 0.1, ..Default::default() };
    let mut mins = Vec::new();
    let mut all_positive = true;
    for seed in [20_240_917u64, 7] {
        let mut min = f64::INFINITY;
        for trial in 0..100 {
            let pair = random_pair(&g, &spec, &mut trial_rng(seed, trial));
            match probe.monotonicity_defect(&params, &pair) {
                Ok(rec) => {
                    all_positive &= rec.ratio > 0.0;
                    min = min.min(rec.ratio);
                }
                Err(_) => all_positive = false,
            }
        }
        mins.push(min);
    }
    let spread = (mins[0] - mins[1]).abs() / mins[0].max(mins[1]);
    outcome(
        all_positive && spread <= 0.2,
        format!("min ratios {:.4e}, {:.4e} (spread {:.1}%)", mins[0], mins[1], 100.0 * spread),
    )
}

fn c8_decomposition() -> Outcome {
    let g = log_grid(8192);
    let opts = NewtonOptions::default();
    let mut worst_l = 0.0f64;
    let mut worst_b = 0.0f64;
    let mut worst_res = 0.0f64;
    let cases = [
        (vec![1.0, 1e-2], vec![0.0, 2e-3], vec![1.1, 0.9e-2]),
        (vec![1.3, 4e-3, 2e-5], vec![1e-3, -4e-4, 3e-6], vec![1.2, 4.3e-3, 1.9e-5]),
        (vec![0.8, 1e-3], vec![-2e-2, 5e-4], vec![0.85, 1.05e-3]),
    ];
    for (seed, (lambda, b, guess)) in cases.iter().enumerate() {
        let cfg = TowerConfig::alternating(3, lambda.clone()).unwrap().with_b(b.clone()).unwrap();
        let orth = Orthogonalizer::new(&cfg, &g, &OrthogonalityProfile::cutoff(3).unwrap()).unwrap();
        let spec = SampleSpec::around(&cfg);
        let gu = orth.project(&random_field(&g, &spec, &mut trial_rng(seed as u64, 0)));
        let gd = orth.project(&random_field(&g, &spec, &mut trial_rng(seed as u64, 1)));
        let gu = gu.scale(1e-4 / hdot1_sq(3, &gu).sqrt());
        let gd = gd.scale(1e-4 / gd.norm_l2());
        let base = tower_data(&cfg, &g);
        let pair = FieldPair { u: base.u.add(&gu), udot: base.udot.add(&gd) };
        let d = decompose(&pair, 3, &cfg.iota, guess, &opts).unwrap();
        for j in 0..cfg.len() {
            worst_l = worst_l.max(rel(d.cfg.lambda[j], cfg.lambda[j]));
            worst_b = worst_b.max((d.cfg.b[j] - cfg.b[j]).abs());
        }
        worst_res = worst_res.max(d.max_residual());
    }
    // scaling covariance
    let cfg = TowerConfig::alternating(3, vec![1.0, 1e-2]).unwrap().with_b(vec![1e-3, 1e-3]).unwrap();
    let mu = 2.5;
    let scaled = TowerConfig::alternating(3, vec![mu, mu * 1e-2]).unwrap().with_b(vec![1e-3, 1e-3]).unwrap();
    let a = decompose(&tower_data(&cfg, &g), 3, &cfg.iota, &[1.1, 1.1e-2], &opts).unwrap();
    let s = decompose(&tower_data(&scaled, &g), 3, &cfg.iota, &[2.2, 2.7e-2], &opts).unwrap();
    let mut cov = 0.0f64;
    for j in 0..2 {
        cov = cov.max(rel(s.cfg.lambda[j], mu * a.cfg.lambda[j])).max((s.cfg.b[j] - a.cfg.b[j]).abs());
    }
    outcome(
        worst_l < 1e-9 && worst_b < 1e-9 && worst_res < 1e-10 && cov < 1e-9,
        format!(
            "λ rel {worst_l:.1e}, b abs {worst_b:.1e}, residual {worst_res:.1e}, scaling covariance {cov:.1e}"
        ),
    )
}

fn static_run(n: usize) -> (f64, f64) {
    let cfg = SolverConfig { snapshot_cadence: 0.5, ..SolverConfig::uniform(3, 20.0, n) };
    let grid = cfg.build_grid().unwrap();
    let q = FieldPair { u: ScalarField::from_fn(&grid, |r| q_profile(3, r)), udot: ScalarField::zeros(&grid) };
    let rec = evolve(&cfg, &q, (0.0, 1.0)).unwrap();
    assert!(rec.completed());
    let last = rec.snapshots.last().unwrap();
    (hdot1_sq(3, &last.u.sub(&q.u)).sqrt(), rec.energy_drift())
}

fn c9_pde() -> Outcome {
    let (dev, drift) = static_run(4096);
    let devs: Vec<f64> = [256, 512, 1024].iter().map(|&n| static_run(n).0).collect();
    let order = (devs[0] / devs[1]).log2().min((devs[1] / devs[2]).log2());
    outcome(
        dev <= 1e-4 && drift <= 1e-6 && order >= 2.0,
        format!(
            "n=4096: ‖u-Q‖ {dev:.2e}, energy drift {drift:.2e}; deviations {:.2e}, {:.2e}, {:.2e} (order {order:.2})",
            devs[0], devs[1], devs[2]
        ),
    )
}

fn c10_pipeline() -> Outcome {
    let c = constants(3, 2).unwrap();
    let (t0, t1) = (-8.0, -4.0);
    let shooting = ShootingConfig::default_for(&c, t0, t1).unwrap();
    // centre of the unstable box: data on the exact power laws
    let nu0 = vec![0.0];
    let lambda2 = c.lambda_ex(2, t0);
    let dr = lambda2 / 32.0;
    let r_max = 10.0;
    let n = (r_max / dr).ceil() as usize;
    let solver = SolverConfig { snapshot_cadence: 0.5, ..SolverConfig::uniform(3, r_max, n) };
    let grid = solver.build_grid().unwrap();
    let (pair0, cfg0) = match build_initial_data(&c, &shooting, &nu0, &grid) {
        Ok(v) => v,
        Err(e) => return outcome(false, format!("initial data: {e}")),
    };
    let rec = evolve(&solver, &pair0, (t0, t1)).unwrap();
    let opts = NewtonOptions { tol: 1e-10, ..Default::default() };
    let ctx = TrackContext { consts: &c, shooting: &shooting };
    let series = track(&rec, &cfg0.iota, &cfg0.lambda, &opts, Some(ctx)).unwrap();
    if series.frames.is_empty() {
        return outcome(false, "no frame could be decomposed".to_string());
    }
    let first = &series.frames[0].decomposition.cfg;
    let start = bubble_tower::tower::TowerState { t: t0, lambda: first.lambda.clone(), b: first.b.clone() };
    let times: Vec<f64> = series.frames.iter().map(|f| f.t).collect();
    let ode = integrate(&c, &start, &times, RhsMode::FullInteraction, 1e-12).unwrap();
    let ode_leading = integrate(&c, &start, &times, RhsMode::Leading, 1e-12).unwrap();
    let l2: Vec<f64> = series.frames.iter().map(|f| f.decomposition.cfg.lambda[1]).collect();
    let monotone = l2.windows(2).all(|w| w[1] > w[0]);
    let last = series.frames.len() - 1;
    let dev = rel(l2[last], ode[last].lambda[1]);
    let dev_leading = rel(l2[last], ode_leading[last].lambda[1]);
    let reached = series.frames[last].t;
    let status = if rec.completed() && series.failure.is_none() && reached == t1 {
        String::new()
    } else {
        format!(" stopped at t = {reached} ({:?} / {:?})", rec.failure, series.failure)
    };
    outcome(
        dev <= 0.15 && monotone && status.is_empty(),
        format!(
            "n = {n}, dt = {:.2e}; λ2 PDE {:.5e} vs ODE {:.5e} at t = {reached} (deviation {:.2}%, {:.2}% against the leading system), monotone {monotone}, energy drift {:.1e}, max boundary flux {:.1e}{status}",
            rec.dt,
            l2[last],
            ode[last].lambda[1],
            100.0 * dev,
            100.0 * dev_leading,
            rec.energy_drift(),
            rec.diagnostics.iter().fold(0.0f64, |m, d| m.max(d.boundary_flux.abs()))
        ),
    )
}

fn main() {
    let criteria: [(&str, &str, bool, fn() -> Outcome); 10] = [
        ("1", "closed-form constants", true, c1_constants),
        ("2", "operator identities", true, c2_operators),
        ("3", "interaction asymptotics", true, c3_interaction),
        ("4", "exact modulation solution", true, c4_exact_ode),
        ("5", "linearized eigenstructure", true, c5_eigen),
        ("6", "shooting", true, c6_shooting),
        ("7", "Morawetz monotonicity", true, c7_morawetz),
        ("8", "decomposition round trip", true, c8_decomposition),
        ("9", "PDE sanity", true, c9_pde),
        ("10", "pipeline (non-gating)", false, c10_pipeline),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, name, gating, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {id:>2} {name} ({secs:.3} s): {}", out.detail);
        if !out.pass && gating {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        eprintln!("gating criteria failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
