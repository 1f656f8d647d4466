//! `bubble-tower` command-line driver.
//!
//! Exit status: 0 success, 1 failed check, 2 usage or configuration
//! error, 3 numerical failure.

mod config;
mod error;
mod verify;

use bubble_tower::functionals::Probe;
use bubble_tower::io::{fmt_f64, load_snapshot, save_snapshot, write_csv, SnapshotHeader};
use bubble_tower::modulation::{decompose, track, NewtonOptions, TrackContext};
use bubble_tower::ops::{norm, NormKind};
use bubble_tower::pde::{build_initial_data, evolve, SolverConfig};
use bubble_tower::profiles::{alternating_signs, TowerConfig};
use bubble_tower::sampling::{random_pair, trial_rng, SampleSpec};
use bubble_tower::tower::{constants, exact_solution, nu_transform, ode_rhs, shoot, NuState, RhsMode};
use clap::{Args, Parser, Subcommand};
use config::{DecomposeConfig, MorawetzSampleConfig, OdeExactConfig, OdeShootConfig, PdeEvolveConfig};
use error::{CliError, CliResult};
use serde::Serialize;
use serde_json::json;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "bubble-tower", version, about = "Bubble-tower laboratory for k-corotational wave maps")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the seed of sampling commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sampling commands.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Identity and constant checks; JSON report on standard output.
    Verify {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Constants of the construction as JSON.
    Constants {
        #[arg(long)]
        k: u32,
        #[arg(long = "J", short = 'J')]
        j: usize,
    },
    /// Exact power-law solution of the modulation system.
    OdeExact,
    /// Nested-bisection shooting for the unstable coordinates.
    OdeShoot,
    /// PDE evolution of stable-manifold data with snapshots.
    PdeEvolve,
    /// Modulation decomposition of a snapshot file.
    Decompose {
        /// WMS1 snapshot.
        snapshot: PathBuf,
    },
    /// Sampled Morawetz monotonicity defects.
    MorawetzSample,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Verify { .. } => "verify",
            Command::Constants { .. } => "constants",
            Command::OdeExact => "ode-exact",
            Command::OdeShoot => "ode-shoot",
            Command::PdeEvolve => "pde-evolve",
            Command::Decompose { .. } => "decompose",
            Command::MorawetzSample => "morawetz-sample",
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let g = &cli.global;
    if g.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let cfg = g.config.as_deref();
    match &cli.command {
        Command::Verify { inject_fault } => cmd_verify(g, *inject_fault),
        Command::Constants { k, j } => cmd_constants(g, *k, *j),
        Command::OdeExact => cmd_ode_exact(g, config::load(cfg)?),
        Command::OdeShoot => cmd_ode_shoot(g, config::load(cfg)?),
        Command::PdeEvolve => cmd_pde_evolve(g, config::load(cfg)?),
        Command::Decompose { snapshot } => cmd_decompose(g, snapshot, config::load(cfg)?),
        Command::MorawetzSample => cmd_morawetz_sample(g, config::load(cfg)?),
    }
    .map_err(|e| e.context(cli.command.name()))
}

fn out_dir(g: &Global) -> CliResult<PathBuf> {
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_table(path: &Path, columns: &[String], rows: &[Vec<f64>]) -> CliResult<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_csv(&mut f, columns, rows)?;
    f.flush()?;
    Ok(())
}

/// Resolved configuration, seed, thread count and version of a run.
fn write_metadata<T: Serialize>(dir: &Path, command: &str, g: &Global, config: &T) -> CliResult<()> {
    write_json(
        &dir.join("metadata.json"),
        &json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "seed": g.seed,
            "threads": g.threads,
        }),
    )
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn cmd_verify(g: &Global, fault: bool) -> CliResult<()> {
    let report = verify::run(fault)?;
    print_json(&report)?;
    if let Some(dir) = &g.out {
        fs::create_dir_all(dir)?;
        write_metadata(dir, "verify", g, &json!({ "inject_fault": fault }))?;
    }
    if !report.all_pass {
        let failed: Vec<String> =
            report.checks.iter().filter(|c| !c.pass).map(|c| format!("{} (k = {})", c.name, c.k)).collect();
        return Err(CliError::Check(failed.join(", ")));
    }
    Ok(())
}

fn cmd_constants(g: &Global, k: u32, j: usize) -> CliResult<()> {
    if k < 3 {
        return Err(CliError::Usage(format!("tower constants need k >= 3, got {k}")));
    }
    let c = constants(k, j)?;
    print_json(&c)?;
    if let Some(dir) = &g.out {
        fs::create_dir_all(dir)?;
        write_metadata(dir, "constants", g, &json!({ "k": k, "J": j }))?;
    }
    Ok(())
}

fn state_columns(j: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=j).map(|i| format!("lambda_{i}")));
    cols.extend((1..=j).map(|i| format!("b_{i}")));
    cols
}

fn nu_columns(j: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "lambda_1".into(), "b_1".into()];
    for i in 2..=j {
        cols.push(format!("nu_{i}"));
        cols.push(format!("nudot_{i}"));
    }
    cols
}

fn nu_row(s: &NuState) -> Vec<f64> {
    let mut row = vec![s.t, s.lambda1, s.b1];
    for (n, d) in s.nu.iter().zip(&s.nudot) {
        row.push(*n);
        row.push(*d);
    }
    row
}

fn cmd_ode_exact(g: &Global, cfg: OdeExactConfig) -> CliResult<()> {
    let c = cfg.constants()?;
    let dir = out_dir(g)?;
    let mut cols = state_columns(cfg.j);
    cols.push("residual".into());
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..cfg.samples {
        let x = i as f64 / (cfg.samples - 1) as f64;
        let t = -((-cfg.t_start).ln() * (1.0 - x) + (-cfg.t_end).ln() * x).exp();
        let s = exact_solution(&c, t)?;
        let d = ode_rhs(&c, &s, RhsMode::Leading)?;
        let mut res = 0.0f64;
        for jj in 2..=cfg.j {
            let a = c.alpha[jj - 1];
            let bt = -a * (a + 1.0) * c.gamma[jj - 1] * (-t).powf(-a - 2.0);
            res = res.max((d.b[jj - 1] / bt - 1.0).abs());
        }
        worst = worst.max(res);
        let mut row = vec![t];
        row.extend(&s.lambda);
        row.extend(&s.b);
        row.push(res);
        rows.push(row);
    }
    write_table(&dir.join("exact.csv"), &cols, &rows)?;
    let summary = json!({ "k": cfg.k, "J": cfg.j, "samples": cfg.samples, "max_residual": worst });
    write_json(&dir.join("summary.json"), &summary)?;
    write_metadata(&dir, "ode-exact", g, &cfg)?;
    print_json(&summary)
}

fn cmd_ode_shoot(g: &Global, cfg: OdeShootConfig) -> CliResult<()> {
    let (c, shooting) = cfg.resolve()?;
    let dir = out_dir(g)?;
    write_metadata(&dir, "ode-shoot", g, &json!({ "run": cfg, "shooting": shooting }))?;
    let report = shoot(&c, &shooting)?;
    let rows: Vec<Vec<f64>> = report.trajectory.iter().map(nu_row).collect();
    write_table(&dir.join("trajectory.csv"), &nu_columns(cfg.j), &rows)?;
    let summary = json!({
        "nu0_star": report.nu0_star,
        "window_report": report.window,
        "iterations": report.iterations,
        "exits": report.exits,
        "exit_rule_consistent": report.exit_rule_consistent,
        "monotone": report.monotone,
        "grid_scans": report.grid_scans,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(&dir.join("history.json"), &report.history)?;
    print_json(&summary)
}

fn cmd_pde_evolve(g: &Global, cfg: PdeEvolveConfig) -> CliResult<()> {
    let (c, shooting) = cfg.resolve()?;
    let nu0 = cfg.nu0.clone().unwrap_or_else(|| vec![0.0; cfg.j - 1]);
    let lambda_j = bubble_tower::tower::stable_manifold_init(&c, &shooting, &nu0)?.lambda[cfg.j - 1];
    let n = cfg.n.unwrap_or_else(|| 4096.max((cfg.r_max * 32.0 / lambda_j).ceil() as usize));
    let solver = SolverConfig {
        cfl: cfg.cfl,
        time_integrator: cfg.time_integrator,
        boundary: cfg.boundary,
        snapshot_cadence: cfg.snapshot_cadence,
        ..SolverConfig::uniform(cfg.k, cfg.r_max, n)
    };
    let grid = solver.build_grid()?;
    let dir = out_dir(g)?;
    write_metadata(&dir, "pde-evolve", g, &json!({ "run": cfg, "solver": solver, "shooting": shooting }))?;
    let (pair0, tower0) = build_initial_data(&c, &shooting, &nu0, &grid)?;
    let rec = evolve(&solver, &pair0, (cfg.t0, cfg.t_end))?;
    let snaps = dir.join("snapshots");
    fs::create_dir_all(&snaps)?;
    for (i, (t, pair)) in rec.times.iter().zip(&rec.snapshots).enumerate() {
        let header = SnapshotHeader::new(cfg.k, cfg.j, *t, grid.spec());
        save_snapshot(&snaps.join(format!("snap_{i:05}.wms1")), &header, pair)?;
    }
    let cols: Vec<String> = ["t", "energy", "max_abs_udot", "boundary_flux"].iter().map(|s| s.to_string()).collect();
    let mut rows = vec![vec![rec.times[0], rec.energy_series[0], pair0.udot.max_abs(), 0.0]];
    for (d, e) in rec.diagnostics.iter().zip(&rec.energy_series[1..]) {
        rows.push(vec![d.t, *e, d.max_abs_udot, d.boundary_flux]);
    }
    write_table(&dir.join("energy.csv"), &cols, &rows)?;
    let mut tracked = serde_json::Value::Null;
    if cfg.track {
        let opts = NewtonOptions { tol: cfg.newton_tol, ..Default::default() };
        let ctx = TrackContext { consts: &c, shooting: &shooting };
        let series = track(&rec, &tower0.iota, &tower0.lambda, &opts, Some(ctx))?;
        let mut cols = state_columns(cfg.j);
        cols.extend((1..=cfg.j).map(|i| format!("bhat_{i}")));
        for i in 2..=cfg.j {
            cols.push(format!("nu_{i}"));
            cols.push(format!("nudot_{i}"));
        }
        cols.push("orthogonality_residual".into());
        cols.push("window_all".into());
        let rows: Vec<Vec<f64>> = series
            .frames
            .iter()
            .map(|f| {
                let d = &f.decomposition;
                let mut row = vec![f.t];
                row.extend(&d.cfg.lambda);
                row.extend(&d.cfg.b);
                row.extend(&d.bhat);
                if let Some(nu) = &f.nu {
                    for (a, b) in nu.nu.iter().zip(&nu.nudot) {
                        row.push(*a);
                        row.push(*b);
                    }
                }
                row.push(d.max_residual());
                row.push(f.window.as_ref().map_or(f64::NAN, |w| if w.all() { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        write_table(&dir.join("parameters.csv"), &cols, &rows)?;
        tracked = json!({
            "frames": series.frames.len(),
            "failure": series.failure.as_ref().map(|(t, m)| json!({ "t": t, "message": m })),
        });
    }
    let summary = json!({
        "n": n,
        "dt": rec.dt,
        "snapshots": rec.snapshots.len(),
        "completed": rec.completed(),
        "failure": rec.failure.as_ref().map(|(t, m)| json!({ "t": t, "message": m })),
        "energy_drift": rec.energy_drift(),
        "reflection_time": rec.reflection_time,
        "tracking": tracked,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    print_json(&summary)?;
    if let Some((t, m)) = &rec.failure {
        return Err(CliError::Numerical(format!("evolution stopped at t = {t}: {m}; partial outputs written")));
    }
    Ok(())
}

fn cmd_decompose(g: &Global, snapshot: &Path, cfg: DecomposeConfig) -> CliResult<()> {
    let (header, pair) = load_snapshot(snapshot)?;
    let j = header.j;
    let iota = cfg.iota.clone().unwrap_or_else(|| alternating_signs(j));
    let guess = match &cfg.lambda_guess {
        Some(l) => l.clone(),
        None if j == 1 => vec![1.0],
        None if header.t < 0.0 && header.k >= 3 => exact_solution(&constants(header.k, j)?, header.t)?.lambda,
        None => return Err(CliError::Usage("lambda_guess is required for this snapshot".into())),
    };
    let opts = NewtonOptions { max_iter: cfg.max_iter, tol: cfg.tol };
    let d = decompose(&pair, header.k, &iota, &guess, &opts)?;
    let mut summary = json!({
        "t": header.t,
        "k": header.k,
        "J": j,
        "iota": d.cfg.iota,
        "lambda": d.cfg.lambda,
        "b": d.cfg.b,
        "bhat": d.bhat,
        "residuals_u": d.residuals_u,
        "residuals_udot": d.residuals_udot,
        "iterations": d.iterations,
        "g_hdot1": norm(header.k, &NormKind::Hdot1, &d.g)?,
    });
    if header.t < 0.0 && header.k >= 3 && j >= 2 {
        let c = constants(header.k, j)?;
        let state = bubble_tower::tower::TowerState { t: header.t, lambda: d.cfg.lambda.clone(), b: d.cfg.b.clone() };
        let nu = nu_transform(&c, &state)?;
        summary["nu"] = json!(nu.nu);
        summary["nudot"] = json!(nu.nudot);
    }
    if let Some(dir) = &g.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("decomposition.json"), &summary)?;
        write_metadata(dir, "decompose", g, &json!({ "snapshot": snapshot, "params": cfg }))?;
    }
    print_json(&summary)
}

fn cmd_morawetz_sample(g: &Global, mut cfg: MorawetzSampleConfig) -> CliResult<()> {
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if cfg.trials == 0 {
        return Err(CliError::Usage("trials must be positive".into()));
    }
    cfg.morawetz.validate()?;
    let tower = TowerConfig::alternating(cfg.k, cfg.lambdas.clone())?;
    let grid = Arc::new(cfg.grid.build()?);
    let spec = cfg.sample.unwrap_or_else(|| SampleSpec::around(&tower));
    spec.validate()?;
    let probe = Probe::new(&tower, &grid)?;
    let dir = out_dir(g)?;
    write_metadata(&dir, "morawetz-sample", g, &json!({ "run": cfg, "sample": spec }))?;
    let trials: Vec<u64> = (0..cfg.trials).collect();
    let chunk = trials.len().div_ceil(g.threads);
    let results: Vec<bubble_tower::Result<Vec<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = trials
            .chunks(chunk)
            .map(|ts| {
                let (probe, grid, cfg) = (&probe, &grid, &cfg);
                s.spawn(move || {
                    ts.iter()
                        .map(|&t| {
                            let pair = random_pair(grid, &spec, &mut trial_rng(cfg.seed, t));
                            let rec = probe.monotonicity_defect(&cfg.morawetz, &pair)?;
                            Ok(vec![t as f64, rec.lhs, rec.mor_sq, rec.ratio])
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    let rows = results.into_iter().collect::<bubble_tower::Result<Vec<_>>>()?;
    let cols: Vec<String> = ["trial", "lhs", "mor_sq", "ratio"].iter().map(|s| s.to_string()).collect();
    write_table(&dir.join("samples.csv"), &cols, &rows)?;
    let (argmin, min) = rows.iter().map(|r| (r[0], r[3])).fold((f64::NAN, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let all_positive = rows.iter().all(|r| r[3] > 0.0);
    let summary = json!({
        "trials": cfg.trials,
        "seed": cfg.seed,
        "min_ratio": min,
        "argmin": argmin as u64,
        "min_ratio_text": fmt_f64(min),
        "all_positive": all_positive,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    print_json(&summary)?;
    if !all_positive {
        return Err(CliError::Check(format!("non-positive monotonicity ratio {min:e} at trial {argmin}")));
    }
    Ok(())
}
