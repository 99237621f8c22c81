//! Command-line front end: experiment orchestration, deterministic seeding,
//! CSV/JSON/SVG artifact emission.

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

use sticky_flows::cells::{
    drift_test, enumerate_cells, vectors_at_cell, PiecewiseLinearFn,
};
use sticky_flows::coalescing::{
    fit_splitting_exponent, simulate_coalescing, splitting_curve, CoalescingSystem,
};
use sticky_flows::config::{parse_list, require_positive, resolve, FileParams};
use sticky_flows::covariance::CovarianceModel;
use sticky_flows::error::Result;
use sticky_flows::exits::{
    asymptotic_slope, ball_exit_time_check, estimate_theta, gamma_const, radial_f0, run_exits,
    ExitExperiment, KUIPER_CRITICAL_1PCT,
};
use sticky_flows::kernels::{
    bin_correlation, density_stats, filter_kernel, spde_evolve, KernelField,
};
use sticky_flows::npoint::{simulate, Driver, Path as SimPath, SimConfig};
use sticky_flows::output::{Artifacts, SvgSeries};
use sticky_flows::sticky::{occupation_statistics, simulate_sticky, StickyParams};
use sticky_flows::theta::{build_family, ThetaMethod};
use sticky_flows::Scaled;

#[derive(Parser)]
#[command(name = "sticky-flows", version, about = "Sticky Brownian motions and stochastic flows of kernels: simulation and Monte Carlo experiments")]
struct Cli {
    /// Master seed; all sub-streams derive from it deterministically.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Never affects results.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory (fallback: $STICKY_FLOWS_OUT, then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Config file with flat `key = value` lines; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Suppress timestamps so artifacts are byte-reproducible.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

/// Model parameters shared by the simulation subcommands.
#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Covariance length-scale parameter.
    #[arg(long)]
    a: Option<f64>,
    /// Independent-noise strength.
    #[arg(long)]
    b: Option<f64>,
    /// Scaling parameter n of the prelimit model.
    #[arg(long)]
    n: Option<u32>,
}

impl ModelArgs {
    fn resolve(&self, file: &FileParams) -> Result<Scaled> {
        let a = require_positive(resolve(self.a, file, "a", 1.0)?, "a")?;
        let b = require_positive(resolve(self.b, file, "b", 1.0)?, "b")?;
        let n = resolve(self.n, file, "n", 100u32)?;
        Scaled::new(CovarianceModel::gaussian(a)?, n, b)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Tabulate the splitting-rate family theta(k:l).
    Theta {
        /// Largest k+l to tabulate.
        #[arg(long)]
        nmax: Option<usize>,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        /// quadrature | mc | nu
        #[arg(long)]
        method: Option<String>,
        /// Quadrature tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Monte Carlo sample count.
        #[arg(long)]
        samples: Option<u64>,
        /// Emit only k <= l rows (the rest follow by symmetry).
        #[arg(long)]
        fold: bool,
    },

    /// Enumerate the cells (weak orderings) of R^N with their direction vectors.
    Cells {
        /// Dimension N.
        #[arg(long)]
        dim: Option<usize>,
    },

    /// Martingale-problem drift test for a piecewise linear test function.
    Marttest {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of coordinates.
        #[arg(long)]
        coords: Option<usize>,
        /// absdiff (|x1 - x2|) | hinge (positive part of the top block).
        #[arg(long)]
        function: Option<String>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        replicas: Option<usize>,
        /// Clustering tolerance for the compensator, in units of 1/n.
        #[arg(long)]
        delta: Option<f64>,
    },

    /// Simulate the prelimit N-point motion and write the path.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated start coordinates.
        #[arg(long)]
        x0: Option<String>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// dense | fourier
        #[arg(long)]
        driver: Option<String>,
        /// Fourier feature count (fourier driver only).
        #[arg(long)]
        features: Option<usize>,
        /// Keep every k-th step in the artifacts.
        #[arg(long)]
        every: Option<usize>,
        /// Also write the path in the compact binary format.
        #[arg(long)]
        binary: bool,
    },

    /// Simulate the sticky reference diffusion directly.
    Sticky {
        /// Stickiness parameter theta.
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        z0: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Output grid step.
        #[arg(long)]
        dt_out: Option<f64>,
        /// Half-width of the occupation band (0 = exact zero set).
        #[arg(long)]
        delta: Option<f64>,
    },

    /// Exit experiment from the diagonal: mean exit time, cell histogram,
    /// inverted theta estimates.
    Exits {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of coordinates.
        #[arg(long)]
        coords: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        replicas: Option<usize>,
        /// Single-linkage gap for exit-state classification.
        #[arg(long)]
        gap: Option<f64>,
        /// Step-budget horizon per replica.
        #[arg(long)]
        horizon: Option<f64>,
    },

    /// Radial comparison function f0 for the exit-time asymptotics.
    Radial {
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        /// Dimension N.
        #[arg(long)]
        dim: Option<usize>,
        /// Table endpoint in units of b/a.
        #[arg(long)]
        rmax: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },

    /// Ball exit-time and exit-direction check against the Bessel-like limit.
    Ballcheck {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        coords: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
    },

    /// Coalescing Brownian motions: splitting-probability curve, or a single
    /// system path when --starts is given.
    Coalesce {
        /// Comma-separated start points (non-increasing) for path mode.
        #[arg(long)]
        starts: Option<String>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Comma-separated r/R ratios for curve mode.
        #[arg(long)]
        ratios: Option<String>,
        #[arg(long)]
        trials: Option<u64>,
    },

    /// Stochastic kernel density: SPDE evolution and/or the matched particle
    /// filter on a shared field realization.
    Kernel {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        cells: Option<usize>,
        /// Periodic domain length.
        #[arg(long)]
        length: Option<f64>,
        /// spde | filter | both
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        particles: Option<usize>,
        /// Disable the driving field (pure heat equation).
        #[arg(long)]
        no_noise: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = json!({ "error": e.to_string() });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileParams::load(p)?,
        None => FileParams::empty(),
    };
    let seed = resolve(cli.seed, &file, "seed", 1u64)?;
    let workers = resolve(cli.workers, &file, "workers", 0usize)?;
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| sticky_flows::Error::InvalidConfig(e.to_string()))?;
    }
    let out_dir = cli
        .out
        .or_else(|| std::env::var_os("STICKY_FLOWS_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut art = Artifacts::new(out_dir, cli.deterministic)?;
    art.set_meta("seed", seed);

    match cli.cmd {
        Cmd::Theta { nmax, a, b, method, tol, samples, fold } => {
            file.check_known(&["seed", "workers", "nmax", "a", "b", "method", "tol", "samples"])?;
            let nmax = resolve(nmax, &file, "nmax", 5)?;
            let a = require_positive(resolve(a, &file, "a", 1.0)?, "a")?;
            let b = require_positive(resolve(b, &file, "b", 1.0)?, "b")?;
            let tol = require_positive(resolve(tol, &file, "tol", 1e-12)?, "tol")?;
            let samples = resolve(samples, &file, "samples", 10_000_000u64)?;
            let method_name = resolve(method, &file, "method", "quadrature".to_string())?;
            let method = match method_name.as_str() {
                "quadrature" => ThetaMethod::Quadrature { tol },
                "mc" => ThetaMethod::MonteCarlo { samples, seed },
                "nu" => ThetaMethod::Nu { tol },
                other => {
                    return Err(sticky_flows::Error::InvalidConfig(format!(
                        "method must be quadrature|mc|nu, got `{other}`"
                    )))
                }
            };
            art.set_meta("subcommand", "theta");
            art.set_meta("nmax", nmax);
            art.set_meta("a", a);
            art.set_meta("b", b);
            art.set_meta("method", method.name());

            let family = build_family(nmax, a, b, method)?;
            let mut rows = Vec::new();
            for (k, l, v, e) in family.entries() {
                if fold && k > l {
                    continue;
                }
                rows.push(vec![
                    k.to_string(),
                    l.to_string(),
                    format!("{v:.15e}"),
                    format!("{e:.3e}"),
                ]);
            }
            let path = art.write_csv("theta.csv", &["k", "l", "theta", "error_bound"], &rows)?;
            println!("theta table ({} rows) -> {}", rows.len(), path.display());
        }

        Cmd::Cells { dim } => {
            file.check_known(&["seed", "workers", "dim"])?;
            let dim = resolve(dim, &file, "dim", 3)?;
            art.set_meta("subcommand", "cells");
            art.set_meta("dim", dim);
            let cells = enumerate_cells(dim)?;
            let mut rows = Vec::new();
            for (i, c) in cells.iter().enumerate() {
                rows.push(vec![
                    i.to_string(),
                    c.describe(),
                    c.num_blocks().to_string(),
                    vectors_at_cell(c).len().to_string(),
                ]);
            }
            let path =
                art.write_csv("cells.csv", &["index", "cell", "blocks", "directions"], &rows)?;
            println!("{} cells of R^{} -> {}", cells.len(), dim, path.display());
        }

        Cmd::Marttest { model, coords, function, dt, horizon, replicas, delta } => {
            file.check_known(&[
                "seed", "workers", "a", "b", "n", "coords", "function", "dt", "horizon",
                "replicas", "delta",
            ])?;
            let scaled = model.resolve(&file)?;
            let coords = resolve(coords, &file, "coords", 2)?;
            let function = resolve(function, &file, "function", "absdiff".to_string())?;
            let dt = require_positive(resolve(dt, &file, "dt", 1e-6)?, "dt")?;
            let horizon = require_positive(resolve(horizon, &file, "horizon", 0.05)?, "horizon")?;
            let replicas = resolve(replicas, &file, "replicas", 200)?;
            let delta_units = resolve(delta, &file, "delta", 10.0)?;
            let delta = delta_units / f64::from(scaled.n);

            let f = match function.as_str() {
                "absdiff" => PiecewiseLinearFn::abs_diff(coords, 0, 1)?,
                "hinge" => {
                    PiecewiseLinearFn::hinge(coords, &(1..coords).collect::<Vec<_>>(), &[0])?
                }
                other => {
                    return Err(sticky_flows::Error::InvalidConfig(format!(
                        "function must be absdiff|hinge, got `{other}`"
                    )))
                }
            };
            art.set_meta("subcommand", "marttest");
            art.set_meta("a", scaled.base.a);
            art.set_meta("b", scaled.b);
            art.set_meta("n", scaled.n);
            art.set_meta("coords", coords);
            art.set_meta("function", &function);
            art.set_meta("dt", dt);
            art.set_meta("horizon", horizon);
            art.set_meta("replicas", replicas);
            art.set_meta("delta", delta);

            let theta = build_family(
                coords.max(2),
                scaled.base.a,
                scaled.b,
                ThetaMethod::Quadrature { tol: 1e-12 },
            )?;
            let mut paths = Vec::with_capacity(replicas);
            for r in 0..replicas {
                let cfg = SimConfig {
                    scaled: scaled.clone(),
                    x0: vec![0.0; coords],
                    dt,
                    horizon,
                    seed: seed.wrapping_add(r as u64),
                    driver: Driver::Dense,
                };
                paths.push(simulate(&cfg)?);
            }
            let stat = drift_test(&paths, &f, &theta, delta)?;
            let path = art.write_json(
                "marttest.json",
                json!({
                    "mean_drift": stat.mean,
                    "stderr": stat.stderr,
                    "z_score": stat.z_score,
                    "replicas": stat.replicas,
                }),
            )?;
            println!(
                "drift z-score {:.3} over {} replicas -> {}",
                stat.z_score,
                stat.replicas,
                path.display()
            );
        }

        Cmd::Simulate { model, x0, dt, horizon, driver, features, every, binary } => {
            file.check_known(&[
                "seed", "workers", "a", "b", "n", "x0", "dt", "horizon", "driver", "features",
                "every",
            ])?;
            let scaled = model.resolve(&file)?;
            let x0_raw = resolve(x0, &file, "x0", "0,0".to_string())?;
            let x0 = parse_list(&x0_raw, "x0")?;
            let dt = require_positive(resolve(dt, &file, "dt", 1e-5)?, "dt")?;
            let horizon = require_positive(resolve(horizon, &file, "horizon", 0.1)?, "horizon")?;
            let driver_name = resolve(driver, &file, "driver", "dense".to_string())?;
            let features = resolve(features, &file, "features", 256)?;
            let every = resolve(every, &file, "every", 100)?.max(1);
            let driver = match driver_name.as_str() {
                "dense" => Driver::Dense,
                "fourier" => Driver::Fourier { features },
                other => {
                    return Err(sticky_flows::Error::InvalidConfig(format!(
                        "driver must be dense|fourier, got `{other}`"
                    )))
                }
            };
            art.set_meta("subcommand", "simulate");
            art.set_meta("a", scaled.base.a);
            art.set_meta("b", scaled.b);
            art.set_meta("n", scaled.n);
            art.set_meta("x0", &x0_raw);
            art.set_meta("dt", dt);
            art.set_meta("horizon", horizon);
            art.set_meta("driver", &driver_name);
            art.set_meta("every", every);

            let cfg = SimConfig { scaled, x0, dt, horizon, seed, driver };
            let full = simulate(&cfg)?;
            let thin = thin_path(&full, every)?;
            let csv = art.write_path_csv("path.csv", &thin)?;
            if binary {
                art.write_path_binary("path.bin", &thin, dt * every as f64, seed)?;
            }
            let series: Vec<Vec<f64>> = (0..thin.dim())
                .map(|i| thin.states.iter().map(|s| s[i]).collect())
                .collect();
            let labels: Vec<String> = (1..=thin.dim()).map(|i| format!("x{i}")).collect();
            let svg_series: Vec<SvgSeries<'_>> = series
                .iter()
                .zip(&labels)
                .map(|(ys, label)| SvgSeries { label, xs: &thin.times, ys })
                .collect();
            art.write_svg("path.svg", &svg_series)?;
            println!("{} output rows -> {}", thin.len(), csv.display());
        }

        Cmd::Sticky { theta, z0, dt, horizon, dt_out, delta } => {
            file.check_known(&[
                "seed", "workers", "theta", "z0", "dt", "horizon", "dt_out", "delta",
            ])?;
            let theta = require_positive(
                resolve(theta, &file, "theta", 1.0 / std::f64::consts::PI)?,
                "theta",
            )?;
            let z0 = resolve(z0, &file, "z0", 0.0)?;
            let dt = require_positive(resolve(dt, &file, "dt", 1e-5)?, "dt")?;
            let horizon = require_positive(resolve(horizon, &file, "horizon", 1.0)?, "horizon")?;
            let dt_out = require_positive(resolve(dt_out, &file, "dt_out", 1e-3)?, "dt_out")?;
            let delta = resolve(delta, &file, "delta", 0.0)?;
            art.set_meta("subcommand", "sticky");
            art.set_meta("theta", theta);
            art.set_meta("z0", z0);
            art.set_meta("dt", dt);
            art.set_meta("horizon", horizon);
            art.set_meta("dt_out", dt_out);
            art.set_meta("delta", delta);

            let params = StickyParams { theta, z0, horizon, dt, seed };
            let path = simulate_sticky(&params, dt_out)?;
            let (band_time, zero_fraction) = occupation_statistics(&path, delta)?;
            let csv = art.write_path_csv("sticky.csv", &path)?;
            let ys: Vec<f64> = path.scalar_states().collect();
            art.write_svg("sticky.svg", &[SvgSeries { label: "z", xs: &path.times, ys: &ys }])?;
            art.write_json(
                "sticky.json",
                json!({
                    "band_time": band_time,
                    "zero_fraction": zero_fraction,
                }),
            )?;
            println!(
                "sticky path: zero fraction {:.4}, band time {:.4} -> {}",
                zero_fraction,
                band_time,
                csv.display()
            );
        }

        Cmd::Exits { model, coords, epsilon, dt, replicas, gap, horizon } => {
            file.check_known(&[
                "seed", "workers", "a", "b", "n", "coords", "epsilon", "dt", "replicas", "gap",
                "horizon",
            ])?;
            let scaled = model.resolve(&file)?;
            let coords = resolve(coords, &file, "coords", 3)?;
            let epsilon = require_positive(resolve(epsilon, &file, "epsilon", 0.1)?, "epsilon")?;
            let n = f64::from(scaled.n);
            let dt = require_positive(resolve(dt, &file, "dt", 0.01 / (n * n))?, "dt")?;
            let replicas = resolve(replicas, &file, "replicas", 2000)?;
            let gap = require_positive(resolve(gap, &file, "gap", epsilon / 100.0)?, "gap")?;
            let horizon =
                require_positive(resolve(horizon, &file, "horizon", 100.0 * epsilon)?, "horizon")?;
            art.set_meta("subcommand", "exits");
            art.set_meta("a", scaled.base.a);
            art.set_meta("b", scaled.b);
            art.set_meta("n", scaled.n);
            art.set_meta("coords", coords);
            art.set_meta("epsilon", epsilon);
            art.set_meta("dt", dt);
            art.set_meta("replicas", replicas);
            art.set_meta("gap", gap);

            let exp = ExitExperiment {
                sim: SimConfig {
                    scaled,
                    x0: vec![0.0; coords],
                    dt,
                    horizon,
                    seed,
                    driver: Driver::Dense,
                },
                epsilon,
                cluster_gap: gap,
                replicas,
            };
            let stats = run_exits(&exp)?;
            let (total_rate, total_rate_err, estimates) = estimate_theta(&stats)?;
            let cells: serde_json::Map<String, serde_json::Value> = stats
                .cells
                .iter()
                .map(|(upper, count)| {
                    let key = format!(
                        "upper={{{}}}",
                        upper.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")
                    );
                    (key, json!(*count))
                })
                .collect();
            let theta_json: Vec<serde_json::Value> = estimates
                .iter()
                .map(|t| {
                    json!({
                        "k": t.k, "l": t.l,
                        "estimate": t.estimate, "stderr": t.stderr,
                    })
                })
                .collect();
            let path = art.write_json(
                "exits.json",
                json!({
                    "mean_exit_time": stats.mean_exit_time,
                    "stderr_exit_time": stats.stderr_exit_time,
                    "completed": stats.completed,
                    "budget_exceeded": stats.budget_exceeded,
                    "multi_cluster": stats.multi_cluster,
                    "cells": cells,
                    "total_split_rate": total_rate,
                    "total_split_rate_stderr": total_rate_err,
                    "theta_estimates": theta_json,
                }),
            )?;
            println!(
                "mean exit time {:.4e} ({} replicas) -> {}",
                stats.mean_exit_time,
                stats.completed,
                path.display()
            );
        }

        Cmd::Radial { a, b, dim, rmax, points } => {
            file.check_known(&["seed", "workers", "a", "b", "dim", "rmax", "points"])?;
            let a = require_positive(resolve(a, &file, "a", 1.0)?, "a")?;
            let b = require_positive(resolve(b, &file, "b", 1.0)?, "b")?;
            let dim = resolve(dim, &file, "dim", 2)?;
            let rmax_units = require_positive(resolve(rmax, &file, "rmax", 50.0)?, "rmax")?;
            let points = resolve(points, &file, "points", 2000)?;
            art.set_meta("subcommand", "radial");
            art.set_meta("a", a);
            art.set_meta("b", b);
            art.set_meta("dim", dim);
            art.set_meta("rmax", rmax_units);
            art.set_meta("points", points);

            let table = radial_f0(dim, a, b, rmax_units * b / a, points)?;
            let gamma: f64 = gamma_const(dim)?;
            let slope = asymptotic_slope(&table)?;
            let rows: Vec<Vec<String>> = table
                .iter()
                .map(|&(r, f)| vec![format!("{r:.10e}"), format!("{f:.10e}")])
                .collect();
            let csv = art.write_csv("radial.csv", &["r", "f0"], &rows)?;
            let rs: Vec<f64> = table.iter().map(|p| p.0).collect();
            let fs: Vec<f64> = table.iter().map(|p| p.1).collect();
            art.write_svg("radial.svg", &[SvgSeries { label: "f0", xs: &rs, ys: &fs }])?;
            art.write_json(
                "radial.json",
                json!({
                    "gamma": gamma,
                    "asymptotic_slope": slope,
                    "predicted_slope": 1.0 / (gamma * a * b),
                }),
            )?;
            println!(
                "f0 slope {:.6} vs 1/(gamma a b) = {:.6} -> {}",
                slope,
                1.0 / (gamma * a * b),
                csv.display()
            );
        }

        Cmd::Ballcheck { model, coords, epsilon, dt, replicas, horizon } => {
            file.check_known(&[
                "seed", "workers", "a", "b", "n", "coords", "epsilon", "dt", "replicas", "horizon",
            ])?;
            let scaled = model.resolve(&file)?;
            let coords = resolve(coords, &file, "coords", 3)?;
            let epsilon = require_positive(resolve(epsilon, &file, "epsilon", 0.1)?, "epsilon")?;
            let n = f64::from(scaled.n);
            let dt = require_positive(resolve(dt, &file, "dt", 0.01 / (n * n))?, "dt")?;
            let replicas = resolve(replicas, &file, "replicas", 2000)?;
            let horizon =
                require_positive(resolve(horizon, &file, "horizon", 100.0 * epsilon / n)?, "horizon")?;
            art.set_meta("subcommand", "ballcheck");
            art.set_meta("a", scaled.base.a);
            art.set_meta("b", scaled.b);
            art.set_meta("n", scaled.n);
            art.set_meta("coords", coords);
            art.set_meta("epsilon", epsilon);
            art.set_meta("dt", dt);
            art.set_meta("replicas", replicas);

            let sim = SimConfig {
                scaled,
                x0: vec![0.0; coords],
                dt,
                horizon,
                seed,
                driver: Driver::Dense,
            };
            let check = ball_exit_time_check(&sim, epsilon, replicas)?;
            let path = art.write_json(
                "ballcheck.json",
                json!({
                    "mean_exit_time": check.mean_exit_time,
                    "stderr_exit_time": check.stderr_exit_time,
                    "predicted": check.predicted,
                    "kuiper_vstar": check.kuiper_vstar,
                    "kuiper_critical_1pct": KUIPER_CRITICAL_1PCT,
                    "replicas": check.replicas,
                }),
            )?;
            println!(
                "ball exit time {:.4e} vs predicted {:.4e} -> {}",
                check.mean_exit_time,
                check.predicted,
                path.display()
            );
        }

        Cmd::Coalesce { starts, dt, horizon, ratios, trials } => {
            file.check_known(&[
                "seed", "workers", "starts", "dt", "horizon", "ratios", "trials",
            ])?;
            let starts = match starts {
                Some(s) => Some(s),
                None => file.get("starts").map(str::to_string),
            };
            if let Some(raw) = starts {
                let starts = parse_list(&raw, "starts")?;
                let dt = require_positive(resolve(dt, &file, "dt", 1e-6)?, "dt")?;
                let horizon =
                    require_positive(resolve(horizon, &file, "horizon", 1.0)?, "horizon")?;
                art.set_meta("subcommand", "coalesce");
                art.set_meta("starts", &raw);
                art.set_meta("dt", dt);
                art.set_meta("horizon", horizon);

                let sys = CoalescingSystem { starts, dt, seed };
                let (path, merges) = simulate_coalescing(&sys, horizon)?;
                let csv = art.write_path_csv("coalesce.csv", &path)?;
                let rows: Vec<Vec<String>> = merges
                    .iter()
                    .map(|m| {
                        vec![format!("{:.8e}", m.time), m.upper.to_string(), m.lower.to_string()]
                    })
                    .collect();
                art.write_csv("merges.csv", &["time", "upper", "lower"], &rows)?;
                println!("{} merges -> {}", merges.len(), csv.display());
            } else {
                let ratios_raw = resolve(
                    ratios,
                    &file,
                    "ratios",
                    "0.03125,0.0625,0.125,0.25".to_string(),
                )?;
                let ratios = parse_list(&ratios_raw, "ratios")?;
                let trials = resolve(trials, &file, "trials", 1_000_000u64)?;
                art.set_meta("subcommand", "coalesce");
                art.set_meta("ratios", &ratios_raw);
                art.set_meta("trials", trials);

                let points = splitting_curve(&ratios, trials, seed)?;
                let (slope, slope_se) = fit_splitting_exponent(&points)?;
                let rows: Vec<Vec<String>> = points
                    .iter()
                    .map(|p| {
                        vec![
                            format!("{:.6e}", p.ratio),
                            format!("{:.6e}", p.estimate),
                            format!("{:.3e}", p.stderr),
                        ]
                    })
                    .collect();
                let csv =
                    art.write_csv("splitting.csv", &["ratio", "probability", "stderr"], &rows)?;
                let xs: Vec<f64> = points.iter().map(|p| p.ratio.ln()).collect();
                let ys: Vec<f64> =
                    points.iter().map(|p| p.estimate.max(1e-300).ln()).collect();
                art.write_svg("splitting.svg", &[SvgSeries { label: "log p", xs: &xs, ys: &ys }])?;
                art.write_json(
                    "splitting.json",
                    json!({ "exponent": slope, "exponent_stderr": slope_se }),
                )?;
                println!(
                    "splitting exponent {:.3} +- {:.3} -> {}",
                    slope,
                    slope_se,
                    csv.display()
                );
            }
        }

        Cmd::Kernel { model, x0, horizon, dt, cells, length, mode, particles, no_noise } => {
            file.check_known(&[
                "seed", "workers", "a", "b", "n", "x0", "horizon", "dt", "cells", "length",
                "mode", "particles",
            ])?;
            let scaled = model.resolve(&file)?;
            let x0 = resolve(x0, &file, "x0", 0.0)?;
            let horizon = require_positive(resolve(horizon, &file, "horizon", 0.05)?, "horizon")?;
            let dt = require_positive(resolve(dt, &file, "dt", 1e-5)?, "dt")?;
            let cells = resolve(cells, &file, "cells", 256)?;
            let length = require_positive(resolve(length, &file, "length", 4.0)?, "length")?;
            let mode = resolve(mode, &file, "mode", "both".to_string())?;
            let particles = resolve(particles, &file, "particles", 20_000)?;
            art.set_meta("subcommand", "kernel");
            art.set_meta("a", scaled.base.a);
            art.set_meta("b", scaled.b);
            art.set_meta("n", scaled.n);
            art.set_meta("x0", x0);
            art.set_meta("horizon", horizon);
            art.set_meta("dt", dt);
            art.set_meta("cells", cells);
            art.set_meta("length", length);
            art.set_meta("mode", &mode);

            let origin = x0 - length / 2.0;
            let run_spde = mode == "spde" || mode == "both";
            let run_filter = mode == "filter" || mode == "both";
            if !(run_spde || run_filter) {
                return Err(sticky_flows::Error::InvalidConfig(format!(
                    "mode must be spde|filter|both, got `{mode}`"
                )));
            }

            let mut report = serde_json::Map::new();
            let mut spde_field: Option<KernelField> = None;
            if run_spde {
                let mut field = KernelField::point_mass(x0, origin, length, cells)?;
                let diag = spde_evolve(&mut field, &scaled, horizon, dt, seed, !no_noise)?;
                let stats = density_stats(&field, 1e-4);
                report.insert(
                    "spde".to_string(),
                    json!({
                        "steps": diag.steps,
                        "mass_drift": diag.mass_drift,
                        "clipped_fraction": diag.clipped_fraction,
                        "max_mass": stats.max_mass,
                        "entropy": stats.entropy,
                        "support_fraction": stats.support_fraction,
                    }),
                );
                write_density(&art, "kernel_spde", &field)?;
                spde_field = Some(field);
            }
            if run_filter {
                let field =
                    filter_kernel(&scaled, x0, horizon, particles, cells, length, dt, seed)?;
                let stats = density_stats(&field, 1e-4);
                report.insert(
                    "filter".to_string(),
                    json!({
                        "particles": particles,
                        "max_mass": stats.max_mass,
                        "entropy": stats.entropy,
                        "support_fraction": stats.support_fraction,
                    }),
                );
                if let Some(spde) = &spde_field {
                    report.insert(
                        "bin_correlation".to_string(),
                        json!(bin_correlation(spde, &field)?),
                    );
                }
                write_density(&art, "kernel_filter", &field)?;
            }
            let path = art.write_json("kernel.json", serde_json::Value::Object(report))?;
            println!("kernel run -> {}", path.display());
        }
    }
    Ok(())
}

/// Keep every `every`-th state (plus the last) of a path.
fn thin_path(path: &SimPath, every: usize) -> Result<SimPath> {
    let last = path.len() - 1;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for i in (0..path.len()).step_by(every) {
        times.push(path.times[i]);
        states.push(path.states[i].clone());
    }
    if *times.last().unwrap() < path.times[last] {
        times.push(path.times[last]);
        states.push(path.states[last].clone());
    }
    SimPath::new(times, states)
}

fn write_density(art: &Artifacts, stem: &str, field: &KernelField) -> Result<()> {
    let dx = field.cell_width();
    let rows: Vec<Vec<String>> = field
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            vec![
                format!("{:.8e}", field.origin + (i as f64 + 0.5) * dx),
                format!("{v:.8e}"),
            ]
        })
        .collect();
    art.write_csv(&format!("{stem}.csv"), &["y", "density"], &rows)?;
    let xs: Vec<f64> =
        (0..field.cells()).map(|i| field.origin + (i as f64 + 0.5) * dx).collect();
    art.write_svg(
        &format!("{stem}.svg"),
        &[SvgSeries { label: "density", xs: &xs, ys: &field.values }],
    )?;
    Ok(())
}
