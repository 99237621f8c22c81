//! Acceptance gate: one check per criterion, each printing a single
//! PASS/FAIL line. Runs under `cargo test`; pass criterion names (for
//! example `c06`) as arguments to run a subset:
//! `cargo test --test acceptance -- c06 c07`.

use sticky_flows::cells::{
    apply_operator, drift_test, enumerate_cells, PiecewiseLinearFn,
};
use sticky_flows::coalescing::{fit_splitting_exponent, splitting_curve};
use sticky_flows::covariance::CovarianceModel;
use sticky_flows::exits::{
    asymptotic_slope, ball_exit_time_check, estimate_theta, gamma_const, radial_f0, run_exits,
    ExitExperiment, KUIPER_CRITICAL_1PCT,
};
use sticky_flows::kernels::{
    bin_correlation, density_stats, filter_kernel, spde_evolve, KernelField,
};
use sticky_flows::npoint::{
    simulate, two_point_difference_timechange, Driver, Path, SimConfig,
};
use sticky_flows::sticky::{occupation_statistics, simulate_sticky, StickyParams};
use sticky_flows::theta::{
    build_family, theta_from_nu, theta_montecarlo, theta_quadrature, ThetaMethod,
};
use sticky_flows::Scaled;

use std::f64::consts::PI;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id:2} [{status}] {name}: {detail}");
    assert!(pass, "criterion {id} failed ({name}): {detail}");
}

fn model(a: f64, n: u32, b: f64) -> Scaled {
    Scaled::new(CovarianceModel::gaussian(a).unwrap(), n, b).unwrap()
}

/// Keep every `every`-th state (plus the last one) of a path.
fn thin(path: &Path, every: usize) -> Path {
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
    Path::new(times, states).unwrap()
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

fn c01_theta_closed_form_anchor() {
    let mut worst = 0.0f64;
    for &(a, b) in &[(1.0, 1.0), (1.3, 0.7), (2.0, 0.25)] {
        let v = theta_quadrature::<f64>(1, 1, a, b, 1e-13).unwrap();
        worst = worst.max((v - a * b / (2.0 * PI)).abs());
    }
    report(
        1,
        "theta(1:1) = ab/(2 pi)",
        worst <= 1e-10,
        &format!("max |error| = {worst:.2e} (tolerance 1e-10)"),
    );
}

fn c02_consistency_and_symmetry() {
    let fam = build_family(8, 1.2, 0.8, ThetaMethod::Quadrature { tol: 1e-13 }).unwrap();
    let mut worst_c = 0.0f64;
    let mut worst_s = 0.0f64;
    for k in 1..=7 {
        for l in 1..=7 {
            if k + l > 8 {
                continue;
            }
            worst_s = worst_s.max((fam.get(k, l).unwrap() - fam.get(l, k).unwrap()).abs());
            if k + l < 8 {
                let r = fam.get(k, l).unwrap()
                    - fam.get(k + 1, l).unwrap()
                    - fam.get(k, l + 1).unwrap();
                worst_c = worst_c.max(r.abs());
            }
        }
    }
    report(
        2,
        "consistency + symmetry, k+l <= 8",
        worst_c <= 1e-10 && worst_s <= 1e-10,
        &format!("max consistency residual {worst_c:.2e}, max asymmetry {worst_s:.2e}"),
    );
}

fn c03_three_way_theta_agreement() {
    let tol = 1e-12;
    let mut detail = String::new();
    let mut pass = true;
    for &(k, l) in &[(1usize, 1usize), (1, 2), (2, 2), (1, 3)] {
        let q = theta_quadrature::<f64>(k, l, 1.0, 1.0, tol).unwrap();
        let (mc, se) = theta_montecarlo(k, l, 1.0, 1.0, 10_000_000, 2024).unwrap();
        let nu = theta_from_nu::<f64>(k, l, 1.0, 1.0, tol).unwrap();
        let ok = (q - mc).abs() <= 3.0 * se && (q - nu).abs() <= 2.0 * tol;
        pass &= ok;
        detail.push_str(&format!(
            "({k}:{l}) |q-mc|/se={:.2} |q-nu|={:.1e}; ",
            (q - mc).abs() / se,
            (q - nu).abs()
        ));
    }
    report(3, "quadrature vs MC(1e7) vs nu-moment", pass, &detail);
}

fn c04_speed_measure_limit() {
    let mut pass = true;
    let mut detail = String::new();
    for &(a, b) in &[(1.0, 1.0), (1.3, 0.7)] {
        let scaled = model(a, 10_000, b);
        let mass = scaled.speed_measure_mass(1.0).unwrap();
        let expect = 2.0 + PI / (a * b);
        let rel = (mass / expect - 1.0).abs();
        pass &= rel <= 1e-3;
        detail.push_str(&format!("a={a} b={b}: rel err {rel:.2e}; "));
    }
    report(4, "speed measure mass -> 2 + pi/(ab) at n=1e4", pass, &detail);
}

fn c05_two_point_stickiness_convergence() {
    let replicas = 10_000;
    let horizon = 1.0;
    let dt_out = 1e-3;
    let theta = 1.0 / PI; // a = b = 1

    // sticky reference ensemble, shared across both band widths
    let mut sticky_bands = vec![Vec::with_capacity(replicas), Vec::with_capacity(replicas)];
    let deltas = [0.1, 0.01]; // 10/n for n = 100, 1000
    for r in 0..replicas {
        let p = StickyParams { theta, z0: 0.0, horizon, dt: 2e-5, seed: 7000 + r as u64 };
        let path = simulate_sticky(&p, dt_out).unwrap();
        for (slot, &d) in deltas.iter().enumerate() {
            let (band, _) = occupation_statistics(&path, d).unwrap();
            sticky_bands[slot].push(band);
        }
    }

    let mut pass = true;
    let mut detail = String::new();
    let mut discrepancies = Vec::new();
    for (slot, &n) in [100u32, 1000u32].iter().enumerate() {
        let scaled = model(1.0, n, 1.0);
        let delta = 10.0 / f64::from(n);
        let mut bands = Vec::with_capacity(replicas);
        for r in 0..replicas {
            let path =
                two_point_difference_timechange(&scaled, 0.0, horizon, dt_out, 100 + r as u64)
                    .unwrap();
            let (band, _) = occupation_statistics(&path, delta).unwrap();
            bands.push(band);
        }
        let (mp, sp) = mean_stderr(&bands);
        let (ms, ss) = mean_stderr(&sticky_bands[slot]);
        let combined = (sp * sp + ss * ss).sqrt();
        let disc = (mp - ms).abs();
        pass &= disc <= 3.0 * combined;
        discrepancies.push(disc);
        detail.push_str(&format!(
            "n={n}: prelimit {mp:.4} vs sticky {ms:.4}, |diff|/se = {:.2}; ",
            disc / combined
        ));
    }
    let trend_ok = discrepancies[1] <= discrepancies[0];
    detail.push_str(&format!(
        "discrepancy n=1e3 ({:.4}) <= n=1e2 ({:.4}): {trend_ok}",
        discrepancies[1], discrepancies[0]
    ));
    report(5, "band occupation matches sticky_ref", pass && trend_ok, &detail);
}

fn c06_exit_asymptotics_n2() {
    let epsilon = 0.1;
    // resolving the sticky core of the pair difference requires
    // a n sqrt(2 dt) << 1; n = 300 keeps that affordable (ratio 0.15)
    // while n * epsilon = 30 keeps the finite-n error at the percent level
    let exp = ExitExperiment {
        sim: SimConfig {
            scaled: model(1.0, 300, 1.0),
            x0: vec![0.0; 2],
            dt: 1.1e-7,
            horizon: 2.0,
            seed: 61,
            driver: Driver::Dense,
        },
        epsilon,
        cluster_gap: 0.01,
        // 1200 replicas give ~2.5% standard error against a 10% tolerance
        replicas: 1200,
    };
    let stats = run_exits(&exp).unwrap();
    let scaled_mean = stats.mean_exit_time / epsilon;
    let expect = PI / 2.0;
    let rel = (scaled_mean / expect - 1.0).abs();
    report(
        6,
        "N=2 exit time: E[T]/eps vs pi/(2ab)",
        rel <= 0.10 && stats.budget_exceeded == 0,
        &format!(
            "E[T]/eps = {scaled_mean:.4} vs {expect:.4} (rel {rel:.3}), budget_exceeded = {}",
            stats.budget_exceeded
        ),
    );
}

fn c07_exit_cells_n3() {
    let epsilon = 0.1;
    let replicas = 1200;
    let exp = ExitExperiment {
        sim: SimConfig {
            scaled: model(1.0, 300, 1.0),
            x0: vec![0.0; 3],
            dt: 1.25e-7,
            horizon: 1.5,
            seed: 71,
            driver: Driver::Dense,
        },
        epsilon,
        cluster_gap: 0.01,
        replicas,
    };
    let stats = run_exits(&exp).unwrap();
    let m = stats.completed as f64;

    let mut pass = true;
    let mut detail = String::new();
    assert_eq!(stats.cells.len(), 6, "expected all six two-cluster cells");
    for (upper, &count) in &stats.cells {
        let p = count as f64 / m;
        let se = (p * (1.0 - p) / m).sqrt();
        let z = (p - 1.0 / 6.0).abs() / se;
        pass &= z <= 3.0;
        detail.push_str(&format!("{upper:?} z={z:.2}; "));
    }

    let (_, _, estimates) = estimate_theta(&stats).unwrap();
    let expect = 1.0 / (4.0 * PI);
    for t in &estimates {
        // allow a finite-size bias floor alongside the Monte-Carlo error:
        // the estimator divides by the measured exit time, which carries the
        // diffusive +eps/2 correction (~4%, cf. criterion 6), and the
        // multi-cluster residue (~2%) depletes both two-cluster classes
        let err = (t.estimate - expect).abs();
        pass &= err <= (3.0 * t.stderr).max(0.15 * expect);
        detail.push_str(&format!(
            "theta({}:{}) rel err {:.3} (z={:.2}); ",
            t.k,
            t.l,
            err / expect,
            err / t.stderr
        ));
    }

    // three-way splits die off like 1/(n eps); a small residue remains here
    let multi = stats.multi_cluster_probability();
    pass &= multi < 0.05;
    detail.push_str(&format!("multi-cluster {multi:.4}"));
    report(7, "N=3 exit cells uniform, theta(1:2) = ab/(4 pi)", pass, &detail);
}

fn c08_radial_ode() {
    // gamma closed-form anchors
    let g2: f64 = gamma_const(2).unwrap();
    let g3: f64 = gamma_const(3).unwrap();
    let g4: f64 = gamma_const(4).unwrap();
    let anchors = [
        (g2, std::f64::consts::SQRT_2 / PI),
        (g3, 1.0 / std::f64::consts::SQRT_2),
        (g4, 2.0 * std::f64::consts::SQRT_2 / PI),
    ];
    let gamma_ok = anchors.iter().all(|(got, want)| (got - want).abs() <= 1e-10);

    let mut pass = gamma_ok;
    let mut detail = format!("gamma anchors ok: {gamma_ok}; ");
    for &(dim, gamma) in &[(2usize, g2), (3, g3), (4, g4)] {
        for &(a, b) in &[(1.0, 1.0), (2.0, 0.5)] {
            let table = radial_f0(dim, a, b, 50.0 * b / a, 2000).unwrap();
            let slope = asymptotic_slope(&table).unwrap();
            let rel = (slope * gamma * a * b - 1.0).abs();
            pass &= rel <= 0.01;
            detail.push_str(&format!("N={dim} a={a} b={b}: rel {rel:.1e}; "));
        }
    }
    report(8, "f0 slope at r = 50 b/a vs 1/(gamma a b)", pass, &detail);
}

fn c09_ball_exit() {
    let sim = SimConfig {
        scaled: model(1.0, 1000, 1.0),
        x0: vec![0.0; 3],
        dt: 1e-8,
        horizon: 0.05,
        seed: 91,
        driver: Driver::Dense,
    };
    let check = ball_exit_time_check(&sim, 0.1, 5000).unwrap();
    let rel = (check.mean_exit_time / check.predicted - 1.0).abs();
    let vstar = check.kuiper_vstar.unwrap();
    report(
        9,
        "ball exit time + direction uniformity (N=3)",
        rel <= 0.10 && vstar < KUIPER_CRITICAL_1PCT,
        &format!(
            "E[T] = {:.3e} vs {:.3e} (rel {rel:.3}); Kuiper V* = {vstar:.3} < {KUIPER_CRITICAL_1PCT}",
            check.mean_exit_time, check.predicted
        ),
    );
}

fn c10_coalescing_exponent() {
    let ratios = [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0];
    let points = splitting_curve(&ratios, 1_000_000, 101).unwrap();
    let (slope, se) = fit_splitting_exponent(&points).unwrap();
    report(
        10,
        "splitting probability ~ (r/R)^3",
        (slope - 3.0).abs() <= 0.3,
        &format!("fitted exponent {slope:.3} +- {se:.3} (want 3.0 +- 0.3)"),
    );
}

fn c11_martingale_drift_test() {
    let theta = build_family(3, 1.0, 1.0, ThetaMethod::Quadrature { tol: 1e-12 }).unwrap();
    let delta = 10.0 / 300.0; // 10 sticky widths at n = 300
    let mut pass = true;
    let mut detail = String::new();

    // f = |x1 - x2|, N = 2
    {
        let f = PiecewiseLinearFn::abs_diff(2, 0, 1).unwrap();
        let mut paths = Vec::new();
        for r in 0..400u64 {
            let cfg = SimConfig {
                scaled: model(1.0, 300, 1.0),
                x0: vec![0.0; 2],
                dt: 1.1e-7,
                horizon: 0.1,
                seed: 1100 + r,
                driver: Driver::Dense,
            };
            paths.push(thin(&simulate(&cfg).unwrap(), 500));
        }
        let stat = drift_test(&paths, &f, &theta, delta).unwrap();
        pass &= stat.z_score.abs() <= 3.0;
        detail.push_str(&format!("|x1-x2|: z = {:.2}; ", stat.z_score));
    }

    // convex hinge, N = 3
    {
        let f = PiecewiseLinearFn::hinge(3, &[0], &[1, 2]).unwrap();
        let mut paths = Vec::new();
        for r in 0..200u64 {
            let cfg = SimConfig {
                scaled: model(1.0, 300, 1.0),
                x0: vec![0.0; 3],
                dt: 1.1e-7,
                horizon: 0.1,
                seed: 1500 + r,
                driver: Driver::Dense,
            };
            paths.push(thin(&simulate(&cfg).unwrap(), 500));
        }
        let stat = drift_test(&paths, &f, &theta, delta).unwrap();
        pass &= stat.z_score.abs() <= 3.0;
        detail.push_str(&format!("hinge(1:2): z = {:.2}", stat.z_score));
    }
    report(11, "martingale-problem drift z-scores <= 3 at n = 300", pass, &detail);
}

fn c12_kernels() {
    let mut pass = true;
    let mut detail = String::new();

    // mass conservation over 1e4 steps with noise
    {
        let m = model(4.0, 1, 0.5);
        let mut field = KernelField::point_mass(0.0, -3.0, 6.0, 256).unwrap();
        let diag = spde_evolve(&mut field, &m, 0.5, 5e-5, 121, true).unwrap();
        pass &= diag.steps >= 10_000 && diag.mass_drift <= 1e-10;
        detail.push_str(&format!(
            "mass drift {:.1e} over {} steps; ",
            diag.mass_drift, diag.steps
        ));
    }

    // W = 0 heat kernel: variance grows at rate (1 + b^2/n^2) per the
    // half-Laplacian coefficient
    {
        let m = model(2.0, 1, 0.5);
        let mut field = KernelField::point_mass(0.0, -6.0, 12.0, 512).unwrap();
        let t = 0.5;
        spde_evolve(&mut field, &m, t, 1e-4, 122, false).unwrap();
        let rel = (field.variance() / ((1.0 + m.beta()) * t) - 1.0).abs();
        pass &= rel <= 0.01;
        detail.push_str(&format!("heat variance rel err {rel:.1e}; "));
    }

    // filter vs SPDE on a shared field realization
    {
        let m = model(4.0, 1, 0.5);
        let t = 0.2;
        let dt = 5e-5;
        let cells = 256;
        let length = 6.0;
        let filtered = filter_kernel(&m, 0.0, t, 100_000, cells, length, dt, 123).unwrap();
        let mut grid = KernelField::point_mass(0.0, -3.0, length, cells).unwrap();
        spde_evolve(&mut grid, &m, t, dt, 123, true).unwrap();
        let corr = bin_correlation(&filtered, &grid).unwrap();
        pass &= corr >= 0.9;
        detail.push_str(&format!("bin correlation {corr:.3}; "));
    }

    // Figure-1 style concentration ordering in median max-bin mass
    {
        // a = 60 needs ~1e3 spectral cells; a window of L = 3 (>> 8 sigma of
        // the spread at this horizon) keeps that affordable
        let seeds = 30u64;
        let mut medians = Vec::new();
        for &(a, b) in &[(60.0, 0.125), (20.0, 0.375)] {
            let m = model(a, 1, b);
            let mut maxima = Vec::new();
            for s in 0..seeds {
                let k = filter_kernel(&m, 0.0, 0.1, 4000, 1024, 3.0, 2e-5, 300 + s).unwrap();
                maxima.push(density_stats(&k, 1e-4).max_mass);
            }
            maxima.sort_by(f64::total_cmp);
            medians.push(maxima[maxima.len() / 2]);
        }
        pass &= medians[0] > medians[1];
        detail.push_str(&format!(
            "median max-bin mass: a=60,b=0.125 -> {:.3} vs a=20,b=0.375 -> {:.3}",
            medians[0], medians[1]
        ));
    }
    report(12, "kernel SPDE + filter checks", pass, &detail);
}

fn c13_combinatorics() {
    let bell = [1usize, 3, 13, 75, 541, 4683];
    let counts_ok =
        (1..=6).all(|n| enumerate_cells(n).unwrap().len() == bell[n - 1]);

    let theta = build_family(4, 1.1, 0.9, ThetaMethod::Quadrature { tol: 1e-12 }).unwrap();
    let mut hinge_ok = true;
    for (lower, upper) in [
        (vec![0usize], vec![1usize]),
        (vec![0], vec![1, 2]),
        (vec![0, 1], vec![2]),
        (vec![0, 1], vec![2, 3]),
    ] {
        let n = lower.len() + upper.len();
        let f = PiecewiseLinearFn::hinge(n, &lower, &upper).unwrap();
        let v = apply_operator(&f, &vec![0.0; n], &theta).unwrap();
        hinge_ok &= v == 2.0 * theta.get(lower.len(), upper.len()).unwrap();
    }
    report(
        13,
        "cell counts = ordered Bell; hinge identity exact",
        counts_ok && hinge_ok,
        &format!("counts ok: {counts_ok}, hinge identity exact: {hinge_ok}"),
    );
}

fn main() {
    let checks: &[(&str, fn())] = &[
        ("c01", c01_theta_closed_form_anchor),
        ("c02", c02_consistency_and_symmetry),
        ("c03", c03_three_way_theta_agreement),
        ("c04", c04_speed_measure_limit),
        ("c05", c05_two_point_stickiness_convergence),
        ("c06", c06_exit_asymptotics_n2),
        ("c07", c07_exit_cells_n3),
        ("c08", c08_radial_ode),
        ("c09", c09_ball_exit),
        ("c10", c10_coalescing_exponent),
        ("c11", c11_martingale_drift_test),
        ("c12", c12_kernels),
        ("c13", c13_combinatorics),
    ];
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    // report() prints the FAIL line before panicking; keep the hook quiet so
    // unexpected panics still surface their message without a backtrace wall
    std::panic::set_hook(Box::new(|info| {
        if let Some(m) = info.payload().downcast_ref::<String>() {
            eprintln!("  ({m})");
        } else if let Some(m) = info.payload().downcast_ref::<&str>() {
            eprintln!("  ({m})");
        }
    }));
    let mut failed = 0usize;
    let mut ran = 0usize;
    for (name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        if std::panic::catch_unwind(check).is_err() {
            failed += 1;
        }
    }
    let _ = std::panic::take_hook();
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 || ran == 0 {
        std::process::exit(1);
    }
}
