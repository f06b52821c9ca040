//! Acceptance checks on the default desk configuration. Prints one PASS or FAIL line per
//! criterion. Failing criteria are reported, not raised; set `ACCEPTANCE_STRICT=1` to turn
//! any FAIL into a nonzero exit. A check that cannot be evaluated always exits nonzero.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use euler_lab::diagnostics::{
    emit_plots, gradient_table, path_witnesses, run_experiment, run_experiment_with, Experiment, ExperimentConfig,
};
use euler_lab::field::{biot_savart_oriented, EulerSolver, SolverConfig};
use euler_lab::initial_data::{Lobe, Rect, ScalarProfile};
use euler_lab::key_lemma::{corpus, kernel_rect_integral, region_integral, regression_slope, sweep, Convention, CorpusSplit};
use euler_lab::lagrangian::{eta_rate_sup, Region};
use euler_lab::stream_series::{cauchy_gaps, partial_stream, quadratic_profile, radial_block, verify_poisson_identity};
use euler_lab::{Grid, Orientation, ScalarField, VorticityField};

type Outcome = Result<(bool, String), String>;

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn solver_correctness() -> Outcome {
    let e = |x: euler_lab::field::FieldError| x.to_string();
    let g = Grid::new(64).map_err(e)?;
    let w = VorticityField::from_fn(g, |a, b| (PI * a).sin() * (PI * b).sin()).map_err(e)?;
    let u = biot_savart_oriented(&w, Orientation::Printed).map_err(e)?;
    let u1 = ScalarField::from_fn(g, |a, b| -(PI * a).sin() * (PI * b).cos() / (2.0 * PI)).map_err(e)?;
    let u2 = ScalarField::from_fn(g, |a, b| (PI * a).cos() * (PI * b).sin() / (2.0 * PI)).map_err(e)?;
    let mode = sup_diff(u.u1().values(), u1.values()).max(sup_diff(u.u2().values(), u2.values()));

    let g = Grid::new(128).map_err(e)?;
    let s = 0.15;
    let vortex = VorticityField::from_fn(g, move |a, b| {
        let q = (a * a + b * b) / (s * s);
        (4.0 * q - 4.0) / (s * s) * (-q).exp()
    })
    .map_err(e)?;
    let solver = EulerSolver::new(SolverConfig::default());
    let run = solver.run(&vortex, 0.05, 1_000_000).map_err(e)?;
    let stationary = sup_diff(run.final_state().values(), vortex.values()) / vortex.max_abs();

    let w = VorticityField::from_fn(g, |a, b| {
        (PI * a).sin() * (2.0 * PI * b).sin()
            + 0.5 * (3.0 * PI * a + 0.3).cos() * (PI * b).sin()
            + 0.25 * (2.0 * PI * (a + b)).sin()
    })
    .map_err(e)?;
    let run = solver.run(&w, 0.05, 1_000_000).map_err(e)?;
    let l2 = run.step_log.iter().map(|r| r.l2_drift).fold(0.0, f64::max);
    let div = biot_savart_oriented(run.final_state(), Orientation::CurlConsistent).map_err(e)?.divergence_certificate();
    Ok((
        mode <= 1e-10 && stationary <= 1e-8 && l2 <= 1e-6 && div <= 1e-12,
        format!("single mode {mode:.2e}, vortex change {stationary:.2e}, L2 drift {l2:.2e}, divergence {div:.2e}"),
    ))
}

fn series_residual(cfg: &ExperimentConfig) -> Outcome {
    let e = |x: euler_lab::stream_series::SeriesError| x.to_string();
    let f = quadratic_profile();
    let mut block = 0.0_f64;
    for i in 0..=300 {
        let r = 10f64.powf(-3.0 + 0.01 * i as f64);
        let exact = r.powi(4) * r.ln() / 8.0 - r.powi(4) / 64.0;
        block = block.max((radial_block(&f, 1, r).map_err(e)? - exact).abs() / exact.abs());
    }
    let fr = ScalarProfile::radial(&cfg.recipe);
    let ga = ScalarProfile::angular(&cfg.recipe);
    let grid = Grid::new(1024).map_err(|x| x.to_string())?;
    let mut residuals = Vec::new();
    let mut gaps = Vec::new();
    for n in [8, 16, 32] {
        let state = partial_stream(&fr, &ga, n, grid).map_err(e)?;
        residuals.push(verify_poisson_identity(&state, &ga, 1.0 / 48.0, 0.5).residual_vs_source);
        if n == 32 {
            gaps = cauchy_gaps(&state, &[4, 8, 16, 32], 64);
        }
    }
    let monotone = residuals.windows(2).all(|w| w[1] < w[0]);
    let bounded = gaps.len() == 3 && gaps.iter().all(|g| g.sup_gap <= g.bound);
    let gap_text: Vec<String> = gaps.iter().map(|g| format!("{:.2e}/{:.2e}", g.sup_gap, g.bound)).collect();
    Ok((
        block <= 1e-8 && monotone && bounded,
        format!(
            "block {block:.2e}, residuals {:.3e} {:.3e} {:.3e}, gap/bound {}",
            residuals[0],
            residuals[1],
            residuals[2],
            gap_text.join(" ")
        ),
    ))
}

fn key_lemma() -> Outcome {
    let entries = corpus(CorpusSplit::Validation, 256).map_err(|x| x.to_string())?;
    let reports = sweep(&entries, 0.3616, Orientation::CurlConsistent).map_err(|x| x.to_string())?;
    let n = reports.len() as f64;
    let c = Convention::Opposite;
    let f1 = reports.iter().filter(|r| r.residual(c)[0] <= 0.3616 * r.sup_norm).count() as f64 / n;
    let f2 = reports.iter().filter(|r| r.residual(c)[1] <= r.e2_bound).count() as f64 / n;
    let xs: Vec<f64> = reports.iter().map(|r| (1.0 + r.x[0] / r.x[1]).ln()).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.residual(c)[0] / r.sup_norm).collect();
    let (slope, se) = regression_slope(&xs, &ys);
    let spread = xs.iter().cloned().fold(0.0, f64::max) / xs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((
        reports.len() == 1000 && f1 >= 0.99 && f2 >= 0.99 && slope.abs() <= 2.0 * se && spread > 6.0,
        format!("{} points, budget 1 {f1:.3}, budget 2 {f2:.3}, slope {slope:.2e} +- {se:.2e}, spread {spread:.1}", reports.len()),
    ))
}

fn main_term_oracle() -> Outcome {
    let rect = Rect { x1: (0.5, 1.0), x2: (0.0, 1.0) };
    let ones = ScalarField::from_fn(Grid::new(64).map_err(|x| x.to_string())?, |_, _| 1.0).map_err(|x| x.to_string())?;
    let (closed, quad) = (kernel_rect_integral(&rect), region_integral(&ones, &rect));
    let err = (closed - 0.2290727).abs().max((quad - 0.2290727).abs());
    Ok((err <= 1e-6, format!("closed form {closed:.9}, quadrature {quad:.9}, error {err:.2e}")))
}

fn antisymmetry(main: &Experiment, quiet: &Experiment) -> Outcome {
    let start = main.traced.integrals.strips.iter().map(|s| s.total[0].abs() / s.positive[0]).fold(0.0, f64::max);
    let ints = &quiet.traced.integrals;
    let mut run = 0.0_f64;
    for s in &ints.strips {
        for (k, t) in ints.times.iter().enumerate() {
            if *t <= 0.05 + 1e-12 {
                run = run.max(s.total[k].abs() / s.positive[0]);
            }
        }
    }
    Ok((start <= 1e-8 && run <= 1e-8, format!("t = 0 defect {start:.2e}, stirrer-free run defect {run:.2e} up to t = {}", ints.times.last().unwrap_or(&0.0))))
}

fn hyperbolic(main: &Experiment) -> Outcome {
    let b = &main.traced.bundle;
    let monotone = b.gamma.values().all(|g| g.windows(2).all(|w| w[1] > w[0]));
    let sups: Vec<f64> = main.traced.atlas.strips.iter().map(|s| eta_rate_sup(b, s.n)).collect();
    let (lo, hi) = sups.iter().fold((f64::INFINITY, 0.0_f64), |(a, z), &v| (a.min(v), z.max(v)));
    let stable = sups.len() >= 3 && hi <= 2.0 * lo;
    let order = main.report.order.as_ref().ok_or("no order report")?;
    let ordered = order.min_ratio_per_time.iter().all(|&r| r >= 2.0);
    Ok((
        monotone && stable && ordered,
        format!(
            "gamma increasing {monotone}; sup|d eta/dt| per strip {sups:.4?} (max/min {:.2}); order min ratio {:.3}",
            hi / lo,
            order.min_ratio
        ),
    ))
}

fn positivity(main: &Experiment) -> Outcome {
    let t = &main.traced;
    let c = t.positivity_constant;
    let mut checked = 0;
    let mut bad = Vec::new();
    for s in &t.integrals.strips {
        let gamma = &t.bundle.gamma[&s.n];
        let region = Region::Strip { n: s.n, lobe: Lobe::Plus };
        let mut aspect_failed_at = None;
        for (k, &time) in t.bundle.times.iter().enumerate() {
            let aspect = t
                .bundle
                .in_region(region)
                .filter_map(|p| p.path.get(k))
                .map(|x| (x[1] / x[0]).powi(2))
                .fold(f64::INFINITY, f64::min);
            if aspect < 5.0 / 3.0 {
                aspect_failed_at.get_or_insert(time);
                continue;
            }
            checked += 1;
            let bound = (1.0 - (c * time - 2.0 * gamma[k]).exp()) * s.positive[k];
            if s.total[k] < bound - 1e-8 * s.positive[0] && aspect_failed_at.is_none() {
                bad.push((s.n, time));
            }
        }
    }
    Ok((bad.is_empty() && checked > 0, format!("C = {c:.4}, {checked} monitored samples, violations {bad:?}")))
}

fn growth(main: &Experiment) -> Outcome {
    let b = &main.traced.bundle;
    let horizon = *b.times.last().unwrap_or(&0.0);
    let paths = path_witnesses(b, horizon, None, 0.0);
    let exact = paths.iter().filter(|w| w.ratio >= w.log_growth / horizon).count();
    let u = biot_savart_oriented(main.series.final_state(), Orientation::CurlConsistent).map_err(|x| x.to_string())?;
    let table = gradient_table(&u, &[1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]).map_err(|x| x.to_string())?;
    let increasing = table.windows(2).all(|w| w[1].grad_sup > w[0].grad_sup);
    let grads: Vec<f64> = table.iter().map(|r| r.grad_sup).collect();
    let hardy = main.report.hardy.as_ref().ok_or("no Hardy profile")?;
    let slope = hardy.exponent.slope;
    Ok((
        !paths.is_empty() && exact == paths.len() && increasing && slope > 0.0 && hardy.beta == 0.55,
        format!(
            "witness {exact}/{} paths; grad sup at r = 1/8..1/64: {grads:.4?}; Hardy exponent at beta {} is {slope:.3}",
            paths.len(),
            hardy.beta
        ),
    ))
}

fn csv_names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map(|it| it.filter_map(|e| e.ok()).map(|e| e.file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    v.retain(|n| n.ends_with(".csv"));
    v.sort();
    v
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let names = csv_names(a);
    if names != csv_names(b) {
        return Ok((false, format!("file sets differ: {names:?} vs {:?}", csv_names(b))));
    }
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok())
        .collect();
    Ok((!names.is_empty() && differing.is_empty(), format!("{} CSV files, differing {differing:?}", names.len())))
}

fn full_run(cfg: &ExperimentConfig, dir: &Path, with_hardy: bool) -> Result<Experiment, String> {
    let e = if with_hardy { run_experiment(cfg, Some(dir)) } else { run_experiment_with(cfg, Some(dir), false) }
        .map_err(|x| x.to_string())?;
    e.write_tables(dir).map_err(|x| x.to_string())?;
    if with_hardy {
        emit_plots(&e.report, dir).map_err(|x| x.to_string())?;
    }
    Ok(e)
}

fn main() {
    let started = Instant::now();
    let cfg = ExperimentConfig::default();
    let scratch = tempfile::tempdir().expect("scratch directory");
    let (dir_a, dir_b, dir_q) = (scratch.path().join("a"), scratch.path().join("b"), scratch.path().join("quiet"));

    let mut results: Vec<(u8, &str, Outcome)> = vec![
        (1, "solver correctness", solver_correctness()),
        (2, "stream series residual", series_residual(&cfg)),
        (3, "key lemma", key_lemma()),
        (4, "main-term oracle", main_term_oracle()),
    ];
    let main = full_run(&cfg, &dir_a, true);
    let mut quiet_cfg = cfg.clone();
    quiet_cfg.recipe.h_amplitude = 0.0;
    let quiet = full_run(&quiet_cfg, &dir_q, false);
    match (&main, &quiet) {
        (Ok(m), Ok(q)) => results.push((5, "antisymmetry", antisymmetry(m, q))),
        (Err(e), _) | (_, Err(e)) => results.push((5, "antisymmetry", Err(e.clone()))),
    }
    let from_main = |f: fn(&Experiment) -> Outcome| main.as_ref().map_err(|e| e.clone()).and_then(f);
    results.push((6, "hyperbolic scenario", from_main(hyperbolic)));
    results.push((7, "positivity", from_main(positivity)));
    results.push((8, "growth witnesses", from_main(growth)));
    drop(main);
    drop(quiet);
    let rerun = full_run(&cfg, &dir_b, true);
    results.push((9, "determinism", rerun.and_then(|_| determinism(&dir_a, &dir_b))));

    let mut failed = 0;
    let mut errored = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok((true, detail)) => println!("criterion {id} {name}: PASS ({detail})"),
            Ok((false, detail)) => {
                failed += 1;
                println!("criterion {id} {name}: FAIL ({detail})");
            }
            Err(e) => {
                errored += 1;
                println!("criterion {id} {name}: FAIL (error: {e})");
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria pass in {:.0} s",
        results.len() - failed - errored,
        results.len(),
        started.elapsed().as_secs_f64()
    );
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if errored > 0 || (strict && failed > 0) {
        std::process::exit(1);
    }
}
