use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use euler_lab::diagnostics::{
    check_antisymmetry, check_determinism, check_growth, check_hyperbolic, check_key_lemma, check_main_term,
    check_positivity, check_series, check_solver, convention_for, emit_plots, run_experiment, run_experiment_with,
    simulate, synthesize_initial, CriterionOutcome, DiagnosticsError, Experiment, ExperimentConfig, Summary,
};
use euler_lab::field::{write_snapshot, write_snapshot_csv};
use euler_lab::initial_data::{cells_across_smallest_strip, stirrer_kernel_integral};
use euler_lab::key_lemma::{calibrate, corpus, sweep, write_reports_csv, CorpusSplit};

#[derive(Parser)]
#[command(name = "euler-lab", version, about = "Norm-inflation experiments for the 2D Euler equations on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration; defaults are used for missing keys or a missing file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; falls back to `output_dir` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_recipe: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the initial vorticity and describe the strip geometry.
    Synthesize(Common),
    /// Evolve the initial vorticity up to the horizon.
    Simulate(Common),
    /// Check the key lemma on the validation corpus and the main-term oracle.
    ValidateLemma(Common),
    /// Trace particles, strip integrals and the hyperbolic decomposition.
    Trace(Common),
    /// Full experiment with growth diagnostics and plots.
    Diagnose(Common),
    /// Every acceptance check, including the stirrer-free run and a determinism rerun.
    Report(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    let out = match (&common.out, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => o.clone(),
        (None, None) => bail!("no output directory: pass --out or set output_dir"),
    };
    Ok((cfg, out))
}

fn run(command: Command) -> Result<bool> {
    let (name, common) = match &command {
        Command::Synthesize(c) => ("synthesize", c),
        Command::Simulate(c) => ("simulate", c),
        Command::ValidateLemma(c) => ("validate-lemma", c),
        Command::Trace(c) => ("trace", c),
        Command::Diagnose(c) => ("diagnose", c),
        Command::Report(c) => ("report", c),
    };
    if common.print_recipe {
        let cfg = match &common.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        print!("{}", cfg.to_toml_string());
        return Ok(true);
    }
    let (cfg, out) = load(common)?;
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml_string())?;
    let outcomes = match command {
        Command::Synthesize(_) => cmd_synthesize(&cfg, &out)?,
        Command::Simulate(_) => cmd_simulate(&cfg, &out)?,
        Command::ValidateLemma(_) => cmd_validate_lemma(&cfg, &out)?,
        Command::Trace(_) => cmd_trace(&cfg, &out)?,
        Command::Diagnose(_) => cmd_diagnose(&cfg, &out)?,
        Command::Report(_) => cmd_report(&cfg, &out)?,
    };
    let summary = Summary::new(&cfg, name, outcomes);
    summary.write_json(&out.join("summary.json"))?;
    for c in &summary.criteria {
        eprintln!("[{:?}] {} {}: {}", c.status, c.id, c.name, c.detail);
    }
    Ok(summary.gates_passed)
}

fn or_error(id: u8, r: Result<CriterionOutcome, DiagnosticsError>) -> CriterionOutcome {
    r.unwrap_or_else(|e| CriterionOutcome::from_error(id, &e))
}

fn cmd_synthesize(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<CriterionOutcome>> {
    let (omega, atlas) = synthesize_initial(cfg)?;
    write_snapshot(&out.join("omega0.bin"), &omega, 0.0)?;
    if cfg.resolution <= 512 {
        write_snapshot_csv(&out.join("omega0.csv"), &omega)?;
    }
    let info = serde_json::json!({
        "atlas": atlas,
        "cells_across_smallest_strip": cells_across_smallest_strip(&cfg.recipe, cfg.resolution),
        "diagonal_clearance": atlas.diagonal_clearance(),
        "radially_disjoint": atlas.radially_disjoint(),
        "stirrer_kernel_integral": stirrer_kernel_integral(&cfg.recipe),
        "odd_odd_defect": omega.odd_odd_defect(),
        "max_abs": omega.max_abs(),
    });
    std::fs::write(out.join("atlas.json"), serde_json::to_string_pretty(&info)?)?;
    Ok(Vec::new())
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<CriterionOutcome>> {
    let (omega, _) = synthesize_initial(cfg)?;
    let series = simulate(cfg, &omega, Some(&out.join("snapshots")))?;
    euler_lab::diagnostics::write_step_log_csv(&out.join("step_log.csv"), &series.step_log)?;
    Ok(Vec::new())
}

fn cmd_validate_lemma(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<CriterionOutcome>> {
    let cal = sweep(&corpus(CorpusSplit::Calibration, cfg.lemma_resolution)?, 1.0, cfg.orientation)?;
    let fitted = calibrate(&cal);
    std::fs::write(
        out.join("lemma_calibration.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "fitted_on_calibration_split": fitted,
            "frozen_calib": cfg.calib,
            "convention": convention_for(cfg.orientation),
        }))?,
    )?;
    let val = sweep(&corpus(CorpusSplit::Validation, cfg.lemma_resolution)?, cfg.calib, cfg.orientation)?;
    write_reports_csv(&out.join("lemma_validation.csv"), &val, convention_for(cfg.orientation))?;
    Ok(vec![or_error(3, check_key_lemma(cfg)), or_error(4, check_main_term())])
}

fn experiment_outcomes(report_fn: impl FnOnce() -> Result<Experiment, DiagnosticsError>, ids: &[u8]) -> (Option<Experiment>, Vec<CriterionOutcome>) {
    match report_fn() {
        Ok(e) => {
            let mut v = Vec::new();
            for &id in ids {
                v.push(match id {
                    6 => check_hyperbolic(&e.report),
                    7 => check_positivity(&e.report),
                    _ => check_growth(&e.report),
                });
            }
            (Some(e), v)
        }
        Err(err) => (None, ids.iter().map(|&id| CriterionOutcome::from_error(id, &err)).collect()),
    }
}

fn cmd_trace(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<CriterionOutcome>> {
    let (e, outcomes) = experiment_outcomes(|| run_experiment_with(cfg, Some(out), false), &[6, 7]);
    if let Some(e) = e {
        e.write_tables(out)?;
    }
    Ok(outcomes)
}

fn cmd_diagnose(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<CriterionOutcome>> {
    let (e, outcomes) = experiment_outcomes(|| run_experiment(cfg, Some(out)), &[6, 7, 8]);
    if let Some(e) = e {
        e.write_tables(out)?;
        emit_plots(&e.report, out)?;
    }
    Ok(outcomes)
}

fn cmd_report(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<CriterionOutcome>> {
    let mut outcomes = vec![
        or_error(1, check_solver()),
        or_error(2, check_series(cfg)),
        or_error(3, check_key_lemma(cfg)),
        or_error(4, check_main_term()),
    ];
    eprintln!("running the main experiment");
    let (main, more) = experiment_outcomes(|| run_experiment(cfg, Some(out)), &[6, 7, 8]);
    outcomes.extend(more);
    let Some(main) = main else {
        outcomes.push(CriterionOutcome::from_error(5, &DiagnosticsError::Config("main experiment failed".into())));
        return Ok(outcomes);
    };
    main.write_tables(out)?;
    emit_plots(&main.report, out)?;

    eprintln!("running the stirrer-free experiment");
    let mut quiet = cfg.clone();
    quiet.recipe.h_amplitude = 0.0;
    let quiet_dir = out.join("no_stirrer");
    outcomes.push(match run_experiment_with(&quiet, Some(&quiet_dir), false) {
        Ok(q) => {
            q.write_tables(&quiet_dir)?;
            check_antisymmetry(cfg, &main.report, &q.report)
        }
        Err(e) => CriterionOutcome::from_error(5, &e),
    });
    drop(main);

    eprintln!("repeating the main experiment");
    let again = out.join("determinism_rerun");
    outcomes.push(match run_experiment(cfg, Some(&again)) {
        Ok(e) => {
            e.write_tables(&again)?;
            emit_plots(&e.report, &again)?;
            or_error(9, check_determinism(out, &again))
        }
        Err(e) => CriterionOutcome::from_error(9, &e),
    });
    Ok(outcomes)
}
