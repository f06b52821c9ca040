use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use super::growth::{
    blowup_witness, gradient_table, hardy_profile, path_witnesses, stability_window, AnnulusRow, HardyProfile, Witness,
};
use super::{DiagnosticsError, ExperimentConfig, SUBSTITUTION_NOTE};
use crate::field::{biot_savart_oriented, EulerSolver, Grid, Orientation, StepRecord, TimeSeries, VorticityField};
use crate::initial_data::{cells_across_smallest_strip, strip_regions, synthesize, Lobe, StripAtlas};
use crate::key_lemma::{require_admissible, Convention, KeyReport, LemmaValidator};
use crate::lagrangian::{
    advect_particles, area_drift, eta_rate_sup, gamma_rate_min, hyperbolic_decomposition, order_check,
    positivity_ratio, refine_markers, seed_particles, strip_integrals, OrderReport, PositivityReport, Region, Role,
    SeriesVelocity, StripIntegrals, TrajectoryBundle, VelocityProvider,
};

/// Dyadic radii of the gradient table.
pub const ANNULUS_RADII: [f64; 4] = [0.125, 0.0625, 0.03125, 0.015625];

/// Sign pattern of `u_j / x_j` realized by a velocity orientation.
pub fn convention_for(orientation: Orientation) -> Convention {
    match orientation {
        Orientation::Printed => Convention::Printed,
        Orientation::CurlConsistent => Convention::Opposite,
    }
}

pub fn synthesize_initial(cfg: &ExperimentConfig) -> Result<(VorticityField, StripAtlas), DiagnosticsError> {
    let grid = Grid::new(cfg.resolution)?;
    Ok((synthesize(&cfg.recipe, grid)?, strip_regions(&cfg.recipe)))
}

pub fn simulate(
    cfg: &ExperimentConfig,
    omega0: &VorticityField,
    snapshot_dir: Option<&Path>,
) -> Result<TimeSeries, DiagnosticsError> {
    let solver = EulerSolver::new(cfg.solver_config());
    Ok(solver.run_with_output(omega0, cfg.horizon, cfg.snapshot_stride, snapshot_dir)?)
}

/// Particle bundle of a run with its strip integrals and decomposition.
#[derive(Debug, Clone)]
pub struct Traced {
    pub atlas: StripAtlas,
    pub bundle: TrajectoryBundle,
    pub integrals: StripIntegrals,
    pub convention: Convention,
    pub c_eta: f64,
    pub positivity_constant: f64,
    pub positivity: Vec<PositivityReport>,
    pub inserted_markers: usize,
}

pub fn trace_flow(cfg: &ExperimentConfig, series: &TimeSeries) -> Result<Traced, DiagnosticsError> {
    let atlas = strip_regions(&cfg.recipe);
    let provider = SeriesVelocity::new(series)?;
    let dt = 0.5 * provider.max_step();
    let grid = series.states[0].grid();
    let mut bundle = advect_particles(seed_particles(&atlas, &cfg.seeds), &provider, &series.times, dt)?;
    let inserted = refine_markers(&mut bundle, &atlas, &provider, dt, 2.0 * grid.spacing(), 4);
    let integrals = strip_integrals(&bundle, &atlas, cfg.seeds.nodes_per_panel)?;
    let convention = convention_for(series.orientation);
    hyperbolic_decomposition(&mut bundle, &integrals, convention)?;
    let c_eta = atlas.strips.iter().map(|s| eta_rate_sup(&bundle, s.n)).fold(0.0, f64::max);
    let positivity_constant = cfg.positivity_constant.unwrap_or(cfg.positivity_factor * c_eta);
    let positivity = atlas
        .strips
        .iter()
        .map(|s| positivity_ratio(&integrals, &bundle, s.n, positivity_constant, cfg.antisymmetry_tolerance))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Traced { atlas, bundle, integrals, convention, c_eta, positivity_constant, positivity, inserted_markers: inserted })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StripSummary {
    pub n: u32,
    pub times: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `max |eta|` over the probes of the strip at each time.
    pub eta_abs_max: Vec<f64>,
    pub integral: Vec<f64>,
    pub integral_positive: Vec<f64>,
    pub shape_constant: f64,
    pub gamma_monotone: bool,
    pub gamma_rate_min: Option<f64>,
    pub eta_rate_sup: f64,
    /// `gamma_rate_min / C_eta`.
    pub rate_ratio: Option<f64>,
    pub stability_window: f64,
    pub area_drift: Option<f64>,
    pub positivity: Option<PositivityReport>,
    pub witness: Option<Witness>,
    /// `gamma(T)/T - C_eta`, the lower bound the witness ratio should clear.
    pub witness_floor: Option<f64>,
    pub witness_error: Option<String>,
    /// Qualifying probe paths and how many of them carry a certified witness.
    pub witness_paths: usize,
    pub witness_paths_certified: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSample {
    pub t: f64,
    pub x: [f64; 2],
    pub log_factor: f64,
    pub ratio1: f64,
    pub ratio2: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LemmaSummary {
    pub convention: Option<Convention>,
    pub calib: f64,
    pub points_t0: usize,
    pub passed_t0: usize,
    pub points_final: Option<usize>,
    pub passed_final: Option<usize>,
    pub samples: Vec<LemmaSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub note: String,
    pub horizon: f64,
    pub resolution: usize,
    pub orientation: Option<Orientation>,
    pub steps: usize,
    pub max_l2_drift: f64,
    pub final_tail_fraction: f64,
    pub cells_across_smallest_strip: f64,
    pub diagonal_clearance: f64,
    pub radially_disjoint: bool,
    pub gradient_t0: Vec<AnnulusRow>,
    pub gradient_final: Option<Vec<AnnulusRow>>,
    pub strips: Vec<StripSummary>,
    pub stirrer_integral: Vec<f64>,
    pub antisymmetry_t0: f64,
    pub antisymmetry_run: f64,
    pub c_eta: f64,
    pub positivity_constant: f64,
    pub order: Option<OrderReport>,
    /// `min log(Phi1(T)/y1)` over the probes of the innermost strip.
    pub epsilon_measured: Option<f64>,
    pub hardy_primary: Option<HardyProfile>,
    pub hardy_t0: Option<HardyProfile>,
    pub hardy: Option<HardyProfile>,
    pub hardy_error: Option<String>,
    pub lemma: LemmaSummary,
    pub inserted_markers: usize,
    pub gates: Vec<GateResult>,
}

impl GrowthReport {
    pub fn gate(&self, name: &str) -> Option<&GateResult> {
        self.gates.iter().find(|g| g.name == name)
    }

    pub fn all_gates_pass(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), DiagnosticsError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Report plus the large tables it was computed from.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: GrowthReport,
    pub series: TimeSeries,
    pub traced: Traced,
}

impl Experiment {
    /// Trajectory, integral, positivity and step tables.
    pub fn write_tables(&self, dir: &Path) -> Result<(), DiagnosticsError> {
        std::fs::create_dir_all(dir)?;
        self.traced.bundle.write_csv(&dir.join("trajectories.csv"))?;
        write_integrals_csv(&dir.join("strip_integrals.csv"), &self.traced.integrals)?;
        write_positivity_csv(&dir.join("positivity.csv"), &self.traced.positivity)?;
        write_step_log_csv(&dir.join("step_log.csv"), &self.series.step_log)?;
        Ok(())
    }
}

pub fn write_integrals_csv(path: &Path, ints: &StripIntegrals) -> Result<(), DiagnosticsError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "t,strip,total,positive,stirrer")?;
    for s in &ints.strips {
        for (k, t) in ints.times.iter().enumerate() {
            writeln!(w, "{},{},{:e},{:e},{:e}", t, s.n, s.total[k], s.positive[k], ints.stirrer[k])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_positivity_csv(path: &Path, reports: &[PositivityReport]) -> Result<(), DiagnosticsError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "strip,t,aspect,aspect_holds,margin,constant")?;
    for r in reports {
        for (k, t) in r.times.iter().enumerate() {
            let margin = r.margins[k].map(|m| format!("{m:e}")).unwrap_or_default();
            writeln!(w, "{},{},{:e},{},{},{:e}", r.strip, t, r.aspect[k], r.margins[k].is_some(), margin, r.constant)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_step_log_csv(path: &Path, log: &[StepRecord]) -> Result<(), DiagnosticsError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "time,dt,cfl,l2_drift,linf,tail_fraction")?;
    for s in log {
        writeln!(w, "{},{:e},{:e},{:e},{:e},{:e}", s.time, s.dt, s.cfl, s.l2_drift, s.linf, s.tail_fraction)?;
    }
    w.flush()?;
    Ok(())
}

fn lemma_points(bundle: &TrajectoryBundle, k: usize) -> Vec<[f64; 2]> {
    bundle
        .particles
        .iter()
        .filter(|p| p.role == Role::Probe && matches!(p.region, Some(Region::Strip { lobe: Lobe::Minus, .. })))
        .filter_map(|p| p.path.get(k).copied())
        .filter(|&x| require_admissible(x).is_ok())
        .collect()
}

fn lemma_samples(
    omega: &VorticityField,
    orientation: Orientation,
    points: &[[f64; 2]],
    t: f64,
    calib: f64,
    convention: Convention,
) -> Result<Vec<LemmaSample>, DiagnosticsError> {
    let v = LemmaValidator::new(omega, orientation)?;
    let reports: Vec<KeyReport> = v.validate_all(points, calib)?;
    Ok(reports
        .iter()
        .map(|r| {
            let q = r.ratios(convention);
            LemmaSample { t, x: r.x, log_factor: r.log_factor(), ratio1: q[0], ratio2: q[1], passes: r.passes(convention) }
        })
        .collect())
}

fn gate(name: &str, passed: bool, detail: String) -> GateResult {
    GateResult { name: name.into(), passed, detail }
}

fn strip_summaries(cfg: &ExperimentConfig, tr: &Traced, cell: f64) -> Vec<StripSummary> {
    let b = &tr.bundle;
    let k_end = b.times.len() - 1;
    let t_end = b.times[k_end];
    tr.atlas
        .strips
        .iter()
        .map(|s| {
            let series = tr.integrals.strip(s.n).expect("integrals cover every strip");
            let gamma = b.gamma.get(&s.n).cloned().unwrap_or_default();
            let probes: Vec<_> = b
                .particles
                .iter()
                .filter(|p| p.role == Role::Probe && p.region.and_then(|r| r.strip()) == Some(s.n))
                .collect();
            let eta_abs_max = (0..=k_end)
                .map(|k| {
                    probes
                        .iter()
                        .filter_map(|p| Some(p.eta1.get(k)?.abs().max(p.eta2.get(k)?.abs())))
                        .fold(0.0, f64::max)
                })
                .collect();
            let gmin = gamma_rate_min(b, s.n);
            let drift = [Lobe::Plus, Lobe::Minus]
                .iter()
                .filter_map(|&lobe| area_drift(b, Region::Strip { n: s.n, lobe }))
                .reduce(f64::max);
            let paths = if k_end == 0 { Vec::new() } else { path_witnesses(b, t_end, Some(s.n), cfg.witness_margin) };
            let (witness, witness_floor, witness_error) = if k_end == 0 {
                (None, None, None)
            } else {
                let floor = gamma.last().map(|g| g / t_end - tr.c_eta);
                match blowup_witness(b, t_end, Some(s.n), cfg.witness_margin) {
                    Ok(w) => (Some(w), floor, None),
                    Err(e) => (None, floor, Some(e.to_string())),
                }
            };
            StripSummary {
                n: s.n,
                times: b.times.clone(),
                gamma_monotone: gamma.windows(2).all(|w| w[1] > w[0]),
                gamma,
                eta_abs_max,
                integral: series.total.clone(),
                integral_positive: series.positive.clone(),
                shape_constant: series.shape_constant,
                gamma_rate_min: gmin,
                eta_rate_sup: eta_rate_sup(b, s.n),
                rate_ratio: gmin.filter(|_| tr.c_eta > 0.0).map(|g| g / tr.c_eta),
                stability_window: stability_window(b, s.n, cell),
                area_drift: drift,
                positivity: tr.positivity.iter().find(|p| p.strip == s.n).cloned(),
                witness,
                witness_floor,
                witness_error,
                witness_paths: paths.len(),
                witness_paths_certified: paths.iter().filter(|w| w.certified).count(),
            }
        })
        .collect()
}

fn evaluate_gates(cfg: &ExperimentConfig, r: &GrowthReport) -> Vec<GateResult> {
    let mut gates = vec![gate(
        "antisymmetry_t0",
        r.antisymmetry_t0 <= cfg.antisymmetry_tolerance,
        format!("max |I(0)| / I+(0) = {:e}", r.antisymmetry_t0),
    )];
    gates.push(gate(
        "lemma_t0",
        r.lemma.passed_t0 == r.lemma.points_t0,
        format!("{}/{} probe points within both budgets", r.lemma.passed_t0, r.lemma.points_t0),
    ));
    if r.horizon == 0.0 {
        return gates;
    }
    gates.push(gate(
        "l2_conservation",
        r.max_l2_drift <= 1e-6,
        format!("max relative L2 drift {:e}", r.max_l2_drift),
    ));
    let drift = r.strips.iter().filter_map(|s| s.area_drift).fold(0.0, f64::max);
    gates.push(gate("area_conservation", drift <= 1e-4, format!("max marker-polygon area drift {drift:e}")));
    gates.push(gate(
        "gamma_monotone",
        r.strips.iter().all(|s| s.gamma_monotone),
        r.strips.iter().map(|s| format!("n={} rate_min={:?}", s.n, s.gamma_rate_min)).collect::<Vec<_>>().join("; "),
    ));
    let rates: Vec<f64> = r.strips.iter().map(|s| s.eta_rate_sup).collect();
    let (lo, hi) = rates.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &v| (a.min(v), b.max(v)));
    gates.push(gate("eta_stable", hi <= 2.0 * lo, format!("sup |d eta/dt| per strip {rates:?}")));
    if let Some(o) = &r.order {
        gates.push(gate("order", o.passes, format!("min ratio {:.4} (threshold {})", o.min_ratio, o.threshold)));
    }
    let pos: Vec<String> = r
        .strips
        .iter()
        .filter_map(|s| s.positivity.as_ref())
        .map(|p| format!("n={} first_violation={:?} aspect_failure={:?}", p.strip, p.first_violation, p.aspect_failure))
        .collect();
    gates.push(gate(
        "positivity",
        r.strips.iter().all(|s| s.positivity.as_ref().is_some_and(|p| p.passes)),
        format!("C = {:e}; {}", r.positivity_constant, pos.join("; ")),
    ));
    let ratio = r.strips.iter().filter_map(|s| s.rate_ratio).fold(f64::INFINITY, f64::min);
    gates.push(gate(
        "rate_ratio",
        ratio >= cfg.rate_ratio_threshold,
        format!("min (d gamma/dt) / C_eta = {ratio:.3} against {}", cfg.rate_ratio_threshold),
    ));
    gates.push(gate(
        "witness_certified",
        r.strips.iter().all(|s| {
            s.witness_paths_certified == s.witness_paths
                && s.witness.as_ref().is_some_and(|w| w.certified && s.witness_floor.is_none_or(|f| w.ratio >= f))
        }),
        r.strips
            .iter()
            .map(|s| match (&s.witness, &s.witness_error) {
                (Some(w), _) => format!(
                    "n={} paths {}/{} certified, best ratio={:.4} mean={:.4} floor={:.4} t*={}",
                    s.n,
                    s.witness_paths_certified,
                    s.witness_paths,
                    w.ratio,
                    w.mean_rate,
                    s.witness_floor.unwrap_or(f64::NAN),
                    w.t_star
                ),
                (None, e) => format!("n={} {}", s.n, e.clone().unwrap_or_default()),
            })
            .collect::<Vec<_>>()
            .join("; "),
    ));
    if let Some(g) = &r.gradient_final {
        let vals: Vec<f64> = g.iter().map(|a| a.grad_sup).collect();
        gates.push(gate(
            "gradient_monotone",
            vals.windows(2).all(|w| w[1] > w[0]),
            format!("sup |grad u| on annuli r = {:?}: {vals:?}", ANNULUS_RADII),
        ));
    }
    match &r.hardy {
        Some(h) => gates.push(gate(
            "hardy_exponent",
            h.exponent.slope > 0.0,
            format!(
                "beta = {}: slope {:.4} (95% CI [{:.4}, {:.4}])",
                h.beta, h.exponent.slope, h.exponent.ci95[0], h.exponent.ci95[1]
            ),
        )),
        None => gates.push(gate("hardy_exponent", false, r.hardy_error.clone().unwrap_or_default())),
    }
    gates
}

/// Synthesize, simulate, trace, decompose and diagnose. With `out` set, the report is
/// written there, including a partial report if a stage fails.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Experiment, DiagnosticsError> {
    run_experiment_with(cfg, out, true)
}

/// [`run_experiment`], optionally skipping the separate Hardy run.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    with_hardy: bool,
) -> Result<Experiment, DiagnosticsError> {
    cfg.validate()?;
    let mut report = GrowthReport { note: SUBSTITUTION_NOTE.into(), ..Default::default() };
    let result = run_stages(cfg, out, with_hardy, &mut report);
    if let (Err(_), Some(dir)) = (&result, out) {
        std::fs::create_dir_all(dir)?;
        report.write_json(&dir.join("growth_report.partial.json"))?;
    }
    result
}

fn run_stages(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    with_hardy: bool,
    report: &mut GrowthReport,
) -> Result<Experiment, DiagnosticsError> {
    report.horizon = cfg.horizon;
    report.resolution = cfg.resolution;
    report.orientation = Some(cfg.orientation);
    let (omega0, atlas) = synthesize_initial(cfg)?;
    report.cells_across_smallest_strip = cells_across_smallest_strip(&cfg.recipe, cfg.resolution);
    report.diagonal_clearance = atlas.diagonal_clearance();
    report.radially_disjoint = atlas.radially_disjoint();
    let u0 = biot_savart_oriented(&omega0, cfg.orientation)?;
    report.gradient_t0 = gradient_table(&u0, &ANNULUS_RADII)?;

    let snapshots = out.filter(|_| cfg.write_snapshots).map(|d| d.join("snapshots"));
    let series = simulate(cfg, &omega0, snapshots.as_deref())?;
    report.steps = series.step_log.len();
    report.max_l2_drift = series.step_log.iter().map(|s| s.l2_drift).fold(0.0, f64::max);
    report.final_tail_fraction = series.step_log.last().map(|s| s.tail_fraction).unwrap_or(0.0);
    let horizon = series.horizon();
    let k_end = series.times.len() - 1;
    if k_end > 0 {
        let u = biot_savart_oriented(series.final_state(), cfg.orientation)?;
        report.gradient_final = Some(gradient_table(&u, &ANNULUS_RADII)?);
    }

    let traced = trace_flow(cfg, &series)?;
    report.inserted_markers = traced.inserted_markers;
    report.c_eta = traced.c_eta;
    report.positivity_constant = traced.positivity_constant;
    report.antisymmetry_t0 = traced.integrals.antisymmetry_defect(0.0);
    report.antisymmetry_run = traced.integrals.antisymmetry_defect(horizon);
    report.stirrer_integral = traced.integrals.stirrer.clone();
    report.order = Some(order_check(&traced.bundle, &atlas)?);
    report.strips = strip_summaries(cfg, &traced, Grid::new(cfg.resolution)?.spacing());
    if k_end > 0 {
        let inner = atlas.strips.last().map(|s| s.n);
        report.epsilon_measured = traced
            .bundle
            .particles
            .iter()
            .filter(|p| p.role == Role::Probe && p.region.and_then(|r| r.strip()) == inner)
            .filter_map(|p| p.path.get(k_end).map(|x| (x[0] / p.origin[0]).ln()))
            .reduce(f64::min);
    }

    let convention = convention_for(cfg.orientation);
    let mut lemma = LemmaSummary { convention: Some(convention), calib: cfg.calib, ..Default::default() };
    let pts0 = lemma_points(&traced.bundle, 0);
    let mut samples = lemma_samples(&series.states[0], cfg.orientation, &pts0, 0.0, cfg.calib, convention)?;
    lemma.points_t0 = samples.len();
    lemma.passed_t0 = samples.iter().filter(|s| s.passes).count();
    if k_end > 0 {
        let pts = lemma_points(&traced.bundle, k_end);
        let fin = lemma_samples(series.final_state(), cfg.orientation, &pts, horizon, cfg.calib, convention)?;
        lemma.points_final = Some(fin.len());
        lemma.passed_final = Some(fin.iter().filter(|s| s.passes).count());
        samples.extend(fin);
    }
    lemma.samples = samples;
    report.lemma = lemma;

    report.hardy_primary = hardy_profile(&traced.bundle, &atlas, k_end).ok();
    let hardy_cfg = cfg.hardy_variant();
    let hardy_run = if !with_hardy {
        Err(DiagnosticsError::Config("Hardy run skipped".into()))
    } else if hardy_cfg.recipe == cfg.recipe {
        Ok(traced.clone())
    } else {
        synthesize_initial(&hardy_cfg)
            .and_then(|(w, _)| simulate(&hardy_cfg, &w, None))
            .and_then(|s| trace_flow(&hardy_cfg, &s))
    };
    match hardy_run {
        Ok(h) => {
            report.hardy_t0 = hardy_profile(&h.bundle, &h.atlas, 0).ok();
            if k_end > 0 {
                match hardy_profile(&h.bundle, &h.atlas, h.bundle.times.len() - 1) {
                    Ok(p) => report.hardy = Some(p),
                    Err(e) => report.hardy_error = Some(e.to_string()),
                }
            }
        }
        Err(e) => report.hardy_error = Some(e.to_string()),
    }

    report.gates = evaluate_gates(cfg, report);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        report.write_json(&dir.join("growth_report.json"))?;
    }
    Ok(Experiment { report: report.clone(), series, traced })
}

