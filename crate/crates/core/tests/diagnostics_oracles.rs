use std::f64::consts::PI;
use std::path::Path;

use euler_lab::diagnostics::{
    blowup_witness, check_determinism, emit_plots, grad_sup_annulus, gradient_table, hardy_profile, path_witnesses,
    run_experiment_with, DiagnosticsError, ExperimentConfig, GrowthReport, Status,
};
use euler_lab::field::biot_savart_oriented;
use euler_lab::initial_data::{balanced_part, strip_regions, DataRecipe, StripAtlas};
use euler_lab::lagrangian::{
    advect_particles, seed_particles, LinearStrain, Role, SeedConfig, TrajectoryBundle, ZeroVelocity,
};
use euler_lab::quadrature::integrate;
use euler_lab::{Grid, Orientation, VorticityField};
use proptest::prelude::*;

fn times(n: usize, t: f64) -> Vec<f64> {
    (0..=n).map(|k| t * k as f64 / n as f64).collect()
}

fn bundle(recipe: &DataRecipe, lambda: f64, horizon: f64) -> (StripAtlas, TrajectoryBundle) {
    let atlas = strip_regions(recipe);
    let ps = seed_particles(&atlas, &SeedConfig::default());
    let b = if lambda == 0.0 {
        advect_particles(ps, &ZeroVelocity, &times(4, horizon), horizon / 4.0).unwrap()
    } else {
        advect_particles(ps, &LinearStrain { lambda }, &times(8, horizon), 1e-3).unwrap()
    };
    (atlas, b)
}

/// `int |w0 / x2|^2` over both lobes of strip `n` by nested adaptive quadrature in polar
/// coordinates. The minus lobe is the mirror image, where `|w0 / x2| = |m(y) / y1|`.
fn direct_hardy(recipe: &DataRecipe, atlas: &StripAtlas, n: u32) -> f64 {
    let s = atlas.strip(n).unwrap().plus;
    let c = recipe.strip_center(n);
    let rb: Vec<f64> = [-recipe.bump_support, -recipe.bump_plateau, recipe.bump_plateau, recipe.bump_support]
        .iter()
        .map(|k| c * (1.0 + k))
        .collect();
    let tb: Vec<f64> = [1.0 / 3.0, 2.0 / 3.0].iter().map(|k| s.theta_lo + k * recipe.theta0).collect();
    let inner = |t: f64| {
        integrate(
            |r| {
                let y = [r * t.cos(), r * t.sin()];
                let m = balanced_part(y, recipe);
                r * ((m / y[1]).powi(2) + (m / y[0]).powi(2))
            },
            s.r_in,
            s.r_out,
            &rb,
            1e-12,
            0.0,
        )
        .unwrap()
        .value
    };
    integrate(inner, s.theta_lo, s.theta_hi, &tb, 1e-11, 0.0).unwrap().value
}

fn modes(grid: Grid, amps: &[f64]) -> VorticityField {
    let amps = amps.to_vec();
    VorticityField::from_fn(grid, move |a, b| {
        amps.iter()
            .enumerate()
            .map(|(i, &c)| c * (PI * (i % 3 + 1) as f64 * a).sin() * (PI * (i / 3 + 1) as f64 * b).sin())
            .sum()
    })
    .unwrap()
}

fn small_config(horizon: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { resolution: 1024, horizon, lemma_resolution: 64, ..Default::default() };
    cfg.recipe.n_max = 5;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gradient_table_scales_with_the_field(amps in prop::collection::vec(-1.0..1.0_f64, 6), c in -8.0..8.0_f64) {
        prop_assume!(c.abs() > 1e-3);
        let g = Grid::new(256).unwrap();
        let w = modes(g, &amps);
        let radii = [0.25, 0.125, 0.0625];
        let base = gradient_table(&biot_savart_oriented(&w, Orientation::CurlConsistent).unwrap(), &radii).unwrap();
        let scaled = gradient_table(&biot_savart_oriented(&w.scaled(c), Orientation::CurlConsistent).unwrap(), &radii).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((b.grad_sup - c.abs() * a.grad_sup).abs() <= 1e-13 * c.abs() * a.grad_sup.max(1e-300));
        }
    }

    #[test]
    fn hardy_profile_at_the_start_decays_like_the_squared_amplitude(beta in 0.51..1.0_f64) {
        let recipe = DataRecipe { beta, ..DataRecipe::desk() };
        let (atlas, b) = bundle(&recipe, 0.0, 0.01);
        let h = hardy_profile(&b, &atlas, 0).unwrap();
        prop_assert!((h.exponent.slope + 2.0 * beta).abs() < 1e-8, "slope {}", h.exponent.slope);
    }

    #[test]
    fn strain_witness_is_certified_on_every_path(lambda in 0.5..5.0_f64) {
        let (_, b) = bundle(&DataRecipe::desk(), lambda, 0.05);
        let all = path_witnesses(&b, 0.05, None, 0.0);
        let probes = b.particles.iter().filter(|p| p.role == Role::Probe).count();
        prop_assert_eq!(all.len(), probes);
        for w in &all {
            prop_assert!(w.certified);
            prop_assert!(w.ratio >= w.log_growth / w.horizon * (1.0 - 1e-12));
            prop_assert!((w.ratio - lambda).abs() < 1e-9);
        }
    }
}

#[test]
fn hardy_profile_at_the_start_matches_direct_quadrature() {
    for recipe in [DataRecipe::desk(), DataRecipe::fine()] {
        let atlas = strip_regions(&recipe);
        for (per_panel, tol) in [(12, 1e-5), (48, 1e-10)] {
            let cfg = SeedConfig { nodes_per_panel: per_panel, ..SeedConfig::default() };
            let b = advect_particles(seed_particles(&atlas, &cfg), &ZeroVelocity, &[0.0, 0.01], 0.01).unwrap();
            let h = hardy_profile(&b, &atlas, 0).unwrap();
            assert_eq!(h.rows.len(), atlas.strips.len());
            for row in &h.rows {
                let direct = direct_hardy(&recipe, &atlas, row.n);
                assert!((row.value_t0 - direct).abs() < tol * direct, "n={} {} vs {direct}", row.n, row.value_t0);
                assert_eq!(row.value, row.value_t0);
            }
        }
    }
}

#[test]
fn hardy_profile_under_strain_grows_by_the_compression_factor() {
    let (lambda, t) = (2.0, 0.05);
    let (atlas, b) = bundle(&DataRecipe::desk(), lambda, t);
    let k = b.times.len() - 1;
    let h = hardy_profile(&b, &atlas, k).unwrap();
    let factor = (2.0 * lambda * t).exp();
    for row in &h.rows {
        assert!((row.value / row.value_t0 - factor).abs() < 1e-9 * factor);
        assert!((row.compression_inf - factor).abs() < 1e-9 * factor);
    }
    let h0 = hardy_profile(&b, &atlas, 0).unwrap();
    assert!((h.exponent.slope - h0.exponent.slope).abs() < 1e-9);
}

#[test]
fn zero_field_has_flat_gradients_and_no_witness() {
    let u = biot_savart_oriented(&VorticityField::zeros(Grid::new(256).unwrap()), Orientation::Printed).unwrap();
    assert!(gradient_table(&u, &[0.25, 0.125]).unwrap().iter().all(|r| r.grad_sup == 0.0));
    let (_, b) = bundle(&DataRecipe::desk(), 0.0, 0.01);
    assert!(matches!(blowup_witness(&b, 0.01, None, 0.0), Err(DiagnosticsError::NoWitness(_))));
}

#[test]
fn annuli_near_the_grid_scale_are_refused() {
    let u = biot_savart_oriented(&modes(Grid::new(64).unwrap(), &[1.0]), Orientation::Printed).unwrap();
    assert!(grad_sup_annulus(&u, 0.25).is_ok());
    assert!(matches!(grad_sup_annulus(&u, 1.0 / 16.0), Err(DiagnosticsError::UnderResolvedAnnulus { .. })));
    assert!(matches!(grad_sup_annulus(&u, 0.6), Err(DiagnosticsError::UnderResolvedAnnulus { .. })));
}

fn annotation(svg: &str) -> Option<&str> {
    let start = svg.find(r#"class="annotation""#)?;
    let open = start + svg[start..].find('>')? + 1;
    let close = open + svg[open..].find('<')?;
    Some(&svg[open..close])
}

#[test]
fn hardy_plot_is_log_log_with_the_fitted_slope() {
    let dir = tempfile::tempdir().unwrap();
    let (atlas, b) = bundle(&DataRecipe::desk(), 0.0, 0.01);
    let h = hardy_profile(&b, &atlas, 0).unwrap();
    let report = GrowthReport { hardy_t0: Some(h.clone()), hardy: Some(h.clone()), ..Default::default() };
    let files = emit_plots(&report, dir.path()).unwrap();
    assert_eq!(files.len(), 4);
    let svg = std::fs::read_to_string(dir.path().join("hardy.svg")).unwrap();
    assert!(svg.contains(r#"data-x-scale="log""#) && svg.contains(r#"data-y-scale="log""#));
    let note = annotation(&svg).expect("slope annotation");
    let value: f64 = note
        .strip_prefix("slope = ")
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .expect("numeric slope");
    assert!((value - h.exponent.slope).abs() < 1e-4, "{note}");
}

#[test]
fn start_only_report_has_only_start_sections() {
    let e = run_experiment_with(&small_config(0.0), None, false).unwrap();
    let r = &e.report;
    let names: Vec<&str> = r.gates.iter().map(|g| g.name.as_str()).collect();
    assert_eq!(names, ["antisymmetry_t0", "lemma_t0"]);
    assert!(r.gradient_final.is_none() && r.lemma.points_final.is_none());
    assert_eq!(r.order.as_ref().map(|o| o.min_ratio_per_time.len()), Some(1));
    assert!(r.strips.iter().all(|s| s.times == [0.0] && s.witness.is_none()));
    assert!(r.antisymmetry_t0 <= 1e-8);
}

#[test]
fn stirrer_free_run_keeps_the_strips_balanced() {
    let mut cfg = small_config(0.005);
    cfg.recipe.h_amplitude = 0.0;
    let e = run_experiment_with(&cfg, None, false).unwrap();
    assert!(e.report.antisymmetry_run <= 1e-8, "{}", e.report.antisymmetry_run);
    let g = e.report.strips.iter().flat_map(|s| s.gamma.iter()).fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(g < 1e-8, "{g}");
}

fn run_into(cfg: &ExperimentConfig, dir: &Path) {
    let e = run_experiment_with(cfg, Some(dir), false).unwrap();
    e.write_tables(dir).unwrap();
}

#[test]
fn identical_configs_give_identical_tables() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small_config(0.004);
    run_into(&cfg, a.path());
    run_into(&cfg, b.path());
    let outcome = check_determinism(a.path(), b.path()).unwrap();
    assert_eq!(outcome.status, Status::Pass, "{}", outcome.detail);
}
