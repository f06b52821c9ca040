use std::f64::consts::PI;

use euler_lab::initial_data::{radial_profile, strip_regions, DataRecipe, Lobe};
use euler_lab::lagrangian::{
    advect_particles, area_drift, boundary_point, seed_particles, self_intersects, shape_constant, shoelace_area,
    strip_integrals, LinearStrain, Particle, Region, Role, SeedConfig, ZeroVelocity,
};
use euler_lab::quadrature::integrate;
use proptest::prelude::*;

fn times(n: usize, t: f64) -> Vec<f64> {
    (0..=n).map(|k| t * k as f64 / n as f64).collect()
}

/// `I^+(0)` of strip `n` as a product of one-dimensional integrals: in polar coordinates the
/// kernel is `sin(2 theta) / (2 r^2)` and the profile is `f(r) g(theta)`.
fn separable_positive_integral(recipe: &DataRecipe, n: u32) -> f64 {
    let atlas = strip_regions(recipe);
    let s = atlas.strip(n).unwrap().plus;
    let c = recipe.strip_center(n);
    let rb: Vec<f64> = [-recipe.bump_support, -recipe.bump_plateau, recipe.bump_plateau, recipe.bump_support]
        .iter()
        .map(|k| c * (1.0 + k))
        .collect();
    let radial = integrate(|r| radial_profile(r, recipe) / r, s.r_in, s.r_out, &rb, 1e-13, 0.0).unwrap().value;
    let t0 = recipe.theta0;
    let tb: Vec<f64> = [1.0 / 3.0, 2.0 / 3.0].iter().map(|k| s.theta_lo + k * t0).collect();
    let angular = integrate(
        |t| euler_lab::initial_data::angular_profile(t, recipe) * (2.0 * t).sin() / 2.0,
        s.theta_lo,
        s.theta_hi,
        &tb,
        1e-13,
        0.0,
    )
    .unwrap()
    .value;
    radial * angular
}

fn recipes() -> impl Strategy<Value = DataRecipe> {
    (0.51..1.0_f64, 0.2..0.95_f64, prop::bool::ANY).prop_map(|(beta, theta, base4)| {
        let mut r = if base4 { DataRecipe::fine() } else { DataRecipe::desk() };
        r.beta = beta;
        r.theta0 = theta * PI / 12.0;
        r.n_max = r.n0 + 2;
        r
    })
}

#[test]
fn positive_lobe_integral_matches_the_separable_oracle() {
    for recipe in [DataRecipe::desk(), DataRecipe::fine()] {
        let atlas = strip_regions(&recipe);
        let cfg = SeedConfig::default();
        let b = advect_particles(seed_particles(&atlas, &cfg), &ZeroVelocity, &[0.0, 0.01], 0.01).unwrap();
        let ints = strip_integrals(&b, &atlas, cfg.nodes_per_panel).unwrap();
        for s in &ints.strips {
            let oracle = separable_positive_integral(&recipe, s.n);
            assert!(oracle > 0.0);
            assert!((s.positive[0] - oracle).abs() < 1e-7 * oracle, "n={} {} vs {oracle}", s.n, s.positive[0]);
            assert!((s.positive[1] - s.positive[0]).abs() == 0.0);
        }
    }
}

#[test]
fn node_quadrature_converges_to_the_separable_oracle() {
    let recipe = DataRecipe::desk();
    let atlas = strip_regions(&recipe);
    let oracle = separable_positive_integral(&recipe, 5);
    let err = |per_panel: usize| {
        let cfg = SeedConfig { nodes_per_panel: per_panel, ..SeedConfig::default() };
        let b = advect_particles(seed_particles(&atlas, &cfg), &ZeroVelocity, &[0.0, 0.01], 0.01).unwrap();
        let ints = strip_integrals(&b, &atlas, per_panel).unwrap();
        (ints.strip(5).unwrap().positive[0] - oracle).abs() / oracle
    };
    let (e6, e24) = (err(6), err(24));
    assert!(e24 < e6 / 100.0 && e24 < 1e-10, "{e6:e} {e24:e}");
}

#[test]
fn shape_constant_does_not_depend_on_the_strip() {
    for recipe in [DataRecipe::desk(), DataRecipe::fine()] {
        let atlas = strip_regions(&recipe);
        let a: Vec<f64> = atlas.strips.iter().map(|s| shape_constant(&atlas, s.n, 12)).collect();
        assert!(a.iter().all(|v| *v > 0.0));
        for v in &a {
            assert!((v - a[0]).abs() < 1e-9 * a[0], "{a:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn strips_are_antisymmetric_at_the_start(recipe in recipes()) {
        prop_assume!(recipe.validate().is_ok());
        let atlas = strip_regions(&recipe);
        let cfg = SeedConfig { probes_per_side: 2, nodes_per_panel: 6, markers_per_boundary: 8 };
        let b = advect_particles(seed_particles(&atlas, &cfg), &ZeroVelocity, &[0.0, 0.01], 0.01).unwrap();
        let ints = strip_integrals(&b, &atlas, cfg.nodes_per_panel).unwrap();
        for s in &ints.strips {
            prop_assert!(s.total[0].abs() <= 1e-12 * s.positive[0]);
        }
    }

    #[test]
    fn strain_flow_is_reproduced(lambda in -3.0..3.0_f64, x1 in 0.05..0.5_f64, x2 in 0.05..0.5_f64) {
        let ps = vec![Particle::new([x1, x2], None, Role::Probe)];
        let t = times(5, 0.1);
        let b = advect_particles(ps, &LinearStrain { lambda }, &t, 1e-3).unwrap();
        let p = &b.particles[0];
        for (k, x) in p.path.iter().enumerate() {
            let e = (lambda * t[k]).exp();
            prop_assert!((x[0] - x1 * e).abs() < 1e-12 && (x[1] - x2 / e).abs() < 1e-12);
        }
    }

    #[test]
    fn strain_preserves_marker_areas(lambda in -4.0..4.0_f64) {
        let atlas = strip_regions(&DataRecipe::desk());
        let cfg = SeedConfig { probes_per_side: 1, nodes_per_panel: 2, markers_per_boundary: 32 };
        let b = advect_particles(seed_particles(&atlas, &cfg), &LinearStrain { lambda }, &times(4, 0.05), 1e-3).unwrap();
        for s in &atlas.strips {
            let drift = area_drift(&b, Region::Strip { n: s.n, lobe: Lobe::Plus }).unwrap();
            prop_assert!(drift < 1e-10, "strip {} drift {}", s.n, drift);
        }
    }
}

#[test]
fn boundary_polygon_converges_to_the_sector_area() {
    let atlas = strip_regions(&DataRecipe::desk());
    let sector = atlas.strip(4).unwrap().plus;
    let err = |m: usize| {
        let poly: Vec<[f64; 2]> = (0..m).map(|i| boundary_point(&sector, 4.0 * i as f64 / m as f64)).collect();
        assert!(!self_intersects(&poly));
        (shoelace_area(&poly) - sector.area()).abs() / sector.area()
    };
    let (coarse, fine) = (err(16), err(64));
    assert!(fine < coarse / 10.0, "{coarse} {fine}");
    assert!(fine < 1e-4);
}

#[test]
fn bowtie_is_self_intersecting() {
    assert!(self_intersects(&[[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]));
    assert!(!self_intersects(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]));
}
