use std::f64::consts::PI;

use euler_lab::initial_data::{
    balanced_part, cells_across_smallest_strip, initial_value, strip_regions, synthesize, DataError, DataRecipe,
    Lobe,
};
use euler_lab::Grid;
use proptest::prelude::*;

fn recipes() -> impl Strategy<Value = DataRecipe> {
    (0.51..1.0_f64, 4u32..7, 0u32..3, 0.2..0.95_f64, prop::bool::ANY, 0.0..2.0_f64).prop_map(
        |(beta, n0, extra, theta, base4, h)| {
            let mut r = if base4 { DataRecipe::fine() } else { DataRecipe::desk() };
            r.beta = beta;
            r.n0 = n0;
            r.n_max = n0 + extra;
            r.theta0 = theta * PI / 12.0;
            r.h_amplitude = h;
            r
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn valid_recipes_give_disjoint_strips_away_from_the_diagonal(r in recipes()) {
        prop_assume!(r.validate().is_ok());
        let atlas = strip_regions(&r);
        prop_assert!(atlas.radially_disjoint());
        prop_assert!(atlas.diagonal_clearance() > 0.0);
        for s in &atlas.strips {
            prop_assert_eq!(s.minus, s.plus.swapped());
            prop_assert!((s.amplitude - (s.n as f64).powf(-r.beta)).abs() < 1e-15);
        }
    }

    #[test]
    fn balanced_part_is_antisymmetric_under_the_diagonal(
        r in recipes(), rad in 0.001..0.6_f64, theta in 0.0..(PI / 2.0),
    ) {
        prop_assume!(r.validate().is_ok());
        let x = [rad * theta.cos(), rad * theta.sin()];
        prop_assert!((balanced_part(x, &r) + balanced_part([x[1], x[0]], &r)).abs() < 1e-14);
    }

    #[test]
    fn initial_value_is_odd_in_each_variable(r in recipes(), a in -0.99..0.99_f64, b in -0.99..0.99_f64) {
        prop_assume!(r.validate().is_ok());
        let v = initial_value([a, b], &r);
        prop_assert!((initial_value([-a, b], &r) + v).abs() < 1e-14);
        prop_assert!((initial_value([a, -b], &r) + v).abs() < 1e-14);
    }

    #[test]
    fn support_of_the_balanced_part_lies_in_the_strips(r in recipes(), rad in 0.001..0.9_f64, theta in 0.0..(PI / 2.0)) {
        prop_assume!(r.validate().is_ok());
        let atlas = strip_regions(&r);
        let x = [rad * theta.cos(), rad * theta.sin()];
        if balanced_part(x, &r) != 0.0 {
            prop_assert!(atlas.locate(x).is_some());
        }
    }
}

#[test]
fn desk_recipe_synthesizes_an_odd_odd_field_at_2048() {
    let r = DataRecipe::desk();
    assert!(cells_across_smallest_strip(&r, 2048) >= 8.0);
    let w = synthesize(&r, Grid::new(2048).unwrap()).unwrap();
    assert!(w.as_scalar().odd_odd_defect() < 1e-14);
    assert!(w.mean().abs() < 1e-14);
    let g = w.grid();
    let atlas = strip_regions(&r);
    let s = atlas.strip(4).unwrap();
    let c = s.plus.point(0.5 * (s.plus.r_in + s.plus.r_out), 0.5 * (s.plus.theta_lo + s.plus.theta_hi));
    let (j1, j2) = (g.nearest(c[0]), g.nearest(c[1]));
    assert!(w.as_scalar().at(j1, j2) > 0.0);
    assert!(atlas.locate(c) == Some((4, Lobe::Plus)));
}

#[test]
fn coarse_grids_are_refused_with_a_suggestion() {
    match synthesize(&DataRecipe::desk(), Grid::new(256).unwrap()) {
        Err(DataError::UnderResolved { required, .. }) => assert_eq!(required, 2048),
        other => panic!("expected UnderResolved, got {other:?}"),
    }
}

#[test]
fn stirrer_free_field_is_diagonally_antisymmetric_on_the_grid() {
    let mut r = DataRecipe::desk();
    r.h_amplitude = 0.0;
    r.n_max = 5;
    let w = synthesize(&r, Grid::new(1024).unwrap()).unwrap();
    let g = w.grid();
    let n = g.resolution();
    let mut worst = 0.0_f64;
    for j2 in 0..n {
        for j1 in 0..n {
            worst = worst.max((w.as_scalar().at(j1, j2) + w.as_scalar().at(j2, j1)).abs());
        }
    }
    assert_eq!(worst, 0.0);
}
