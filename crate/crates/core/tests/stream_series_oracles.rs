use std::f64::consts::FRAC_PI_2;

use euler_lab::initial_data::{DataRecipe, ScalarProfile, Smoothness};
use euler_lab::stream_series::{
    angular_coeffs, cauchy_gaps, partial_stream, quadratic_profile, radial_block,
    trig_profile, verify_poisson_identity, SeriesError, SeriesState,
};
use euler_lab::Grid;
use proptest::prelude::*;

/// Block `n` of `f = tau^2`: `r^4 ln r / 8 - r^4 / 64` for `n = 1`, otherwise
/// `(r^4 / (4n + 4) - r^(4n) / (8n)) / (4 - 4n)`.
fn quadratic_block(n: usize, r: f64) -> f64 {
    if n == 1 {
        return r.powi(4) * r.ln() / 8.0 - r.powi(4) / 64.0;
    }
    let nf = n as f64;
    (r.powi(4) / (4.0 * nf + 4.0) - r.powi(4 * n as i32) / (8.0 * nf)) / (4.0 - 4.0 * nf)
}

fn scaled_quadratic(c: f64) -> ScalarProfile {
    ScalarProfile::new("c tau^2", (0.0, 1.0), Smoothness::Smooth, Vec::new(), move |t| c * t * t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn blocks_match_the_closed_form_for_every_index(n in 1usize..6, log_r in -3.0..0.0_f64) {
        let r = 10f64.powf(log_r);
        let exact = quadratic_block(n, r);
        let got = radial_block(&quadratic_profile(), n, r).unwrap();
        prop_assert!((got - exact).abs() <= 1e-8 * exact.abs(), "n={} r={} got={} exact={}", n, r, got, exact);
    }

    #[test]
    fn blocks_are_linear_in_the_radial_profile(c in -5.0..5.0_f64, r in 0.01..1.0_f64) {
        let base = radial_block(&quadratic_profile(), 2, r).unwrap();
        let scaled = radial_block(&scaled_quadratic(c), 2, r).unwrap();
        prop_assert!((scaled - c * base).abs() <= 1e-12 * base.abs().max(1e-300) * c.abs().max(1.0));
    }

    #[test]
    fn angular_coefficients_recover_trig_combinations(a in -2.0..2.0_f64, b in -2.0..2.0_f64, k in 1usize..5) {
        let kk = 4.0 * k as f64;
        let g = ScalarProfile::new("mix", (f64::NEG_INFINITY, f64::INFINITY), Smoothness::Smooth, Vec::new(), move |t| {
            a * (kk * t).cos() + b * (kk * t).sin()
        });
        let (ca, cb) = angular_coeffs(&g, k);
        prop_assert!((ca - a).abs() < 1e-12 && (cb - b).abs() < 1e-12);
        let (oa, ob) = angular_coeffs(&g, k + 1);
        prop_assert!(oa.abs() < 1e-12 && ob.abs() < 1e-12);
    }

    #[test]
    fn single_term_series_is_the_separated_solution(r in 0.02..0.95_f64, theta in 0.0..FRAC_PI_2) {
        let s = SeriesState::build(&quadratic_profile(), &trig_profile(1, true), 1).unwrap();
        let x = [r * theta.cos(), r * theta.sin()];
        let psi = quadratic_block(1, r) * (4.0 * theta).sin();
        let jet = s.jet(x);
        prop_assert!((jet.psi - psi).abs() < 1e-6 * quadratic_block(1, r).abs());
        let lap = jet.dd[0] + jet.dd[2];
        let src = r * r * (4.0 * theta).sin();
        prop_assert!((lap - src).abs() < 1e-6 * r * r);
    }

    #[test]
    fn jet_gradient_matches_finite_differences(r in 0.05..0.8_f64, theta in 0.1..1.4_f64) {
        let s = SeriesState::build(&quadratic_profile(), &trig_profile(1, true), 2).unwrap();
        let x = [r * theta.cos(), r * theta.sin()];
        let h = 1e-5;
        let jet = s.jet(x);
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (s.jet(xp).psi - s.jet(xm).psi) / (2.0 * h);
            prop_assert!((fd - jet.d[i]).abs() < 1e-5 * jet.d[i].abs().max(r.powi(3)));
        }
    }
}

#[test]
fn radii_outside_the_unit_interval_are_rejected() {
    assert!(matches!(radial_block(&quadratic_profile(), 1, 1.5), Err(SeriesError::RadiusOutOfRange(_))));
    assert!(matches!(radial_block(&quadratic_profile(), 0, 0.5), Err(SeriesError::BadIndex)));
}

#[test]
fn cauchy_gaps_stay_under_the_cubic_bound() {
    let recipe = DataRecipe::desk();
    let f = ScalarProfile::radial(&recipe);
    let g = ScalarProfile::angular(&recipe);
    let s = SeriesState::build(&f, &g, 16).unwrap();
    let gaps = cauchy_gaps(&s, &[4, 8, 16], 16);
    assert_eq!(gaps.len(), 2);
    assert!(gaps.iter().all(|c| c.sup_gap <= c.bound), "{gaps:?}");
}

#[test]
fn tabulated_laplacian_converges_to_the_source_under_refinement() {
    let g = trig_profile(1, true);
    let rel: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&n| {
            let state = partial_stream(&quadratic_profile(), &g, 1, Grid::new(n).unwrap()).unwrap();
            let rep = verify_poisson_identity(&state, &g, 0.1, 0.5);
            rep.poisson_residual / rep.source_sup
        })
        .collect();
    assert!(rel[1] < rel[0] && rel[2] < rel[1], "{rel:?}");
    assert!(rel[2] < 1e-3, "{rel:?}");
}
