use std::f64::consts::PI;

use euler_lab::initial_data::Rect;
use euler_lab::key_lemma::{
    calibrate, corpus, kernel_rect_integral, main_term, region_integral, require_admissible, strain_kernel, sweep,
    validate_oriented, Convention, CorpusSplit, LemmaError, LemmaValidator, CORPUS_FIELDS, CORPUS_POINTS,
};
use euler_lab::quadrature::GaussLegendre;
use euler_lab::{Grid, Orientation, ScalarField, VorticityField};
use proptest::prelude::*;

fn rects() -> impl Strategy<Value = Rect> {
    (0.02..0.9_f64, 0.01..0.5_f64, 0.02..0.9_f64, 0.01..0.5_f64)
        .prop_map(|(a, w, c, h)| Rect { x1: (a, (a + w).min(1.0)), x2: (c, (c + h).min(1.0)) })
}

fn admissible() -> impl Strategy<Value = [f64; 2]> {
    (0.03..0.45_f64, 0.01..0.99_f64).prop_map(|(x1, q)| [x1, x1 * q])
}

/// Composite tensor Gauss–Legendre quadrature of the kernel, graded towards the origin.
fn kernel_quadrature(r: &Rect) -> f64 {
    let gl = GaussLegendre::new(20);
    let panels = |(lo, hi): (f64, f64)| -> Vec<(f64, f64)> {
        let n = 16;
        let ratio = (hi / lo).powf(1.0 / n as f64);
        (0..n).map(|k| (lo * ratio.powi(k), lo * ratio.powi(k + 1))).collect()
    };
    let mut total = 0.0;
    for (a, b) in panels(r.x1) {
        for (c, d) in panels(r.x2) {
            for (y1, w1) in gl.on(a, b) {
                for (y2, w2) in gl.on(c, d) {
                    total += w1 * w2 * strain_kernel([y1, y2]);
                }
            }
        }
    }
    total
}

fn single_mode(n: usize) -> VorticityField {
    VorticityField::from_fn(Grid::new(n).unwrap(), |a, b| (PI * a).sin() * (PI * b).sin()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_form_agrees_with_tensor_quadrature(r in rects()) {
        let exact = kernel_rect_integral(&r);
        let quad = kernel_quadrature(&r);
        prop_assert!((exact - quad).abs() <= 1e-10 * exact.abs().max(1e-3));
    }

    #[test]
    fn rectangle_integral_is_additive(r in rects(), s in 0.05..0.95_f64, vertical in prop::bool::ANY) {
        let (a, b) = if vertical {
            let m = r.x1.0 + s * (r.x1.1 - r.x1.0);
            (Rect { x1: (r.x1.0, m), x2: r.x2 }, Rect { x1: (m, r.x1.1), x2: r.x2 })
        } else {
            let m = r.x2.0 + s * (r.x2.1 - r.x2.0);
            (Rect { x1: r.x1, x2: (r.x2.0, m) }, Rect { x1: r.x1, x2: (m, r.x2.1) })
        };
        let whole = kernel_rect_integral(&r);
        prop_assert!((kernel_rect_integral(&a) + kernel_rect_integral(&b) - whole).abs() < 1e-13 * whole.abs().max(1.0));
    }

    #[test]
    fn grid_integral_of_a_constant_is_exact(r in rects(), c in -3.0..3.0_f64) {
        let w = ScalarField::from_fn(Grid::new(64).unwrap(), move |_, _| c).unwrap();
        let exact = c * kernel_rect_integral(&r);
        prop_assert!((region_integral(&w, &r) - exact).abs() < 1e-12 * exact.abs().max(1e-12));
    }

    #[test]
    fn main_term_is_linear_in_the_field(x in admissible(), c in -4.0..4.0_f64) {
        let w = single_mode(64);
        let base = main_term(&w, x).unwrap();
        let scaled = main_term(&w.scaled(c), x).unwrap();
        prop_assert!((scaled - c * base).abs() < 1e-12 * base.abs().max(1e-12) * c.abs().max(1.0));
    }

    #[test]
    fn orientations_swap_the_conventions(x in admissible()) {
        let w = single_mode(64);
        let p = validate_oriented(&w, x, 1.0, Orientation::Printed).unwrap();
        let c = validate_oriented(&w, x, 1.0, Orientation::CurlConsistent).unwrap();
        let (rp, rc) = (p.residual(Convention::Printed), c.residual(Convention::Opposite));
        prop_assert!((rp[0] - rc[0]).abs() < 1e-12 && (rp[1] - rc[1]).abs() < 1e-12);
        prop_assert!(p.main == c.main);
    }

    #[test]
    fn inadmissible_points_are_rejected(x1 in 0.0..1.0_f64, x2 in 0.0..1.0_f64) {
        let ok = 0.0 < x2 && x2 < x1 && x1 < 0.5;
        prop_assert_eq!(require_admissible([x1, x2]).is_ok(), ok);
    }
}

#[test]
fn single_mode_stays_within_the_budget_with_the_frozen_constant() {
    let w = single_mode(256);
    let v = LemmaValidator::new(&w, Orientation::CurlConsistent).unwrap();
    for x in [[0.4, 0.01], [0.2, 0.1], [0.05, 0.049], [0.3, 0.001]] {
        let r = v.validate(x, 0.3616).unwrap();
        assert!(r.opposite_ok, "{r:?}");
        assert!(!r.printed_ok, "{r:?}");
    }
}

#[test]
fn fields_without_odd_symmetry_are_rejected() {
    let w = VorticityField::from_fn(Grid::new(32).unwrap(), |a, b| (PI * a).cos() * (PI * b).sin()).unwrap();
    assert!(matches!(LemmaValidator::new(&w, Orientation::Printed), Err(LemmaError::NotOddOdd(_))));
}

#[test]
fn corpus_splits_are_disjoint_and_admissible() {
    let cal = corpus(CorpusSplit::Calibration, 64).unwrap();
    let val = corpus(CorpusSplit::Validation, 64).unwrap();
    assert_eq!(cal.len(), CORPUS_FIELDS);
    assert_eq!(val.len(), CORPUS_FIELDS);
    for (a, b) in cal.iter().zip(&val) {
        assert_eq!(a.points.len(), CORPUS_POINTS);
        assert!(a.points.iter().chain(&b.points).all(|&x| require_admissible(x).is_ok()));
        assert!(a.points.iter().all(|p| !b.points.contains(p)));
        assert!(a.field.as_scalar().odd_odd_defect() < 1e-12 * a.field.max_abs());
    }
}

#[test]
fn calibration_prefers_the_convention_matching_the_orientation() {
    let cal = corpus(CorpusSplit::Calibration, 128).unwrap();
    let curl = calibrate(&sweep(&cal, 1.0, Orientation::CurlConsistent).unwrap());
    assert_eq!(curl.convention, Convention::Opposite);
    let printed = calibrate(&sweep(&cal, 1.0, Orientation::Printed).unwrap());
    assert_eq!(printed.convention, Convention::Printed);
    assert!((curl.calib - printed.calib).abs() < 1e-12);
}
