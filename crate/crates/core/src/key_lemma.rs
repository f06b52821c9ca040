//! Main-term quadrature near the hyperbolic point and validation of `u_j / x_j`
//! against the spectral velocity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

use crate::field::{
    biot_savart_oriented, FieldError, Grid, Orientation, PointEvaluator, ScalarField, VelocityField,
    VorticityField,
};
use crate::initial_data::{stirrer_value, DataRecipe, Rect};

#[derive(Debug, Error)]
pub enum LemmaError {
    #[error("point ({0}, {1}) is outside the wedge 0 < x2 < x1 < 1/2")]
    Inadmissible(f64, f64),
    #[error("field is not odd in both coordinates (defect {0:e})")]
    NotOddOdd(f64),
    #[error("calibration constant must be positive, got {0}")]
    BadCalibration(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `y1 y2 / |y|^4`.
#[inline]
pub fn strain_kernel(y: [f64; 2]) -> f64 {
    let r2 = y[0] * y[0] + y[1] * y[1];
    y[0] * y[1] / (r2 * r2)
}

/// Mixed antiderivative of the strain kernel: `d^2 F / dy1 dy2 = y1 y2 / |y|^4`.
#[inline]
fn kernel_antiderivative(y1: f64, y2: f64) -> f64 {
    -0.25 * (y1 * y1 + y2 * y2).ln()
}

/// Exact integral of the strain kernel over a rectangle avoiding the origin.
pub fn kernel_rect_integral(r: &Rect) -> f64 {
    let (a, b) = r.x1;
    let (c, d) = r.x2;
    kernel_antiderivative(b, d) - kernel_antiderivative(a, d) - kernel_antiderivative(b, c)
        + kernel_antiderivative(a, c)
}

pub fn require_admissible(x: [f64; 2]) -> Result<(), LemmaError> {
    if x[0].is_finite() && x[1].is_finite() && 0.0 < x[1] && x[1] < x[0] && x[0] < 0.5 {
        Ok(())
    } else {
        Err(LemmaError::Inadmissible(x[0], x[1]))
    }
}

/// `Q(x) = [x1, 1] x [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionQ(pub Rect);

impl RegionQ {
    pub fn at(x: [f64; 2]) -> Self {
        Self(Rect { x1: (x[0], 1.0), x2: (0.0, 1.0) })
    }
}

/// `R(x) = [x1/4, x1] x [x2, x1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionR(pub Rect);

impl RegionR {
    pub fn at(x: [f64; 2]) -> Self {
        Self(Rect { x1: (0.25 * x[0], x[0]), x2: (x[1], x[0]) })
    }
}

/// `int_rect K(y) w(y) dy` treating grid samples as cell averages and integrating the
/// kernel exactly over every cell clipped to the rectangle.
pub fn region_integral(omega: &ScalarField, rect: &Rect) -> f64 {
    let g = omega.grid();
    let e1 = cell_edges(g, rect.x1);
    let e2 = cell_edges(g, rect.x2);
    if e1.len() < 2 || e2.len() < 2 {
        return 0.0;
    }
    let idx1: Vec<usize> = e1.windows(2).map(|w| g.nearest(0.5 * (w[0] + w[1]))).collect();
    let rows: Vec<f64> = e2
        .par_windows(2)
        .map(|w| {
            let j2 = g.nearest(0.5 * (w[0] + w[1]));
            let lo: Vec<f64> = e1.iter().map(|&a| kernel_antiderivative(a, w[0])).collect();
            let hi: Vec<f64> = e1.iter().map(|&a| kernel_antiderivative(a, w[1])).collect();
            let mut acc = 0.0;
            for k in 0..idx1.len() {
                let cell = hi[k + 1] - hi[k] - lo[k + 1] + lo[k];
                acc += cell * omega.at(idx1[k], j2);
            }
            acc
        })
        .collect();
    rows.iter().sum()
}

/// Cell boundaries `x_j +- h/2` inside `[lo, hi]`, with the interval ends included.
fn cell_edges(g: Grid, (lo, hi): (f64, f64)) -> Vec<f64> {
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        return Vec::new();
    }
    let h = g.spacing();
    let mut e = vec![lo];
    let first = ((lo + 1.0) / h - 0.5).floor() as i64 + 1;
    let mut k = first;
    loop {
        let edge = -1.0 + (k as f64 + 0.5) * h;
        if edge >= hi {
            break;
        }
        if edge > lo {
            e.push(edge);
        }
        k += 1;
    }
    e.push(hi);
    e
}

/// `(4/pi) int_{Q(2x)} K(y) w(y) dy`.
pub fn main_term(omega: &ScalarField, x: [f64; 2]) -> Result<f64, LemmaError> {
    require_admissible(x)?;
    let q = RegionQ::at([2.0 * x[0], 2.0 * x[1]]);
    Ok(4.0 / PI * region_integral(omega, &q.0))
}

/// Largest `|w|` over grid nodes inside a rectangle.
pub fn sup_on_rect(omega: &ScalarField, rect: &Rect) -> f64 {
    let g = omega.grid();
    let n = g.resolution();
    let span = |(lo, hi): (f64, f64)| -> Vec<usize> {
        (0..n).filter(|&j| (lo..=hi).contains(&g.coord(j))).collect()
    };
    let (s1, s2) = (span(rect.x1), span(rect.x2));
    let mut m = 0.0_f64;
    for &j2 in &s2 {
        for &j1 in &s1 {
            m = m.max(omega.at(j1, j2).abs());
        }
    }
    m
}

/// Right-hand sides of the two error bounds for a given calibration constant.
pub fn error_budget(omega: &ScalarField, x: [f64; 2], calib: f64) -> Result<(f64, f64), LemmaError> {
    require_admissible(x)?;
    if calib.is_nan() || calib <= 0.0 {
        return Err(LemmaError::BadCalibration(calib));
    }
    let sup = omega.max_abs();
    Ok(budget_from_sups(sup, local_sup(omega, x), x, calib))
}

fn local_sup(omega: &ScalarField, x: [f64; 2]) -> f64 {
    sup_on_rect(omega, &RegionR::at([2.0 * x[0], 2.0 * x[1]]).0)
}

fn budget_from_sups(sup: f64, local: f64, x: [f64; 2], calib: f64) -> (f64, f64) {
    let e1 = calib * sup;
    (e1, e1 + calib * local * (1.0 + x[0] / x[1]).ln())
}

/// Which sign pattern multiplies the main term in `u_j / x_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `u_j / x_j ~ (-1)^j main`: compression along `x1`.
    Printed,
    /// `u_j / x_j ~ -(-1)^j main`: stretching along `x1`.
    Opposite,
}

impl Convention {
    pub fn signs(self) -> [f64; 2] {
        match self {
            Convention::Printed => [-1.0, 1.0],
            Convention::Opposite => [1.0, -1.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Convention::Printed => "printed",
            Convention::Opposite => "opposite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyReport {
    pub x: [f64; 2],
    pub main: f64,
    pub e1_bound: f64,
    pub e2_bound: f64,
    pub u_direct: [f64; 2],
    pub sup_norm: f64,
    pub local_sup: f64,
    pub residual_printed: [f64; 2],
    pub residual_opposite: [f64; 2],
    pub printed_ok: bool,
    pub opposite_ok: bool,
}

impl KeyReport {
    pub fn residual(&self, c: Convention) -> [f64; 2] {
        match c {
            Convention::Printed => self.residual_printed,
            Convention::Opposite => self.residual_opposite,
        }
    }

    pub fn passes(&self, c: Convention) -> bool {
        match c {
            Convention::Printed => self.printed_ok,
            Convention::Opposite => self.opposite_ok,
        }
    }

    /// Calibration ratios `r1 / |w|_inf` and `r2 / (|w|_inf + |w|_R log(1 + x1/x2))`.
    pub fn ratios(&self, c: Convention) -> [f64; 2] {
        let r = self.residual(c);
        let d1 = self.sup_norm;
        let d2 = self.sup_norm + self.local_sup * (1.0 + self.x[0] / self.x[1]).ln();
        [safe_ratio(r[0], d1), safe_ratio(r[1], d2)]
    }

    pub fn log_factor(&self) -> f64 {
        (1.0 + self.x[0] / self.x[1]).ln()
    }
}

fn safe_ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Evaluates the lemma at many points of one field, sharing the velocity.
pub struct LemmaValidator<'a> {
    omega: &'a VorticityField,
    velocity: VelocityField,
    sup: f64,
}

impl<'a> LemmaValidator<'a> {
    pub fn new(omega: &'a VorticityField, orientation: Orientation) -> Result<Self, LemmaError> {
        let sup = omega.max_abs();
        let defect = omega.odd_odd_defect();
        if defect > 1e-10 * sup.max(f64::MIN_POSITIVE) {
            return Err(LemmaError::NotOddOdd(defect));
        }
        let velocity = biot_savart_oriented(omega, orientation)?;
        Ok(Self { omega, velocity, sup })
    }

    pub fn velocity(&self) -> &VelocityField {
        &self.velocity
    }

    pub fn validate(&self, x: [f64; 2], calib: f64) -> Result<KeyReport, LemmaError> {
        require_admissible(x)?;
        if calib.is_nan() || calib <= 0.0 {
            return Err(LemmaError::BadCalibration(calib));
        }
        let main = main_term(self.omega, x)?;
        let local = local_sup(self.omega, x);
        let (e1, e2) = budget_from_sups(self.sup, local, x, calib);
        let u = PointEvaluator::velocity(&self.velocity).eval(x);
        let q = [u[0] / x[0], u[1] / x[1]];
        let res = |c: Convention| {
            let s = c.signs();
            [(q[0] - s[0] * main).abs(), (q[1] - s[1] * main).abs()]
        };
        let (rp, ro) = (res(Convention::Printed), res(Convention::Opposite));
        Ok(KeyReport {
            x,
            main,
            e1_bound: e1,
            e2_bound: e2,
            u_direct: [u[0], u[1]],
            sup_norm: self.sup,
            local_sup: local,
            residual_printed: rp,
            residual_opposite: ro,
            printed_ok: rp[0] <= e1 && rp[1] <= e2,
            opposite_ok: ro[0] <= e1 && ro[1] <= e2,
        })
    }

    pub fn validate_all(&self, points: &[[f64; 2]], calib: f64) -> Result<Vec<KeyReport>, LemmaError> {
        points.par_iter().map(|&x| self.validate(x, calib)).collect()
    }
}

/// Lemma check with the velocity in the printed orientation.
pub fn validate(omega: &VorticityField, x: [f64; 2], calib: f64) -> Result<KeyReport, LemmaError> {
    LemmaValidator::new(omega, Orientation::Printed)?.validate(x, calib)
}

pub fn validate_oriented(
    omega: &VorticityField,
    x: [f64; 2],
    calib: f64,
    orientation: Orientation,
) -> Result<KeyReport, LemmaError> {
    LemmaValidator::new(omega, orientation)?.validate(x, calib)
}

/// Calibrated constant and the convention it was fitted for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub calib: f64,
    pub convention: Convention,
}

/// Pick the convention with the smaller worst ratio and return that ratio as the constant.
pub fn calibrate(reports: &[KeyReport]) -> Calibration {
    let worst = |c: Convention| {
        reports
            .iter()
            .flat_map(|r| r.ratios(c))
            .fold(0.0_f64, f64::max)
    };
    let (p, o) = (worst(Convention::Printed), worst(Convention::Opposite));
    if p <= o {
        Calibration { calib: p, convention: Convention::Printed }
    } else {
        Calibration { calib: o, convention: Convention::Opposite }
    }
}

/// Ordinary least-squares slope of `y` on `x` and its standard error.
pub fn regression_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    (slope, se)
}

/// Which disjoint half of the synthetic corpus to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSplit {
    Calibration,
    Validation,
}

/// One odd-odd test field with its admissible sample points.
pub struct CorpusEntry {
    pub name: String,
    pub field: VorticityField,
    pub points: Vec<[f64; 2]>,
}

pub const CORPUS_FIELDS: usize = 10;
pub const CORPUS_POINTS: usize = 100;

/// Ten odd-odd fields with a hundred admissible points each; the two splits use
/// disjoint random streams.
pub fn corpus(split: CorpusSplit, resolution: usize) -> Result<Vec<CorpusEntry>, LemmaError> {
    use rand::RngExt;
    let grid = Grid::new(resolution)?;
    let seed = match split {
        CorpusSplit::Calibration => 0x5eed_0001,
        CorpusSplit::Validation => 0x5eed_0002,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(CORPUS_FIELDS);
    for k in 0..CORPUS_FIELDS {
        let (name, field) = match k {
            0 => (
                "single_mode".to_string(),
                VorticityField::from_fn(grid, |a, b| (PI * a).sin() * (PI * b).sin())?,
            ),
            1 => {
                let recipe = DataRecipe::desk();
                let amp = rng.random_range(0.5..2.0);
                let w = VorticityField::from_fn(grid, move |a, b| {
                    amp * a.signum() * b.signum() * stirrer_value([a.abs(), b.abs()], &recipe)
                })?;
                ("stirrer".to_string(), w)
            }
            2..=5 => {
                let terms: Vec<(f64, f64, f64)> = (0..6)
                    .map(|_| {
                        (
                            rng.random_range(1..=6) as f64,
                            rng.random_range(1..=6) as f64,
                            rng.random_range(-1.0..1.0),
                        )
                    })
                    .collect();
                let w = VorticityField::from_fn(grid, move |a, b| {
                    terms.iter().map(|&(p, q, c)| c * (p * PI * a).sin() * (q * PI * b).sin()).sum()
                })?;
                (format!("modes_{k}"), w)
            }
            _ => {
                let blobs: Vec<(f64, f64, f64, f64)> = (0..4)
                    .map(|_| {
                        (
                            rng.random_range(0.05..0.8),
                            rng.random_range(0.02..0.8),
                            rng.random_range(0.06..0.2),
                            rng.random_range(-1.0..1.0),
                        )
                    })
                    .collect();
                let w = VorticityField::from_fn(grid, move |a, b| {
                    let s = a.signum() * b.signum();
                    let (pa, pb) = (a.abs(), b.abs());
                    s * blobs
                        .iter()
                        .map(|&(c1, c2, w, amp)| {
                            let d2 = ((pa - c1).powi(2) + (pb - c2).powi(2)) / (w * w);
                            if d2 < 1.0 {
                                amp * (1.0 - d2).powi(4)
                            } else {
                                0.0
                            }
                        })
                        .sum::<f64>()
                })?;
                (format!("blobs_{k}"), w)
            }
        };
        let points = (0..CORPUS_POINTS)
            .map(|_| {
                let x1 = (rng.random_range((0.02f64).ln()..(0.45f64).ln())).exp();
                let ratio = (rng.random_range((1e-3f64).ln()..(0.999f64).ln())).exp();
                [x1, x1 * ratio]
            })
            .collect();
        out.push(CorpusEntry { name, field: field.odd_odd_projection(), points });
    }
    Ok(out)
}

/// Validate every point of a corpus.
pub fn sweep(
    entries: &[CorpusEntry],
    calib: f64,
    orientation: Orientation,
) -> Result<Vec<KeyReport>, LemmaError> {
    let mut all = Vec::new();
    for e in entries {
        let v = LemmaValidator::new(&e.field, orientation)?;
        all.extend(v.validate_all(&e.points, calib)?);
    }
    Ok(all)
}

pub fn write_reports_csv(path: &Path, reports: &[KeyReport], convention: Convention) -> Result<(), LemmaError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x1,x2,main,u1,u2,r1,r2,e1,e2,convention")?;
    for r in reports {
        let res = r.residual(convention);
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            r.x[0],
            r.x[1],
            r.main,
            r.u_direct[0],
            r.u_direct[1],
            res[0],
            res[1],
            r.e1_bound,
            r.e2_bound,
            convention.name()
        )?;
    }
    w.flush()?;
    Ok(())
}
