//! Separated-variable solution of `Laplace psi = f(r) g(theta)` as a series of radial
//! blocks times angular Fourier modes, with residual and decay certificates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

use crate::field::{Grid, ScalarField};
use crate::initial_data::ScalarProfile;
use crate::quadrature::{self, periodic_trapezoid, QuadratureError};

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("radius {0} is outside [0, 1]")]
    RadiusOutOfRange(f64),
    #[error("block index must be at least 1")]
    BadIndex,
    #[error("radial mesh spacing {spacing:e} near r = {radius:e} does not resolve the profile")]
    UnderResolved { radius: f64, spacing: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(String),
}

const REL_TOL: f64 = 1e-9;
const PER_DECADE: usize = 100;
const PER_BREAK_INTERVAL: usize = 48;
const ANGULAR_SAMPLES: usize = 1 << 15;

/// `a^p` for `0 <= a <= 1` computed through the logarithm.
#[inline]
fn ratio_pow(a: f64, p: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else {
        (p * a.ln()).exp()
    }
}

/// Radial mesh on `[r0, 1]`: geometric background plus uniform refinement between profile breakpoints.
fn radial_mesh(f: &ScalarProfile) -> Vec<f64> {
    let breaks: Vec<f64> = f.breakpoints().iter().copied().filter(|&b| b > 0.0 && b < 1.0).collect();
    let lowest = breaks.first().copied().unwrap_or(1.0);
    let r0 = (0.5 * lowest).min(1e-6);
    let decades = -r0.log10();
    let count = (decades * PER_DECADE as f64).ceil() as usize;
    let mut mesh: Vec<f64> = (0..=count).map(|i| r0 * 10f64.powf(decades * i as f64 / count as f64)).collect();
    for w in breaks.windows(2) {
        for k in 1..PER_BREAK_INTERVAL {
            mesh.push(w[0] + (w[1] - w[0]) * k as f64 / PER_BREAK_INTERVAL as f64);
        }
    }
    mesh.extend(breaks.iter().copied());
    mesh.push(1.0);
    mesh.sort_by(f64::total_cmp);
    mesh.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs());
    mesh
}

/// Tabulated block `f_n` with its first derivative on a shared radial mesh.
#[derive(Debug, Clone)]
pub struct RadialBlock {
    pub n: usize,
    mesh: std::sync::Arc<Vec<f64>>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    curvatures: Vec<f64>,
    inner: Vec<f64>,
}

/// `int_a^b (a/tau)^(4n-1) f(tau) dtau`, the inner integral of the block definition.
fn inner_piece(f: &ScalarProfile, n: usize, a: f64, b: f64, breaks: &[f64]) -> Result<f64, SeriesError> {
    if b <= a {
        return Ok(0.0);
    }
    let p = (4 * n - 1) as f64;
    let est = quadrature::integrate(|t| ratio_pow(a / t, p) * f.eval(t), a, b, breaks, REL_TOL, 1e-300)?;
    Ok(est.value)
}

fn support_meets(f: &ScalarProfile, a: f64, b: f64) -> bool {
    let (lo, hi) = f.support();
    !f.is_identically_zero() && b > lo && a < hi
}

impl RadialBlock {
    fn build(f: &ScalarProfile, n: usize, mesh: std::sync::Arc<Vec<f64>>) -> Result<Self, SeriesError> {
        if n == 0 {
            return Err(SeriesError::BadIndex);
        }
        let m = mesh.len();
        let breaks = f.breakpoints().to_vec();
        let p_h = (4 * n - 1) as f64;
        let p_k = (4 * n) as f64;
        let mut inner = vec![0.0; m];
        for i in (0..m - 1).rev() {
            let (a, b) = (mesh[i], mesh[i + 1]);
            let local = if support_meets(f, a, b) { inner_piece(f, n, a, b, &breaks)? } else { 0.0 };
            inner[i] = ratio_pow(a / b, p_h) * inner[i + 1] + local;
        }
        let mut outer = vec![0.0; m];
        outer[0] = inner[0] * mesh[0] / (8 * n) as f64;
        for i in 0..m - 1 {
            let (a, b) = (mesh[i], mesh[i + 1]);
            let local = if support_meets(f, a, b) {
                let hb = inner[i + 1];
                quadrature::integrate(
                    |s| {
                        let h = ratio_pow(s / b, p_h) * hb
                            + inner_piece(f, n, s, b, &breaks).unwrap_or(f64::NAN);
                        ratio_pow(s / b, p_k) * h
                    },
                    a,
                    b,
                    &breaks,
                    REL_TOL,
                    1e-300,
                )?
                .value
            } else {
                inner[i + 1] * b / (8 * n) as f64 * (1.0 - ratio_pow(a / b, (8 * n) as f64))
            };
            outer[i + 1] = ratio_pow(a / b, p_k) * outer[i] + local;
        }
        let values: Vec<f64> = outer.iter().map(|k| -k).collect();
        let slopes: Vec<f64> = (0..m).map(|i| -(p_k / mesh[i]) * values[i] - inner[i]).collect();
        let curvatures: Vec<f64> = (0..m)
            .map(|i| {
                let r = mesh[i];
                f.eval(r) - slopes[i] / r + (16 * n * n) as f64 * values[i] / (r * r)
            })
            .collect();
        Ok(Self { n, mesh, values, slopes, curvatures, inner })
    }

    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// `(f_n, f_n')` at any `r >= 0` by cubic Hermite interpolation between mesh nodes,
    /// the exact power law below the mesh and the decaying harmonic above `r = 1`.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let mesh = &self.mesh;
        let p = (4 * self.n) as f64;
        let m = mesh.len();
        if r <= mesh[0] {
            if r <= 0.0 {
                return (0.0, 0.0);
            }
            let v = self.values[0] * ratio_pow(r / mesh[0], p);
            return (v, p * v / r);
        }
        if r >= 1.0 {
            let v = self.values[m - 1] * ratio_pow(1.0 / r, p);
            return (v, -p * v / r);
        }
        let i = locate(mesh, r);
        let (a, b) = (mesh[i], mesh[i + 1]);
        let h = b - a;
        let t = (r - a) / h;
        let v = hermite(t, h, self.values[i], self.values[i + 1], self.slopes[i], self.slopes[i + 1]);
        let d = hermite(t, h, self.slopes[i], self.slopes[i + 1], self.curvatures[i], self.curvatures[i + 1]);
        (v, d)
    }

    /// `(f_n, f_n', f_n'')` with the second derivative from the radial equation.
    pub fn eval2(&self, r: f64, f_at_r: f64) -> (f64, f64, f64) {
        let (v, d) = self.eval(r);
        if r <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let nn = (16 * self.n * self.n) as f64;
        let source = if r >= 1.0 { 0.0 } else { f_at_r };
        (v, d, source - d / r + nn * v / (r * r))
    }

    /// The inner integral `H(r)` at mesh nodes.
    pub fn inner_values(&self) -> &[f64] {
        &self.inner
    }
}

#[inline]
fn locate(mesh: &[f64], r: f64) -> usize {
    match mesh.binary_search_by(|p| p.total_cmp(&r)) {
        Ok(i) => i.min(mesh.len() - 2),
        Err(i) => (i - 1).min(mesh.len() - 2),
    }
}

#[inline]
fn hermite(t: f64, h: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1
}

/// `f_n(r) = -(1/r^4n) int_0^r s^(8n-1) int_s^1 tau^(1-4n) f(tau) dtau ds` evaluated directly.
pub fn radial_block(f: &ScalarProfile, n: usize, r: f64) -> Result<f64, SeriesError> {
    if n == 0 {
        return Err(SeriesError::BadIndex);
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(SeriesError::RadiusOutOfRange(r));
    }
    if r == 0.0 || f.is_identically_zero() {
        return Ok(0.0);
    }
    let mut mesh = radial_mesh(f);
    if !mesh.contains(&r) {
        mesh.push(r);
        mesh.sort_by(f64::total_cmp);
    }
    let block = RadialBlock::build(f, n, std::sync::Arc::new(mesh))?;
    let i = block.mesh.iter().position(|&m| m == r).expect("r was inserted");
    Ok(block.values[i])
}

/// Fourier coefficients `a_n, b_n` of a quarter-periodic profile against `cos 4n theta`, `sin 4n theta`.
pub fn angular_coeffs(g: &ScalarProfile, n: usize) -> (f64, f64) {
    let samples: Vec<f64> = (0..ANGULAR_SAMPLES)
        .map(|i| g.eval(FRAC_PI_2 * i as f64 / ANGULAR_SAMPLES as f64))
        .collect();
    coeffs_from_samples(&samples, n)
}

fn coeffs_from_samples(samples: &[f64], n: usize) -> (f64, f64) {
    let m = samples.len();
    let h = FRAC_PI_2 / m as f64;
    let (mut a, mut b) = (0.0, 0.0);
    for (i, v) in samples.iter().enumerate() {
        let t = 4.0 * n as f64 * h * i as f64;
        a += v * t.cos();
        b += v * t.sin();
    }
    (4.0 / PI * a * h, 4.0 / PI * b * h)
}

/// Partial sums `S_N`, `S_i,N`, `S_ij,N` of the series on a torus grid, with the blocks
/// and coefficients used.
#[derive(Debug, Clone)]
pub struct SeriesState {
    pub n_terms: usize,
    pub radial_blocks: Vec<RadialBlock>,
    pub coeffs: Vec<(f64, f64)>,
    pub partials: Option<Partials>,
    f: ScalarProfile,
}

/// Grid tabulation of `psi_N` and its derivatives.
#[derive(Debug, Clone)]
pub struct Partials {
    pub grid: Grid,
    pub psi: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d11: Vec<f64>,
    pub d12: Vec<f64>,
    pub d22: Vec<f64>,
}

/// `psi` and its first and second Cartesian derivatives at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub psi: f64,
    pub d: [f64; 2],
    pub dd: [f64; 3],
}

impl SeriesState {
    /// Build blocks and coefficients without a grid tabulation.
    pub fn build(f: &ScalarProfile, g: &ScalarProfile, n_terms: usize) -> Result<Self, SeriesError> {
        if n_terms == 0 {
            return Err(SeriesError::BadIndex);
        }
        let mesh = std::sync::Arc::new(radial_mesh(f));
        check_mesh(f, &mesh)?;
        let radial_blocks = (1..=n_terms)
            .into_par_iter()
            .map(|n| RadialBlock::build(f, n, mesh.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let samples: Vec<f64> = (0..ANGULAR_SAMPLES)
            .map(|i| g.eval(FRAC_PI_2 * i as f64 / ANGULAR_SAMPLES as f64))
            .collect();
        let coeffs = (1..=n_terms).map(|n| coeffs_from_samples(&samples, n)).collect();
        Ok(Self { n_terms, radial_blocks, coeffs, partials: None, f: f.clone() })
    }

    pub fn profile(&self) -> &ScalarProfile {
        &self.f
    }

    /// Series jet at `x` summed over blocks `lo..=hi` (1-based).
    pub fn jet_range(&self, x: [f64; 2], lo: usize, hi: usize) -> Jet {
        let r = x[0].hypot(x[1]);
        if r == 0.0 || lo > hi {
            return Jet::default();
        }
        let theta = x[1].atan2(x[0]);
        let fr = self.f.eval(r);
        let (c4, s4) = ((4.0 * theta).cos(), (4.0 * theta).sin());
        let (mut cn, mut sn) = (1.0, 0.0);
        let mut acc = [0.0; 6];
        for n in 1..=hi.min(self.n_terms) {
            let next_c = cn * c4 - sn * s4;
            sn = sn * c4 + cn * s4;
            cn = next_c;
            if n < lo {
                continue;
            }
            let (a, b) = self.coeffs[n - 1];
            let k = 4.0 * n as f64;
            let g0 = a * cn + b * sn;
            let g1 = k * (b * cn - a * sn);
            let g2 = -k * k * g0;
            let (v, d, dd) = self.radial_blocks[n - 1].eval2(r, fr);
            acc[0] += v * g0;
            acc[1] += d * g0;
            acc[2] += dd * g0;
            acc[3] += v * g1;
            acc[4] += d * g1;
            acc[5] += v * g2;
        }
        polar_jet(x, r, acc)
    }

    pub fn jet(&self, x: [f64; 2]) -> Jet {
        self.jet_range(x, 1, self.n_terms)
    }

    /// `f(r) sum_{n <= N} g_n(theta)`, the source reproduced by the truncated series.
    pub fn truncated_source(&self, x: [f64; 2]) -> f64 {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return 0.0;
        }
        let theta = x[1].atan2(x[0]);
        let g: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, (a, b))| {
                let k = 4.0 * (i + 1) as f64;
                a * (k * theta).cos() + b * (k * theta).sin()
            })
            .sum();
        self.f.eval(r) * g
    }

    /// Fitted `C` with `|a_n| + |b_n| <= C n^-order` over the retained coefficients.
    pub fn coefficient_decay(&self, order: i32) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, (a, b))| (a.abs() + b.abs()) * ((i + 1) as f64).powi(order))
            .fold(0.0, f64::max)
    }

    pub fn write_blocks_csv(&self, path: &Path) -> Result<(), SeriesError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(w, "r")?;
        for b in &self.radial_blocks {
            write!(w, ",f_{}", b.n)?;
        }
        writeln!(w)?;
        let mesh = self.radial_blocks.first().map(|b| b.mesh().to_vec()).unwrap_or_default();
        for (i, r) in mesh.iter().enumerate() {
            write!(w, "{r:e}")?;
            for b in &self.radial_blocks {
                write!(w, ",{:e}", b.values()[i])?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_mesh(f: &ScalarProfile, mesh: &[f64]) -> Result<(), SeriesError> {
    for w in mesh.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let spacing = w[1] - w[0];
        if f.eval(mid) != 0.0 && spacing > 0.05 * mid.max(1e-3) {
            return Err(SeriesError::UnderResolved { radius: mid, spacing });
        }
    }
    Ok(())
}

/// Cartesian jet from the polar sums `[sum f G, sum f' G, sum f'' G, sum f G', sum f' G', sum f G'']`.
fn polar_jet(x: [f64; 2], r: f64, s: [f64; 6]) -> Jet {
    let [x1, x2] = x;
    let r2 = r * r;
    let r4 = r2 * r2;
    let e = [x1 / r, x2 / r];
    let dth = [-x2 / r2, x1 / r2];
    let ddth = [2.0 * x1 * x2 / r4, (x2 * x2 - x1 * x1) / r4, -2.0 * x1 * x2 / r4];
    let d = [s[1] * e[0] + s[3] * dth[0], s[1] * e[1] + s[3] * dth[1]];
    let pairs = [(0usize, 0usize), (0, 1), (1, 1)];
    let mut dd = [0.0; 3];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let delta = if i == j { 1.0 } else { 0.0 };
        let de = delta / r - e[i] * e[j] / r;
        dd[k] = s[2] * e[i] * e[j]
            + s[1] * de
            + s[4] * (e[i] * dth[j] + e[j] * dth[i])
            + s[5] * dth[i] * dth[j]
            + s[3] * ddth[k];
    }
    Jet { psi: s[0], d, dd }
}

/// Build blocks, coefficients and the grid tabulation of the partial sums.
pub fn partial_stream(
    f: &ScalarProfile,
    g: &ScalarProfile,
    n_terms: usize,
    grid: Grid,
) -> Result<SeriesState, SeriesError> {
    let mut state = SeriesState::build(f, g, n_terms)?;
    let n = grid.len();
    let jets: Vec<Jet> = (0..n).into_par_iter().map(|i| state.jet(grid.node(i))).collect();
    state.partials = Some(Partials {
        grid,
        psi: jets.iter().map(|j| j.psi).collect(),
        d1: jets.iter().map(|j| j.d[0]).collect(),
        d2: jets.iter().map(|j| j.d[1]).collect(),
        d11: jets.iter().map(|j| j.dd[0]).collect(),
        d12: jets.iter().map(|j| j.dd[1]).collect(),
        d22: jets.iter().map(|j| j.dd[2]).collect(),
    });
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyGap {
    pub m: usize,
    pub n: usize,
    /// `sup |S_ij,N - S_ij,M|` over the three second derivatives.
    pub sup_gap: f64,
    /// The bound `C / M^3` with the constant derived from the coefficient decay.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayMargin {
    pub quantity: String,
    pub fitted_constant: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub n_terms: usize,
    pub r_min: f64,
    /// `sup |Laplace psi_N - f sum_{n<=N} g_n|` on `r_min <= r <= r_max`.
    pub poisson_residual: f64,
    pub poisson_residual_l2: f64,
    /// Same residual against the untruncated source `f g`.
    pub residual_vs_source: f64,
    pub residual_vs_source_l2: f64,
    pub source_sup: f64,
    pub cauchy_gaps: Vec<CauchyGap>,
    pub decay_margins: Vec<DecayMargin>,
}

impl ResidualReport {
    pub fn write_json(&self, path: &Path) -> Result<(), SeriesError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| SeriesError::Json(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Smooth radial cutoff: 1 for `r <= 0.55`, 0 for `r >= 0.9`.
fn cutoff(r: f64) -> f64 {
    1.0 - crate::initial_data::smooth_step((r - 0.55) / 0.35)
}

/// Spectral Laplacian of the tabulated `psi_N` (cut off smoothly outside `r = 0.55`)
/// compared with the truncated and full sources on `r_min <= r <= r_max`.
pub fn verify_poisson_identity(
    state: &SeriesState,
    g: &ScalarProfile,
    r_min: f64,
    r_max: f64,
) -> ResidualReport {
    let mut report = ResidualReport { n_terms: state.n_terms, r_min, ..Default::default() };
    let Some(p) = &state.partials else {
        return report;
    };
    let grid = p.grid;
    let cut: Vec<f64> = (0..grid.len())
        .map(|i| {
            let [x1, x2] = grid.node(i);
            p.psi[i] * cutoff(x1.hypot(x2))
        })
        .collect();
    let lap = ScalarField::from_values(grid, cut).expect("tabulation is finite").laplacian();
    let h2 = grid.spacing() * grid.spacing();
    let (mut s_trunc, mut l2_trunc, mut s_full, mut l2_full, mut src) = (0.0_f64, 0.0, 0.0_f64, 0.0, 0.0_f64);
    for i in 0..grid.len() {
        let x = grid.node(i);
        let r = x[0].hypot(x[1]);
        if r < r_min || r > r_max {
            continue;
        }
        let trunc = state.truncated_source(x);
        let full = state.f.eval(r) * g.eval(x[1].atan2(x[0]));
        let v = lap.values()[i];
        src = src.max(full.abs());
        s_trunc = s_trunc.max((v - trunc).abs());
        s_full = s_full.max((v - full).abs());
        l2_trunc += (v - trunc).powi(2) * h2;
        l2_full += (v - full).powi(2) * h2;
    }
    report.poisson_residual = s_trunc;
    report.poisson_residual_l2 = l2_trunc.sqrt();
    report.residual_vs_source = s_full;
    report.residual_vs_source_l2 = l2_full.sqrt();
    report.source_sup = src;
    report
}

/// Polar sample on the quarter plane: mesh radii up to `r_max` times `angles` directions.
fn polar_sample(state: &SeriesState, r_max: f64, angles: usize) -> Vec<[f64; 2]> {
    let mesh = state.radial_blocks[0].mesh();
    let mut pts = Vec::new();
    for &r in mesh.iter().filter(|&&r| r <= r_max) {
        for k in 0..angles {
            let t = FRAC_PI_2 * (k as f64 + 0.5) / angles as f64;
            pts.push([r * t.cos(), r * t.sin()]);
        }
    }
    pts
}

/// `max_n sup_x |d_i d_j (f_n(r) cos 4n theta)| + |d_i d_j (f_n(r) sin 4n theta)|`.
fn block_hessian_bound(state: &SeriesState, pts: &[[f64; 2]]) -> f64 {
    let unit = |n: usize, a: f64, b: f64| -> f64 {
        let mut s = state.clone();
        s.coeffs = vec![(0.0, 0.0); state.n_terms];
        s.coeffs[n - 1] = (a, b);
        pts.par_iter()
            .map(|&x| {
                let j = s.jet_range(x, n, n);
                j.dd.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            })
            .reduce(|| 0.0, f64::max)
    };
    (1..=state.n_terms).map(|n| unit(n, 1.0, 0.0) + unit(n, 0.0, 1.0)).fold(0.0, f64::max)
}

/// Cauchy gaps of the second derivatives between consecutive truncations in `ladder`,
/// with the bound `C / M^3`, `C = C_4 D / 3` from the decay constant `C_4` and the
/// uniform block Hessian bound `D`.
pub fn cauchy_gaps(state: &SeriesState, ladder: &[usize], angles: usize) -> Vec<CauchyGap> {
    let pts = polar_sample(state, 1.0, angles);
    let c4 = state.coefficient_decay(4);
    let d = block_hessian_bound(state, &pts);
    let c = c4 * d / 3.0;
    ladder
        .windows(2)
        .filter(|w| w[1] <= state.n_terms)
        .map(|w| {
            let (m, n) = (w[0], w[1]);
            let sup_gap = pts
                .par_iter()
                .map(|&x| {
                    let j = state.jet_range(x, m + 1, n);
                    j.dd.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
                })
                .reduce(|| 0.0, f64::max);
            CauchyGap { m, n, sup_gap, bound: c / (m as f64).powi(3) }
        })
        .collect()
}

/// Fitted constants of `|D^2 psi| <= C E(r)`, `|D psi| <= C r E(r)`, `|psi| <= C r^2 E(r)`
/// with `E(r) = sup_[0,r] fbar + sup_[0,r] tau fbar'`.
pub fn verify_decay_bounds(state: &SeriesState, envelope: &ScalarProfile) -> ResidualReport {
    let mut report = ResidualReport { n_terms: state.n_terms, ..Default::default() };
    let angles = 64;
    let mesh: Vec<f64> = state.radial_blocks[0].mesh().iter().copied().filter(|&r| r <= 1.0).collect();
    let mut env_sup = 0.0_f64;
    let mut slope_sup = 0.0_f64;
    let (mut c0, mut c1, mut c2) = (0.0_f64, 0.0_f64, 0.0_f64);
    for &r in &mesh {
        let h = 1e-6 * r;
        let fbar = envelope.eval(r);
        let dfbar = (envelope.eval(r + h) - envelope.eval((r - h).max(0.0))) / (r + h - (r - h).max(0.0));
        env_sup = env_sup.max(fbar);
        slope_sup = slope_sup.max(r * dfbar);
        let e = env_sup + slope_sup;
        let (mut m0, mut m1, mut m2) = (0.0_f64, 0.0_f64, 0.0_f64);
        for k in 0..angles {
            let t = FRAC_PI_2 * (k as f64 + 0.5) / angles as f64;
            let j = state.jet([r * t.cos(), r * t.sin()]);
            m0 = m0.max(j.psi.abs());
            m1 = m1.max(j.d[0].abs()).max(j.d[1].abs());
            m2 = j.dd.iter().fold(m2, |a, v| a.max(v.abs()));
        }
        if e > 0.0 {
            c0 = c0.max(m0 / (r * r * e));
            c1 = c1.max(m1 / (r * e));
            c2 = c2.max(m2 / e);
        } else if m0 + m1 + m2 > 0.0 {
            c0 = f64::INFINITY;
        }
    }
    report.decay_margins = vec![
        DecayMargin { quantity: "psi".into(), fitted_constant: c0 },
        DecayMargin { quantity: "gradient".into(), fitted_constant: c1 },
        DecayMargin { quantity: "hessian".into(), fitted_constant: c2 },
    ];
    report
}

/// Largest defect, relative to the sizes of the individual terms, of `f_n'' + f_n'/r - 16 n^2 f_n / r^2 = f` by centred
/// differences of the tabulation at interior mesh nodes in `[r_min, 1]`.
pub fn radial_equation_defect(block: &RadialBlock, f: &ScalarProfile, r_min: f64) -> f64 {
    let mesh = block.mesh();
    let v = block.values();
    let nn = (16 * block.n * block.n) as f64;
    let mut worst = 0.0_f64;
    for i in 1..mesh.len() - 1 {
        let r = mesh[i];
        if r < r_min {
            continue;
        }
        let (hl, hr) = (r - mesh[i - 1], mesh[i + 1] - r);
        let d1 = (v[i + 1] * hl * hl - v[i - 1] * hr * hr + v[i] * (hr * hr - hl * hl)) / (hl * hr * (hl + hr));
        let d2 = 2.0 * (v[i + 1] * hl + v[i - 1] * hr - v[i] * (hl + hr)) / (hl * hr * (hl + hr));
        let lhs = d2 + d1 / r - nn * v[i] / (r * r);
        let scale = d2.abs() + (d1 / r).abs() + (nn * v[i] / (r * r)).abs() + f.eval(r).abs();
        if scale > 0.0 {
            worst = worst.max((lhs - f.eval(r)).abs() / scale);
        }
    }
    worst
}

/// Helper used by tests and the CLI: profile `tau -> tau^2` on `[0, 1]`.
pub fn quadratic_profile() -> ScalarProfile {
    ScalarProfile::new("tau^2", (0.0, 1.0), crate::initial_data::Smoothness::Smooth, Vec::new(), |t| t * t)
}

/// Angular profile `sin(4 k theta)` or `cos(4 k theta)`.
pub fn trig_profile(k: usize, sine: bool) -> ScalarProfile {
    let kk = 4.0 * k as f64;
    ScalarProfile::new(
        if sine { "sin" } else { "cos" },
        (f64::NEG_INFINITY, f64::INFINITY),
        crate::initial_data::Smoothness::Smooth,
        Vec::new(),
        move |t| if sine { (kk * t).sin() } else { (kk * t).cos() },
    )
}

/// Mean of a quarter-periodic profile by the trapezoid rule.
pub fn angular_mean(g: &ScalarProfile) -> f64 {
    periodic_trapezoid(|t| g.eval(t), 0.0, FRAC_PI_2, ANGULAR_SAMPLES)
}
