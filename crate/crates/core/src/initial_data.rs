//! The strip-plus-stirrer initial vorticity `w0 = m + h` and its geometry.
//!
//! `m(r, theta) = f(r) g(theta)` is a sum of scaled radial bumps times a
//! quarter-periodic angular dipole; `h` is a plateau bump in the first quadrant
//! extended oddly in both coordinates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, PI};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

use crate::field::{FieldError, Grid, VorticityField};
use crate::key_lemma::strain_kernel;
use crate::quadrature::GaussLegendre;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bump plateau {plateau} must be positive and below the support {support}")]
    BadBump { plateau: f64, support: f64 },
    #[error("invalid recipe: {0}")]
    InvalidRecipe(String),
    #[error("grid of resolution {resolution} puts {cells:.2} cells across the smallest strip; need resolution >= {required}")]
    UnderResolved { resolution: usize, cells: f64, required: usize },
    #[error("recipe file: {0}")]
    Parse(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Smooth transition from 0 at `t <= 0` to 1 at `t >= 1`, equal to `1/2` at `t = 1/2`.
#[inline]
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

#[inline]
fn bump(r: f64, plateau: f64, support: f64) -> f64 {
    let r = r.abs();
    if r <= plateau {
        1.0
    } else if r >= support {
        0.0
    } else {
        smooth_step((support - r) / (support - plateau))
    }
}

/// Even `C^inf` bump: 1 on `(-plateau, plateau)`, 0 outside `(-support, support)`.
pub fn plateau_bump(r: f64, plateau: f64, support: f64) -> Result<f64, DataError> {
    if !(plateau > 0.0 && plateau < support) {
        return Err(DataError::BadBump { plateau, support });
    }
    Ok(bump(r, plateau, support))
}

/// Parameters of the initial vorticity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataRecipe {
    pub beta: f64,
    pub n0: u32,
    pub n_max: u32,
    pub theta0: f64,
    pub base: u32,
    pub bump_plateau: f64,
    pub bump_support: f64,
    pub h_amplitude: f64,
}

impl Default for DataRecipe {
    fn default() -> Self {
        Self::desk()
    }
}

impl DataRecipe {
    /// Base 4 with the narrow bumps; geometry only, far too fine to evolve on a grid.
    pub fn fine() -> Self {
        Self {
            beta: 1.0,
            n0: 4,
            n_max: 7,
            theta0: PI / 24.0,
            base: 4,
            bump_plateau: 1.0 / 32.0,
            bump_support: 1.0 / 16.0,
            h_amplitude: 1.0,
        }
    }

    /// Base 2 with widened bumps so three strips resolve at resolution 2048.
    pub fn desk() -> Self {
        Self {
            beta: 1.0,
            n0: 4,
            n_max: 6,
            theta0: PI / 24.0,
            base: 2,
            bump_plateau: 1.0 / 8.0,
            bump_support: 1.0 / 4.0,
            h_amplitude: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidRecipe(m));
        if !(self.beta > 0.5 && self.beta <= 1.0) {
            return bad(format!("beta = {} must lie in (1/2, 1]", self.beta));
        }
        if self.n0 < 4 {
            return bad(format!("n0 = {} must be at least 4", self.n0));
        }
        if self.n_max < self.n0 {
            return bad(format!("n_max = {} is below n0 = {}", self.n_max, self.n0));
        }
        if !(self.theta0 > 0.0 && self.theta0 < PI / 12.0) {
            return bad(format!("theta0 = {} must lie in (0, pi/12)", self.theta0));
        }
        if self.base != 2 && self.base != 4 {
            return bad(format!("base = {} must be 2 or 4", self.base));
        }
        if !(self.bump_plateau > 0.0 && self.bump_plateau < self.bump_support) {
            return bad(format!(
                "bump plateau {} must be positive and below the support {}",
                self.bump_plateau, self.bump_support
            ));
        }
        let b = self.base as f64;
        if (1.0 + self.bump_support) / b >= 1.0 - self.bump_support {
            return bad(format!("bump support {} makes neighbouring strips overlap", self.bump_support));
        }
        if self.stirrer_outer() >= 5.0 / 6.0 {
            return bad(format!(
                "stirrer corner base^-(n0-2) = {} must be below 5/6",
                self.stirrer_outer()
            ));
        }
        if self.strip_center(self.n0) * (1.0 + self.bump_support) >= self.stirrer_outer() {
            return bad("outermost strip reaches the stirrer support".into());
        }
        if !(self.h_amplitude.is_finite() && self.h_amplitude >= 0.0) {
            return bad(format!("h_amplitude = {} must be finite and nonnegative", self.h_amplitude));
        }
        Ok(())
    }

    #[inline]
    pub fn strip_center(&self, n: u32) -> f64 {
        (self.base as f64).powi(-(n as i32))
    }

    /// Lower corner of the stirrer plateau, `base^-(n0-3)`.
    pub fn stirrer_inner(&self) -> f64 {
        (self.base as f64).powi(-(self.n0 as i32 - 3))
    }

    /// Lower corner of the stirrer support, `base^-(n0-2)`.
    pub fn stirrer_outer(&self) -> f64 {
        (self.base as f64).powi(-(self.n0 as i32 - 2))
    }

    pub fn amplitude(&self, n: u32) -> f64 {
        (n as f64).powf(-self.beta)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        let r: DataRecipe = toml::from_str(text).map_err(|e| DataError::Parse(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("recipe fields are plain numbers")
    }
}

/// Smoothness class of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    Smooth,
    C1,
    Continuous,
}

/// A real function of one variable with a declared support and known kinks.
#[derive(Clone)]
pub struct ScalarProfile {
    name: String,
    support: (f64, f64),
    smoothness: Smoothness,
    breaks: Vec<f64>,
    func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for ScalarProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarProfile")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl ScalarProfile {
    pub fn new<F>(name: &str, support: (f64, f64), smoothness: Smoothness, breaks: Vec<f64>, func: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.to_string(), support, smoothness, breaks, func: Arc::new(func) }
    }

    pub fn zero() -> Self {
        Self::new("zero", (0.0, 0.0), Smoothness::Smooth, Vec::new(), |_| 0.0)
    }

    /// Evaluate, returning 0 outside the declared support.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.support.0 || x > self.support.1 {
            0.0
        } else {
            (self.func)(x)
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    /// Points where the profile changes regime, useful as quadrature breakpoints.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn is_identically_zero(&self) -> bool {
        self.support.0 >= self.support.1
    }

    /// The radial part `f` of the recipe.
    pub fn radial(recipe: &DataRecipe) -> Self {
        let r = *recipe;
        let mut breaks = Vec::new();
        for n in recipe.n0..=recipe.n_max {
            let c = recipe.strip_center(n);
            for k in [-recipe.bump_support, -recipe.bump_plateau, recipe.bump_plateau, recipe.bump_support] {
                breaks.push(c * (1.0 + k));
            }
        }
        breaks.sort_by(f64::total_cmp);
        let hi = recipe.strip_center(recipe.n0) * (1.0 + recipe.bump_support);
        Self::new("radial", (0.0, hi), Smoothness::Smooth, breaks, move |x| radial_profile(x, &r))
    }

    /// The angular dipole `g` of the recipe on `[0, pi/2]`.
    pub fn angular(recipe: &DataRecipe) -> Self {
        let r = *recipe;
        let t = recipe.theta0;
        let mut breaks: Vec<f64> = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]
            .iter()
            .flat_map(|k| [FRAC_PI_3 + k * t, FRAC_PI_6 - k * t])
            .collect();
        breaks.sort_by(f64::total_cmp);
        Self::new("angular", (f64::NEG_INFINITY, f64::INFINITY), Smoothness::Smooth, breaks, move |x| {
            angular_profile(x, &r)
        })
    }
}

/// `f(r) = sum_n n^-beta phi(base^n (r - base^-n))` over the realised strips.
pub fn radial_profile(r: f64, recipe: &DataRecipe) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let b = recipe.base as f64;
    let guess = (-r.ln() / b.ln()).round() as i64;
    let mut total = 0.0;
    for n in (guess - 1)..=(guess + 1) {
        if n < recipe.n0 as i64 || n > recipe.n_max as i64 {
            continue;
        }
        let n = n as u32;
        let c = recipe.strip_center(n);
        let local = (r - c) / c;
        if local.abs() < recipe.bump_support {
            total += recipe.amplitude(n) * bump(local, recipe.bump_plateau, recipe.bump_support);
        }
    }
    total
}

#[inline]
fn angular_bump(theta: f64, theta0: f64) -> f64 {
    bump(theta - (FRAC_PI_3 + 0.5 * theta0), theta0 / 6.0, theta0 / 2.0)
}

/// Quarter-periodic `g(theta) = phi(theta) - phi(pi/2 - theta)`.
pub fn angular_profile(theta: f64, recipe: &DataRecipe) -> f64 {
    let t = theta.rem_euclid(FRAC_PI_2);
    angular_bump(t, recipe.theta0) - angular_bump(FRAC_PI_2 - t, recipe.theta0)
}

/// One-dimensional factor of the stirrer: 1 on `[inner, 2/3]`, 0 outside `(outer, 5/6)`.
fn stirrer_factor(t: f64, recipe: &DataRecipe) -> f64 {
    let (lo, hi) = stirrer_transitions(recipe);
    smooth_step((t - lo.0) / (lo.1 - lo.0)) * (1.0 - smooth_step((t - hi.0) / (hi.1 - hi.0)))
}

/// Rising and falling transition intervals, each half as wide as its gap and centred in it.
fn stirrer_transitions(recipe: &DataRecipe) -> ((f64, f64), (f64, f64)) {
    let (a_out, a_in) = (recipe.stirrer_outer(), recipe.stirrer_inner());
    let (b_in, b_out) = (2.0 / 3.0, 5.0 / 6.0);
    let w_lo = 0.25 * (a_in - a_out);
    let w_hi = 0.25 * (b_out - b_in);
    ((a_out + w_lo, a_in - w_lo), (b_in + w_hi, b_out - w_hi))
}

/// The stirrer `h` on the first quadrant.
pub fn stirrer(x: [f64; 2], recipe: &DataRecipe) -> Result<f64, DataError> {
    if recipe.stirrer_outer() >= 5.0 / 6.0 {
        return Err(DataError::InvalidRecipe(format!(
            "stirrer corner base^-(n0-2) = {} must be below 5/6",
            recipe.stirrer_outer()
        )));
    }
    Ok(stirrer_value(x, recipe))
}

#[inline]
pub(crate) fn stirrer_value(x: [f64; 2], recipe: &DataRecipe) -> f64 {
    if recipe.h_amplitude == 0.0 {
        return 0.0;
    }
    recipe.h_amplitude * stirrer_factor(x[0], recipe) * stirrer_factor(x[1], recipe)
}

/// Breakpoints of the stirrer along one axis, from the support corner to 5/6.
pub fn stirrer_breaks(recipe: &DataRecipe) -> Vec<f64> {
    let (lo, hi) = stirrer_transitions(recipe);
    vec![lo.0, lo.1, hi.0, hi.1]
}

/// `m(x)` from its polar definition; zero at the origin.
#[inline]
pub fn balanced_part(x: [f64; 2], recipe: &DataRecipe) -> f64 {
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        return 0.0;
    }
    let f = radial_profile(r, recipe);
    if f == 0.0 {
        return 0.0;
    }
    f * angular_profile(x[1].atan2(x[0]), recipe)
}

/// `w0 = m + h` at a first-quadrant point.
#[inline]
pub fn quadrant_value(x: [f64; 2], recipe: &DataRecipe) -> f64 {
    balanced_part(x, recipe) + stirrer_value(x, recipe)
}

/// `w0` anywhere on the torus via the odd-odd extension.
pub fn initial_value(x: [f64; 2], recipe: &DataRecipe) -> f64 {
    let (a, b) = (crate::field::Grid::wrap(x[0]), crate::field::Grid::wrap(x[1]));
    if a == 0.0 || b == 0.0 || a == -1.0 || b == -1.0 {
        return 0.0;
    }
    a.signum() * b.signum() * quadrant_value([a.abs(), b.abs()], recipe)
}

/// Cells across the support of the innermost strip at a given resolution.
pub fn cells_across_smallest_strip(recipe: &DataRecipe, resolution: usize) -> f64 {
    let width = 2.0 * recipe.bump_support * recipe.strip_center(recipe.n_max);
    width * resolution as f64 / 2.0
}

/// Sample `w0` on the grid: quadrant samples, exact diagonal antisymmetry of `m`,
/// odd reflections in both axes.
pub fn synthesize(recipe: &DataRecipe, grid: Grid) -> Result<VorticityField, DataError> {
    recipe.validate()?;
    let n = grid.resolution();
    let cells = cells_across_smallest_strip(recipe, n);
    if cells < 8.0 {
        let needed = 8.0 * n as f64 / cells;
        return Err(DataError::UnderResolved {
            resolution: n,
            cells,
            required: (needed.ceil() as usize).next_power_of_two(),
        });
    }
    let half = n / 2;
    let mut quad = vec![0.0; half * half];
    quad.par_chunks_mut(half).enumerate().for_each(|(a2, row)| {
        let j2 = half + a2;
        for (a1, v) in row.iter_mut().enumerate() {
            if a1 == 0 || a2 == 0 {
                continue;
            }
            let j1 = half + a1;
            let x = [grid.coord(j1), grid.coord(j2)];
            let m = if a1 > a2 {
                balanced_part(x, recipe)
            } else if a1 < a2 {
                -balanced_part([x[1], x[0]], recipe)
            } else {
                0.0
            };
            *v = m + stirrer_value(x, recipe);
        }
    });
    let mut values = vec![0.0; grid.len()];
    for a2 in 1..half {
        for a1 in 1..half {
            let v = quad[a2 * half + a1];
            let (p1, p2) = (half + a1, half + a2);
            let (q1, q2) = (half - a1, half - a2);
            values[grid.index(p1, p2)] = v;
            values[grid.index(q1, p2)] = -v;
            values[grid.index(p1, q2)] = -v;
            values[grid.index(q1, q2)] = v;
        }
    }
    Ok(VorticityField::from_values(grid, values)?)
}

/// An annular sector `[r_in, r_out] x [theta_lo, theta_hi]` in the first quadrant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnularSector {
    pub r_in: f64,
    pub r_out: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
}

impl AnnularSector {
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let r = x[0].hypot(x[1]);
        let t = x[1].atan2(x[0]);
        r >= self.r_in && r <= self.r_out && t >= self.theta_lo && t <= self.theta_hi
    }

    pub fn area(&self) -> f64 {
        0.5 * (self.r_out * self.r_out - self.r_in * self.r_in) * (self.theta_hi - self.theta_lo)
    }

    /// Image under `(x1, x2) -> (x2, x1)`.
    pub fn swapped(&self) -> Self {
        Self {
            r_in: self.r_in,
            r_out: self.r_out,
            theta_lo: FRAC_PI_2 - self.theta_hi,
            theta_hi: FRAC_PI_2 - self.theta_lo,
        }
    }

    pub fn point(&self, r: f64, theta: f64) -> [f64; 2] {
        [r * theta.cos(), r * theta.sin()]
    }

    /// Extent in `x1` over the sector.
    pub fn x1_range(&self) -> (f64, f64) {
        (self.r_in * self.theta_hi.cos(), self.r_out * self.theta_lo.cos())
    }

    /// Anticlockwise boundary polygon with `per_side` points on each of the four sides.
    pub fn boundary(&self, per_side: usize) -> Vec<[f64; 2]> {
        let mut pts = Vec::with_capacity(4 * per_side);
        let k = per_side as f64;
        for i in 0..per_side {
            let s = i as f64 / k;
            pts.push(self.point(self.r_in + s * (self.r_out - self.r_in), self.theta_lo));
        }
        for i in 0..per_side {
            let s = i as f64 / k;
            pts.push(self.point(self.r_out, self.theta_lo + s * (self.theta_hi - self.theta_lo)));
        }
        for i in 0..per_side {
            let s = i as f64 / k;
            pts.push(self.point(self.r_out - s * (self.r_out - self.r_in), self.theta_hi));
        }
        for i in 0..per_side {
            let s = i as f64 / k;
            pts.push(self.point(self.r_in, self.theta_hi - s * (self.theta_hi - self.theta_lo)));
        }
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lobe {
    Plus,
    Minus,
}

impl Lobe {
    pub fn tag(self) -> &'static str {
        match self {
            Lobe::Plus => "+",
            Lobe::Minus => "-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    pub n: u32,
    pub amplitude: f64,
    pub plus: AnnularSector,
    pub minus: AnnularSector,
}

impl Strip {
    pub fn lobe(&self, lobe: Lobe) -> &AnnularSector {
        match lobe {
            Lobe::Plus => &self.plus,
            Lobe::Minus => &self.minus,
        }
    }
}

/// Axis-aligned rectangle `[x1_lo, x1_hi] x [x2_lo, x2_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x1: (f64, f64),
    pub x2: (f64, f64),
}

impl Rect {
    pub fn contains(&self, x: [f64; 2]) -> bool {
        x[0] >= self.x1.0 && x[0] <= self.x1.1 && x[1] >= self.x2.0 && x[1] <= self.x2.1
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.x1.1 > self.x1.0 && self.x2.1 > self.x2.0)
    }

    pub fn intersects_sector(&self, s: &AnnularSector) -> bool {
        let samples = 64;
        for i in 0..=samples {
            for j in 0..=samples {
                let r = s.r_in + (s.r_out - s.r_in) * i as f64 / samples as f64;
                let t = s.theta_lo + (s.theta_hi - s.theta_lo) * j as f64 / samples as f64;
                if self.contains(s.point(r, t)) {
                    return true;
                }
            }
        }
        false
    }
}

/// Geometry of the strips `D(n) = D+(n) u D-(n)` and of the stirrer support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripAtlas {
    pub recipe: DataRecipe,
    pub strips: Vec<Strip>,
    pub quadrant: Rect,
    pub stirrer_support: Rect,
}

impl StripAtlas {
    pub fn strip(&self, n: u32) -> Option<&Strip> {
        self.strips.iter().find(|s| s.n == n)
    }

    /// Smallest angular distance from any lobe to the diagonal.
    pub fn diagonal_clearance(&self) -> f64 {
        self.strips
            .iter()
            .flat_map(|s| [s.plus.theta_lo - FRAC_PI_4, FRAC_PI_4 - s.minus.theta_hi])
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether consecutive radial intervals are separated.
    pub fn radially_disjoint(&self) -> bool {
        self.strips.windows(2).all(|w| w[1].plus.r_out < w[0].plus.r_in)
    }

    /// Strip and lobe containing `x`, if any.
    pub fn locate(&self, x: [f64; 2]) -> Option<(u32, Lobe)> {
        for s in &self.strips {
            if s.plus.contains(x) {
                return Some((s.n, Lobe::Plus));
            }
            if s.minus.contains(x) {
                return Some((s.n, Lobe::Minus));
            }
        }
        None
    }
}

pub fn strip_regions(recipe: &DataRecipe) -> StripAtlas {
    let strips = (recipe.n0..=recipe.n_max)
        .map(|n| {
            let c = recipe.strip_center(n);
            let plus = AnnularSector {
                r_in: c * (1.0 - recipe.bump_support),
                r_out: c * (1.0 + recipe.bump_support),
                theta_lo: FRAC_PI_3,
                theta_hi: FRAC_PI_3 + recipe.theta0,
            };
            Strip { n, amplitude: recipe.amplitude(n), plus, minus: plus.swapped() }
        })
        .collect();
    StripAtlas {
        recipe: *recipe,
        strips,
        quadrant: Rect { x1: (0.0, 1.0), x2: (0.0, 1.0) },
        stirrer_support: Rect {
            x1: (recipe.stirrer_outer(), 5.0 / 6.0),
            x2: (recipe.stirrer_outer(), 5.0 / 6.0),
        },
    }
}

/// `int_[0,1]^2 y1 y2 / |y|^4 h(y) dy` by composite tensor Gauss–Legendre quadrature.
pub fn stirrer_kernel_integral(recipe: &DataRecipe) -> f64 {
    let mut edges = vec![recipe.stirrer_outer()];
    edges.extend(stirrer_breaks(recipe));
    edges.push(5.0 / 6.0);
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let gl = GaussLegendre::new(24);
    let mut nodes = Vec::new();
    for w in edges.windows(2) {
        let panels = 8;
        let h = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let a = w[0] + p as f64 * h;
            nodes.extend(gl.on(a, a + h));
        }
    }
    let f: Vec<f64> = nodes.iter().map(|&(x, _)| stirrer_factor(x, recipe)).collect();
    let mut total = 0.0;
    for (i, &(y1, w1)) in nodes.iter().enumerate() {
        if f[i] == 0.0 {
            continue;
        }
        for (j, &(y2, w2)) in nodes.iter().enumerate() {
            total += w1 * w2 * f[i] * f[j] * strain_kernel([y1, y2]);
        }
    }
    recipe.h_amplitude * total
}

/// Admissible envelope `C (log 1/r)^-beta` near the origin, closed by a concave quadratic.
///
/// The logarithmic branch is used on `(0, r_c]` with `r_c = e^-(beta+1) / 2`, where it is
/// concave; the quadratic matches value and slope at `r_c` and vanishes at `r = 1`.
pub fn envelope(scale: f64, beta: f64) -> ScalarProfile {
    let rc = 0.5 * (-(beta + 1.0)).exp();
    let log_branch = move |r: f64| (1.0 / r).ln().powf(-beta);
    let a = log_branch(rc);
    let b = beta * (1.0 / rc).ln().powf(-beta - 1.0) / rc;
    let d = (-a - b * (1.0 - rc)) / ((1.0 - rc) * (1.0 - rc));
    ScalarProfile::new("envelope", (0.0, 1.0), Smoothness::C1, vec![rc], move |r| {
        let v = if r <= 0.0 {
            0.0
        } else if r <= rc {
            log_branch(r)
        } else {
            let s = r - rc;
            a + b * s + d * s * s
        };
        scale * v
    })
}

/// Smallest scale with `|f| <= envelope(scale, beta)` on a fine geometric sample.
pub fn fit_envelope(radial: &ScalarProfile, beta: f64) -> (ScalarProfile, f64) {
    let unit = envelope(1.0, beta);
    let mut scale = 0.0_f64;
    let samples = 200_000;
    for i in 1..samples {
        let r = (-(12.0 * i as f64 / samples as f64) * std::f64::consts::LN_10).exp();
        let e = unit.eval(r);
        if e > 0.0 {
            scale = scale.max(radial.eval(r).abs() / e);
        }
    }
    for &r in radial.breakpoints() {
        let e = unit.eval(r);
        if e > 0.0 {
            scale = scale.max(radial.eval(r).abs() / e);
        }
    }
    (envelope(scale, beta), scale)
}
