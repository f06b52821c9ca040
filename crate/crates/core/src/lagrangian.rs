//! Particle tracking, transported strip integrals and the hyperbolic decomposition of
//! trajectories `Phi(t, x) = (e^(gamma + eta1) x1, e^(-gamma + eta2) x2)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::FRAC_2_PI;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

use crate::field::{biot_savart_oriented, FieldError, LocalInterpolator, TimeSeries};
use crate::initial_data::{balanced_part, stirrer, AnnularSector, DataRecipe, Lobe, StripAtlas};
use crate::key_lemma::{strain_kernel, Convention};
use crate::quadrature::GaussLegendre;

#[derive(Debug, Error)]
pub enum LagrangianError {
    #[error("particle {id} left the quadrant at t = {time}")]
    LeftQuadrant { id: usize, time: f64 },
    #[error("requested step {requested} exceeds the velocity sampling interval {available}")]
    TooCoarse { requested: f64, available: f64 },
    #[error("tracked region {0} degenerated")]
    DegenerateRegion(String),
    #[error("no particle satisfies the request: {0}")]
    NoParticles(String),
    #[error("time grids of bundle and integrals differ")]
    TimeMismatch,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Velocity available at arbitrary times and positions.
pub trait VelocityProvider: Sync {
    fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2];

    /// Largest particle step compatible with the time sampling of the provider.
    fn max_step(&self) -> f64 {
        f64::INFINITY
    }
}

pub struct ZeroVelocity;

impl VelocityProvider for ZeroVelocity {
    fn velocity(&self, _t: f64, _x: [f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }
}

/// Stationary strain `u = (lambda x1, -lambda x2)`.
#[derive(Debug, Clone, Copy)]
pub struct LinearStrain {
    pub lambda: f64,
}

impl VelocityProvider for LinearStrain {
    fn velocity(&self, _t: f64, x: [f64; 2]) -> [f64; 2] {
        [self.lambda * x[0], -self.lambda * x[1]]
    }
}

/// Velocity given by a closure of `(t, x)`.
pub struct FnVelocity<F>(pub F);

impl<F: Fn(f64, [f64; 2]) -> [f64; 2] + Sync> VelocityProvider for FnVelocity<F> {
    fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        (self.0)(t, x)
    }
}

/// Velocity of a simulated run: local interpolation in space, cubic Lagrange in time.
pub struct SeriesVelocity {
    times: Vec<f64>,
    u1: Vec<Vec<f64>>,
    u2: Vec<Vec<f64>>,
    interp: LocalInterpolator,
}

impl SeriesVelocity {
    pub fn new(series: &TimeSeries) -> Result<Self, FieldError> {
        let grid = series.states[0].grid();
        let mut u1 = Vec::with_capacity(series.states.len());
        let mut u2 = Vec::with_capacity(series.states.len());
        for w in &series.states {
            let u = biot_savart_oriented(w, series.orientation)?;
            u1.push(u.u1().values().to_vec());
            u2.push(u.u2().values().to_vec());
        }
        Ok(Self { times: series.times.clone(), u1, u2, interp: LocalInterpolator::new(grid) })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn stencil(&self, t: f64) -> (usize, usize) {
        let n = self.times.len();
        if n <= 4 {
            return (0, n);
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let lo = k.saturating_sub(1).min(n - 4);
        (lo, lo + 4)
    }
}

impl VelocityProvider for SeriesVelocity {
    fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let (lo, hi) = self.stencil(t);
        let mut out = [0.0, 0.0];
        let mut buf = [0.0, 0.0];
        for i in lo..hi {
            let mut w = 1.0;
            for j in lo..hi {
                if j != i {
                    w *= (t - self.times[j]) / (self.times[i] - self.times[j]);
                }
            }
            self.interp.eval_into(&[&self.u1[i], &self.u2[i]], x, &mut buf);
            out[0] += w * buf[0];
            out[1] += w * buf[1];
        }
        out
    }

    fn max_step(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
    }
}

/// Initial region a particle belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Strip { n: u32, lobe: Lobe },
    Stirrer,
}

impl Region {
    pub fn strip(&self) -> Option<u32> {
        match self {
            Region::Strip { n, .. } => Some(*n),
            Region::Stirrer => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Region::Strip { n, lobe } => format!("D{}{}", n, lobe.tag()),
            Region::Stirrer => "stirrer".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Role {
    /// Sample point for the trajectory decomposition.
    Probe,
    /// Quadrature node carrying `weight * omega0` of the initial vorticity.
    Node { weight: f64, omega0: f64 },
    /// Boundary marker at perimeter parameter `param` in `[0, 4)`.
    Marker { param: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub id: usize,
    pub origin: [f64; 2],
    pub region: Option<Region>,
    pub role: Role,
    /// Positions at the bundle times while tracked.
    pub path: Vec<[f64; 2]>,
    pub retired_at: Option<f64>,
    pub gamma: Vec<f64>,
    pub eta1: Vec<f64>,
    pub eta2: Vec<f64>,
}

impl Particle {
    pub fn new(origin: [f64; 2], region: Option<Region>, role: Role) -> Self {
        Self {
            id: 0,
            origin,
            region,
            role,
            path: Vec::new(),
            retired_at: None,
            gamma: Vec::new(),
            eta1: Vec::new(),
            eta2: Vec::new(),
        }
    }

    pub fn is_tracked(&self, samples: usize) -> bool {
        self.retired_at.is_none() && self.path.len() == samples
    }

    /// Forward-difference rates `d eta / dt` on the bundle intervals.
    pub fn eta_rates(&self, times: &[f64]) -> Vec<[f64; 2]> {
        (0..self.eta1.len().saturating_sub(1))
            .map(|k| {
                let dt = times[k + 1] - times[k];
                [(self.eta1[k + 1] - self.eta1[k]) / dt, (self.eta2[k + 1] - self.eta2[k]) / dt]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrajectoryBundle {
    pub times: Vec<f64>,
    pub particles: Vec<Particle>,
    /// `gamma^(n)` per strip at the bundle times, filled by the decomposition.
    pub gamma: BTreeMap<u32, Vec<f64>>,
    pub convention: Option<Convention>,
}

impl TrajectoryBundle {
    pub fn final_positions(&self) -> impl Iterator<Item = (&Particle, [f64; 2])> {
        let k = self.times.len();
        self.particles.iter().filter(move |p| p.is_tracked(k)).map(|p| (p, *p.path.last().unwrap()))
    }

    pub fn in_region(&self, region: Region) -> impl Iterator<Item = &Particle> {
        self.particles.iter().filter(move |p| p.region == Some(region))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), LagrangianError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "particle_id,strip,sign,t,phi1,phi2,gamma,eta1,eta2")?;
        for p in &self.particles {
            let (strip, sign) = match p.region {
                Some(Region::Strip { n, lobe }) => (n.to_string(), lobe.tag()),
                Some(Region::Stirrer) => ("h".to_string(), "+"),
                None => ("none".to_string(), "none"),
            };
            for (k, x) in p.path.iter().enumerate() {
                let g = p.gamma.get(k).copied().unwrap_or(0.0);
                let e1 = p.eta1.get(k).copied().unwrap_or(0.0);
                let e2 = p.eta2.get(k).copied().unwrap_or(0.0);
                writeln!(w, "{},{},{},{},{},{},{},{},{}", p.id, strip, sign, self.times[k], x[0], x[1], g, e1, e2)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// How many particles of each kind to place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedConfig {
    /// Probes on a polar lattice, per lobe and per direction.
    pub probes_per_side: usize,
    /// Gauss–Legendre nodes per panel in the region quadratures.
    pub nodes_per_panel: usize,
    pub markers_per_boundary: usize,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self { probes_per_side: 4, nodes_per_panel: 12, markers_per_boundary: 64 }
    }
}

fn lobe_breaks(sector: &AnnularSector, recipe: &DataRecipe) -> (Vec<f64>, Vec<f64>) {
    let c = 0.5 * (sector.r_in + sector.r_out);
    let radial = [-recipe.bump_support, -recipe.bump_plateau, recipe.bump_plateau, recipe.bump_support]
        .iter()
        .map(|k| c * (1.0 + k))
        .collect();
    let t0 = recipe.theta0;
    let angular = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0].iter().map(|k| sector.theta_lo + k * t0).collect();
    (radial, angular)
}

/// Polar Gauss–Legendre nodes `(y, weight)` on a strip lobe, panels split at the bump kinks.
/// The minus lobe uses the swapped nodes of the plus lobe.
pub fn lobe_nodes(atlas: &StripAtlas, n: u32, lobe: Lobe, per_panel: usize) -> Vec<([f64; 2], f64)> {
    let strip = atlas.strip(n).expect("strip present in atlas");
    let (radial, angular) = lobe_breaks(&strip.plus, &atlas.recipe);
    let gl = GaussLegendre::new(per_panel);
    let mut nodes = Vec::new();
    for rw in radial.windows(2) {
        for (r, wr) in gl.on(rw[0], rw[1]) {
            for tw in angular.windows(2) {
                for (t, wt) in gl.on(tw[0], tw[1]) {
                    let y = [r * t.cos(), r * t.sin()];
                    let y = match lobe {
                        Lobe::Plus => y,
                        Lobe::Minus => [y[1], y[0]],
                    };
                    nodes.push((y, wr * wt * r));
                }
            }
        }
    }
    nodes
}

/// Tensor Gauss–Legendre nodes over the stirrer support, split at its transitions.
pub fn stirrer_nodes(recipe: &DataRecipe, per_panel: usize) -> Vec<([f64; 2], f64)> {
    let breaks = crate::initial_data::stirrer_breaks(recipe);
    let gl = GaussLegendre::new(per_panel);
    let mut axis = Vec::new();
    for w in breaks.windows(2) {
        axis.extend(gl.on(w[0], w[1]));
    }
    let mut nodes = Vec::with_capacity(axis.len() * axis.len());
    for &(y2, w2) in &axis {
        for &(y1, w1) in &axis {
            nodes.push(([y1, y2], w1 * w2));
        }
    }
    nodes
}

/// Point on the anticlockwise boundary of a sector at perimeter parameter `s` in `[0, 4)`.
pub fn boundary_point(sector: &AnnularSector, s: f64) -> [f64; 2] {
    let side = (s.floor() as i64).clamp(0, 3);
    let f = s - side as f64;
    let (dr, dt) = (sector.r_out - sector.r_in, sector.theta_hi - sector.theta_lo);
    match side {
        0 => sector.point(sector.r_in + f * dr, sector.theta_lo),
        1 => sector.point(sector.r_out, sector.theta_lo + f * dt),
        2 => sector.point(sector.r_out - f * dr, sector.theta_hi),
        _ => sector.point(sector.r_in, sector.theta_hi - f * dt),
    }
}

/// Probes, quadrature nodes and boundary markers for every strip lobe and the stirrer.
pub fn seed_particles(atlas: &StripAtlas, cfg: &SeedConfig) -> Vec<Particle> {
    let recipe = &atlas.recipe;
    let mut out = Vec::new();
    for strip in &atlas.strips {
        for lobe in [Lobe::Plus, Lobe::Minus] {
            let region = Some(Region::Strip { n: strip.n, lobe });
            let sector = strip.lobe(lobe);
            let k = cfg.probes_per_side;
            for i in 0..k {
                for j in 0..k {
                    let r = sector.r_in + (sector.r_out - sector.r_in) * (i as f64 + 0.5) / k as f64;
                    let t = sector.theta_lo + (sector.theta_hi - sector.theta_lo) * (j as f64 + 0.5) / k as f64;
                    out.push(Particle::new(sector.point(r, t), region, Role::Probe));
                }
            }
            for (y, w) in lobe_nodes(atlas, strip.n, lobe, cfg.nodes_per_panel) {
                out.push(Particle::new(y, region, Role::Node { weight: w, omega0: balanced_part(y, recipe) }));
            }
            let m = cfg.markers_per_boundary;
            for i in 0..m {
                let s = 4.0 * i as f64 / m as f64;
                out.push(Particle::new(boundary_point(sector, s), region, Role::Marker { param: s }));
            }
        }
    }
    if recipe.h_amplitude != 0.0 {
        for (y, w) in stirrer_nodes(recipe, cfg.nodes_per_panel) {
            let h = stirrer(y, recipe).unwrap_or(0.0);
            out.push(Particle::new(y, Some(Region::Stirrer), Role::Node { weight: w, omega0: h }));
        }
    }
    for (i, p) in out.iter_mut().enumerate() {
        p.id = i;
    }
    out
}

#[inline]
fn in_quadrant(x: [f64; 2]) -> bool {
    x[0] > 0.0 && x[1] > 0.0 && x[0] < 1.0 && x[1] < 1.0
}

fn rk4(provider: &dyn VelocityProvider, t: f64, x: [f64; 2], h: f64) -> [f64; 2] {
    let k1 = provider.velocity(t, x);
    let k2 = provider.velocity(t + 0.5 * h, [x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]]);
    let k3 = provider.velocity(t + 0.5 * h, [x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]]);
    let k4 = provider.velocity(t + h, [x[0] + h * k3[0], x[1] + h * k3[1]]);
    [
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

fn track(provider: &dyn VelocityProvider, times: &[f64], dt: f64, p: &mut Particle) {
    p.path.clear();
    p.retired_at = None;
    let mut x = p.origin;
    p.path.push(x);
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let steps = (span / dt).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for s in 0..steps {
            x = rk4(provider, w[0] + s as f64 * h, x, h);
        }
        if !in_quadrant(x) || !x[0].is_finite() || !x[1].is_finite() {
            p.retired_at = Some(w[1]);
            return;
        }
        p.path.push(x);
    }
}

/// RK4 integration of `dPhi/dt = u(t, Phi)` with steps no longer than `dt`, recording
/// positions at `times`. Particles leaving the quadrant are retired.
pub fn advect_particles(
    mut particles: Vec<Particle>,
    provider: &dyn VelocityProvider,
    times: &[f64],
    dt: f64,
) -> Result<TrajectoryBundle, LagrangianError> {
    if dt.is_nan() || dt <= 0.0 || dt > provider.max_step() * (1.0 + 1e-12) {
        return Err(LagrangianError::TooCoarse { requested: dt, available: provider.max_step() });
    }
    particles.par_iter_mut().for_each(|p| track(provider, times, dt, p));
    Ok(TrajectoryBundle { times: times.to_vec(), particles, gamma: BTreeMap::new(), convention: None })
}

/// Boundary polygon of a region at time index `k`, ordered by perimeter parameter.
pub fn marker_polygon(bundle: &TrajectoryBundle, region: Region, k: usize) -> Option<Vec<[f64; 2]>> {
    let mut ms: Vec<(f64, [f64; 2])> = bundle
        .in_region(region)
        .filter_map(|p| match p.role {
            Role::Marker { param } => Some((param, p.path.get(k).copied()?)),
            _ => None,
        })
        .collect();
    if ms.len() < 3 {
        return None;
    }
    ms.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(ms.into_iter().map(|m| m.1).collect())
}

/// Insert markers where adjacent ones separate by more than `max_gap` at any sample time,
/// integrating the new ones from `t = 0`. Returns the number inserted.
pub fn refine_markers(
    bundle: &mut TrajectoryBundle,
    atlas: &StripAtlas,
    provider: &dyn VelocityProvider,
    dt: f64,
    max_gap: f64,
    rounds: usize,
) -> usize {
    let mut inserted = 0;
    for _ in 0..rounds {
        let mut fresh = Vec::new();
        for strip in &atlas.strips {
            for lobe in [Lobe::Plus, Lobe::Minus] {
                let region = Region::Strip { n: strip.n, lobe };
                let mut ms: Vec<&Particle> =
                    bundle.in_region(region).filter(|p| matches!(p.role, Role::Marker { .. })).collect();
                ms.sort_by(|a, b| param_of(a).total_cmp(&param_of(b)));
                for i in 0..ms.len() {
                    let (a, b) = (ms[i], ms[(i + 1) % ms.len()]);
                    let gap = a
                        .path
                        .iter()
                        .zip(&b.path)
                        .map(|(x, y)| (x[0] - y[0]).hypot(x[1] - y[1]))
                        .fold(0.0, f64::max);
                    if gap > max_gap {
                        let (sa, mut sb) = (param_of(a), param_of(b));
                        if sb <= sa {
                            sb += 4.0;
                        }
                        let s = (0.5 * (sa + sb)) % 4.0;
                        let origin = boundary_point(strip.lobe(lobe), s);
                        fresh.push(Particle::new(origin, Some(region), Role::Marker { param: s }));
                    }
                }
            }
        }
        if fresh.is_empty() {
            break;
        }
        let times = bundle.times.clone();
        fresh.par_iter_mut().for_each(|p| track(provider, &times, dt, p));
        let next_id = bundle.particles.len();
        for (i, mut p) in fresh.into_iter().enumerate() {
            p.id = next_id + i;
            inserted += 1;
            bundle.particles.push(p);
        }
    }
    inserted
}

fn param_of(p: &Particle) -> f64 {
    match p.role {
        Role::Marker { param } => param,
        _ => f64::NAN,
    }
}

/// Signed area of a closed polygon.
pub fn shoelace_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

fn segments_cross(p: [f64; 2], q: [f64; 2], r: [f64; 2], s: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let (d1, d2) = (orient(p, q, r), orient(p, q, s));
    let (d3, d4) = (orient(r, s, p), orient(r, s, q));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Whether any two non-adjacent edges of the closed polygon cross.
pub fn self_intersects(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

/// Largest relative change of the marker-polygon area of `region` over the run.
pub fn area_drift(bundle: &TrajectoryBundle, region: Region) -> Option<f64> {
    let a0 = shoelace_area(&marker_polygon(bundle, region, 0)?);
    let mut worst = 0.0_f64;
    for k in 0..bundle.times.len() {
        let a = shoelace_area(&marker_polygon(bundle, region, k)?);
        worst = worst.max((a - a0).abs() / a0.abs());
    }
    Some(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripSeries {
    pub n: u32,
    /// `I_n(t)` over the image of the whole strip.
    pub total: Vec<f64>,
    /// `I_n^+(t)` over the image of the positive lobe.
    pub positive: Vec<f64>,
    /// Shape constant `A` of the strip.
    pub shape_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripIntegrals {
    pub times: Vec<f64>,
    pub strips: Vec<StripSeries>,
    /// Stirrer integral `I_h(t)`.
    pub stirrer: Vec<f64>,
}

impl StripIntegrals {
    pub fn strip(&self, n: u32) -> Option<&StripSeries> {
        self.strips.iter().find(|s| s.n == n)
    }

    /// Largest `|I_n(t)| / I_n^+(0)` over strips and times up to `t_max`.
    pub fn antisymmetry_defect(&self, t_max: f64) -> f64 {
        let mut worst = 0.0_f64;
        for s in &self.strips {
            let scale = s.positive[0].abs().max(f64::MIN_POSITIVE);
            for (k, t) in self.times.iter().enumerate() {
                if *t <= t_max {
                    worst = worst.max(s.total[k].abs() / scale);
                }
            }
        }
        worst
    }
}

/// `A = sup_tau int_{D+} y1 y2 / |(e^tau y1, e^-tau y2)|^4 phi(y) dy` for strip `n`, with
/// `phi` the unit-amplitude profile of the strip.
pub fn shape_constant(atlas: &StripAtlas, n: u32, per_panel: usize) -> f64 {
    let recipe = &atlas.recipe;
    let amp = recipe.amplitude(n);
    let nodes: Vec<([f64; 2], f64)> = lobe_nodes(atlas, n, Lobe::Plus, per_panel)
        .into_iter()
        .map(|(y, w)| (y, w * balanced_part(y, recipe) / amp))
        .collect();
    let value = |tau: f64| -> f64 {
        let (a, b) = (tau.exp(), (-tau).exp());
        nodes
            .iter()
            .map(|(y, w)| {
                let q = (a * y[0]).powi(2) + (b * y[1]).powi(2);
                w * y[0] * y[1] / (q * q)
            })
            .sum()
    };
    let (mut best_tau, mut best) = (0.0, f64::NEG_INFINITY);
    for i in 0..=240 {
        let tau = -3.0 + 6.0 * i as f64 / 240.0;
        let v = value(tau);
        if v > best {
            best = v;
            best_tau = tau;
        }
    }
    let (mut lo, mut hi) = (best_tau - 0.025, best_tau + 0.025);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let (m1, m2) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
        if value(m1) > value(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best.max(value(0.5 * (lo + hi)))
}

/// Lagrangian strip and stirrer integrals `sum_nodes w K(Phi(t, y)) omega0(y)` at every
/// bundle time. Marker polygons must stay simple.
pub fn strip_integrals(
    bundle: &TrajectoryBundle,
    atlas: &StripAtlas,
    per_panel: usize,
) -> Result<StripIntegrals, LagrangianError> {
    let k_len = bundle.times.len();
    let node_sum = |region: Region| -> Result<Vec<f64>, LagrangianError> {
        let mut acc = vec![0.0; k_len];
        for p in bundle.in_region(region) {
            let Role::Node { weight, omega0 } = p.role else { continue };
            if !p.is_tracked(k_len) {
                return Err(LagrangianError::DegenerateRegion(region.label()));
            }
            for (a, x) in acc.iter_mut().zip(&p.path) {
                *a += weight * omega0 * strain_kernel(*x);
            }
        }
        Ok(acc)
    };
    let mut strips = Vec::new();
    for s in &atlas.strips {
        for lobe in [Lobe::Plus, Lobe::Minus] {
            let region = Region::Strip { n: s.n, lobe };
            for k in 0..k_len {
                if let Some(poly) = marker_polygon(bundle, region, k) {
                    if self_intersects(&poly) {
                        return Err(LagrangianError::DegenerateRegion(region.label()));
                    }
                }
            }
        }
        let positive = node_sum(Region::Strip { n: s.n, lobe: Lobe::Plus })?;
        let negative = node_sum(Region::Strip { n: s.n, lobe: Lobe::Minus })?;
        let total = positive.iter().zip(&negative).map(|(p, m)| p + m).collect();
        strips.push(StripSeries { n: s.n, total, positive, shape_constant: shape_constant(atlas, s.n, per_panel) });
    }
    let stirrer = node_sum(Region::Stirrer)?;
    Ok(StripIntegrals { times: bundle.times.clone(), strips, stirrer })
}

/// `gamma^(n)(t) = (4/pi) int_0^t [I_h + sum_{l<n} I_l] ds` by the trapezoid rule, then
/// `eta_j = log(Phi_j / x_j) - sigma_j gamma` for every strip particle, with `sigma` the
/// sign pattern of the convention.
pub fn hyperbolic_decomposition(
    bundle: &mut TrajectoryBundle,
    integrals: &StripIntegrals,
    convention: Convention,
) -> Result<(), LagrangianError> {
    if integrals.times != bundle.times {
        return Err(LagrangianError::TimeMismatch);
    }
    let times = &bundle.times;
    let mut gamma = BTreeMap::new();
    for s in &integrals.strips {
        let rate: Vec<f64> = (0..times.len())
            .map(|k| {
                let inner: f64 = integrals.strips.iter().filter(|l| l.n < s.n).map(|l| l.total[k]).sum();
                2.0 * FRAC_2_PI * (integrals.stirrer[k] + inner)
            })
            .collect();
        let mut g = vec![0.0; times.len()];
        for k in 1..times.len() {
            g[k] = g[k - 1] + 0.5 * (rate[k] + rate[k - 1]) * (times[k] - times[k - 1]);
        }
        gamma.insert(s.n, g);
    }
    let sigma = convention.signs();
    for p in bundle.particles.iter_mut() {
        let Some(n) = p.region.and_then(|r| r.strip()) else { continue };
        let g = &gamma[&n];
        if let Some((k, _)) = p.path.iter().enumerate().find(|(_, x)| x[0] <= 0.0 || x[1] <= 0.0) {
            return Err(LagrangianError::LeftQuadrant { id: p.id, time: times[k] });
        }
        p.gamma = g[..p.path.len()].to_vec();
        p.eta1 = p.path.iter().zip(g).map(|(x, g)| (x[0] / p.origin[0]).ln() - sigma[0] * g).collect();
        p.eta2 = p.path.iter().zip(g).map(|(x, g)| (x[1] / p.origin[1]).ln() - sigma[1] * g).collect();
    }
    bundle.gamma = gamma;
    bundle.convention = Some(convention);
    Ok(())
}

/// Largest `|d eta / dt|` over the tracked probes of strip `n`.
pub fn eta_rate_sup(bundle: &TrajectoryBundle, n: u32) -> f64 {
    bundle
        .particles
        .iter()
        .filter(|p| p.role == Role::Probe && p.region.and_then(|r| r.strip()) == Some(n))
        .flat_map(|p| p.eta_rates(&bundle.times))
        .map(|r| r[0].abs().max(r[1].abs()))
        .fold(0.0, f64::max)
}

/// Smallest forward-difference rate `d gamma / dt` of strip `n`.
pub fn gamma_rate_min(bundle: &TrajectoryBundle, n: u32) -> Option<f64> {
    let g = bundle.gamma.get(&n)?;
    g.windows(2)
        .zip(bundle.times.windows(2))
        .map(|(g, t)| (g[1] - g[0]) / (t[1] - t[0]))
        .reduce(f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    /// `min Phi1(t, x) / Phi1(t, x')` over pairs `x in D(n)`, `x' in D(l)`, `l > n`, per time.
    pub min_ratio_per_time: Vec<f64>,
    pub min_ratio: f64,
    pub threshold: f64,
    pub passes: bool,
}

/// Order check `2 Phi1(t, x') <= Phi1(t, x)` between particles of consecutive strips.
pub fn order_check(bundle: &TrajectoryBundle, atlas: &StripAtlas) -> Result<OrderReport, LagrangianError> {
    if atlas.strips.len() < 2 {
        return Err(LagrangianError::NoParticles("order check needs two strips".into()));
    }
    let k_len = bundle.times.len();
    let mut per_time = vec![f64::INFINITY; k_len];
    for (k, slot) in per_time.iter_mut().enumerate() {
        let mut lo: BTreeMap<u32, f64> = BTreeMap::new();
        let mut hi: BTreeMap<u32, f64> = BTreeMap::new();
        for p in &bundle.particles {
            let (Some(n), Some(x)) = (p.region.and_then(|r| r.strip()), p.path.get(k)) else { continue };
            if matches!(p.role, Role::Node { .. }) {
                continue;
            }
            let e = lo.entry(n).or_insert(f64::INFINITY);
            *e = e.min(x[0]);
            let e = hi.entry(n).or_insert(0.0);
            *e = e.max(x[0]);
        }
        for (&n, &min_x1) in &lo {
            let outer_max = hi.iter().filter(|(&l, _)| l > n).map(|(_, &v)| v).fold(0.0, f64::max);
            if outer_max > 0.0 {
                *slot = slot.min(min_x1 / outer_max);
            }
        }
    }
    let min_ratio = per_time.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(OrderReport { min_ratio_per_time: per_time, min_ratio, threshold: 2.0, passes: min_ratio >= 2.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub strip: u32,
    pub constant: f64,
    pub times: Vec<f64>,
    /// `min Phi2^2 / Phi1^2` over the positive lobe.
    pub aspect: Vec<f64>,
    /// `I_n - (1 - e^(C t - 2 gamma)) I_n^+` where the aspect condition holds.
    pub margins: Vec<Option<f64>>,
    pub first_violation: Option<f64>,
    pub aspect_failure: Option<f64>,
    /// First time with `e^(-4 gamma) < 2/3`.
    pub predictor_crossing: Option<f64>,
    pub passes: bool,
}

const ASPECT: f64 = 5.0 / 3.0;

/// Positivity monitor for strip `n` with constant `c`. Round-off below `tol * I_n^+(0)` is
/// not counted as a violation.
pub fn positivity_ratio(
    integrals: &StripIntegrals,
    bundle: &TrajectoryBundle,
    n: u32,
    c: f64,
    tol: f64,
) -> Result<PositivityReport, LagrangianError> {
    let s = integrals.strip(n).ok_or_else(|| LagrangianError::NoParticles(format!("strip {n}")))?;
    let gamma = bundle.gamma.get(&n).ok_or_else(|| LagrangianError::NoParticles(format!("gamma of strip {n}")))?;
    let region = Region::Strip { n, lobe: Lobe::Plus };
    let k_len = bundle.times.len();
    let aspect: Vec<f64> = (0..k_len)
        .map(|k| {
            bundle
                .in_region(region)
                .filter_map(|p| p.path.get(k))
                .map(|x| (x[1] / x[0]).powi(2))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let slack = tol * s.positive[0].abs();
    let mut margins = Vec::with_capacity(k_len);
    let mut first_violation = None;
    let mut aspect_failure = None;
    let mut predictor_crossing = None;
    for k in 0..k_len {
        let t = bundle.times[k];
        if predictor_crossing.is_none() && (-4.0 * gamma[k]).exp() < 2.0 / 3.0 {
            predictor_crossing = Some(t);
        }
        if aspect[k] >= ASPECT {
            let bound = (1.0 - (c * t - 2.0 * gamma[k]).exp()) * s.positive[k];
            let m = s.total[k] - bound;
            if m < -slack && first_violation.is_none() {
                first_violation = Some(t);
            }
            margins.push(Some(m));
        } else {
            if aspect_failure.is_none() {
                aspect_failure = Some(t);
            }
            margins.push(None);
        }
    }
    Ok(PositivityReport {
        strip: n,
        constant: c,
        times: bundle.times.clone(),
        aspect,
        margins,
        passes: first_violation.is_none(),
        first_violation,
        aspect_failure,
        predictor_crossing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::strip_regions;

    fn times(n: usize, t: f64) -> Vec<f64> {
        (0..=n).map(|k| t * k as f64 / n as f64).collect()
    }

    #[test]
    fn zero_flow_is_identity() {
        let ps = vec![Particle::new([0.3, 0.2], None, Role::Probe)];
        let b = advect_particles(ps, &ZeroVelocity, &times(4, 0.1), 0.01).unwrap();
        assert!(b.particles[0].path.iter().all(|x| *x == [0.3, 0.2]));
    }

    #[test]
    fn linear_strain_is_exact() {
        let x = [0.2, 0.4];
        let ps = vec![Particle::new(x, None, Role::Probe)];
        let b = advect_particles(ps, &LinearStrain { lambda: 1.0 }, &times(10, 0.1), 0.005).unwrap();
        let end = b.particles[0].path.last().unwrap();
        assert!((end[0] / (0.1f64.exp() * x[0]) - 1.0).abs() < 1e-8);
        assert!((end[1] / ((-0.1f64).exp() * x[1]) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn exits_are_retired() {
        let ps = vec![Particle::new([0.9, 0.5], None, Role::Probe)];
        let b = advect_particles(ps, &LinearStrain { lambda: 5.0 }, &times(10, 0.1), 0.01).unwrap();
        assert!(b.particles[0].retired_at.is_some());
        assert!(matches!(
            advect_particles(Vec::new(), &ZeroVelocity, &times(2, 0.1), 0.0),
            Err(LagrangianError::TooCoarse { .. })
        ));
    }

    #[test]
    fn polygons() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert_eq!(shoelace_area(&sq), 1.0);
        assert!(!self_intersects(&sq));
        let bow = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(self_intersects(&bow));
    }

    #[test]
    fn antisymmetric_at_start() {
        let atlas = strip_regions(&DataRecipe::desk());
        let ps = seed_particles(&atlas, &SeedConfig::default());
        let b = advect_particles(ps, &ZeroVelocity, &[0.0], 0.01).unwrap();
        let ints = strip_integrals(&b, &atlas, 12).unwrap();
        for s in &ints.strips {
            assert!(s.positive[0] > 0.0);
            assert!(s.total[0].abs() <= 1e-12 * s.positive[0]);
        }
        assert!(ints.stirrer[0] > 0.0);
    }

    #[test]
    fn model_flow_decomposition_is_exact() {
        let atlas = strip_regions(&DataRecipe::desk());
        let lambda = 1.0;
        let ps: Vec<Particle> = seed_particles(&atlas, &SeedConfig::default())
            .into_iter()
            .filter(|p| p.role == Role::Probe)
            .collect();
        let ts = times(10, 0.1);
        let mut b = advect_particles(ps, &LinearStrain { lambda }, &ts, 0.002).unwrap();
        let ints = StripIntegrals {
            times: ts.clone(),
            strips: atlas
                .strips
                .iter()
                .map(|s| StripSeries { n: s.n, total: vec![0.0; ts.len()], positive: vec![1.0; ts.len()], shape_constant: 0.0 })
                .collect(),
            stirrer: vec![std::f64::consts::PI * lambda / 4.0; ts.len()],
        };
        hyperbolic_decomposition(&mut b, &ints, Convention::Opposite).unwrap();
        for p in &b.particles {
            for (e1, e2) in p.eta1.iter().zip(&p.eta2) {
                assert!(e1.abs() < 1e-9 && e2.abs() < 1e-9);
            }
        }
    }
}
