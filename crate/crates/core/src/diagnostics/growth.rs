use serde::{Deserialize, Serialize};

use super::DiagnosticsError;
use crate::field::{ScalarField, VelocityField};
use crate::initial_data::{Lobe, StripAtlas};
use crate::key_lemma::regression_slope;
use crate::lagrangian::{Region, Role, TrajectoryBundle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusRow {
    pub r: f64,
    pub grad_sup: f64,
}

fn check_annulus(u: &VelocityField, r: f64) -> Result<(), DiagnosticsError> {
    let h = u.grid().spacing();
    if !(r > 0.0 && 2.0 * r < 1.0) {
        return Err(DiagnosticsError::UnderResolvedAnnulus { r, reason: "need 0 < 2r < 1".into() });
    }
    if r / 2.0 <= 2.0 * h {
        return Err(DiagnosticsError::UnderResolvedAnnulus {
            r,
            reason: format!("inner radius {} is within two cells ({h}) of the origin", r / 2.0),
        });
    }
    Ok(())
}

fn annulus_max(entries: &[ScalarField], r: f64) -> f64 {
    let g = entries[0].grid();
    let (lo, hi) = (r / 2.0, 2.0 * r);
    let mut best = 0.0_f64;
    for idx in 0..g.len() {
        let x = g.node(idx);
        let d = x[0].hypot(x[1]);
        if d < lo || d > hi {
            continue;
        }
        for e in entries {
            best = best.max(e.values()[idx].abs());
        }
    }
    best
}

fn gradient_entries(u: &VelocityField) -> Vec<ScalarField> {
    (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| u.gradient_entry(i, j)).collect()
}

/// `max |d_i u_j|` over grid nodes in the annulus `r/2 <= |x| <= 2r`.
pub fn grad_sup_annulus(u: &VelocityField, r: f64) -> Result<f64, DiagnosticsError> {
    check_annulus(u, r)?;
    Ok(annulus_max(&gradient_entries(u), r))
}

/// [`grad_sup_annulus`] for several radii, sharing the spectral derivatives.
pub fn gradient_table(u: &VelocityField, radii: &[f64]) -> Result<Vec<AnnulusRow>, DiagnosticsError> {
    for &r in radii {
        check_annulus(u, r)?;
    }
    let entries = gradient_entries(u);
    Ok(radii.iter().map(|&r| AnnulusRow { r, grad_sup: annulus_max(&entries, r) }).collect())
}

/// Discrete mean-value witness along one particle path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub strip: Option<u32>,
    pub particle_id: usize,
    pub horizon: f64,
    /// Right end of the sampling interval with the largest mean rate.
    pub t_star: f64,
    /// `log(Phi1(t_{k+1}) / Phi1(t_k)) / (t_{k+1} - t_k)` on that interval.
    pub ratio: f64,
    /// `log(Phi1(T) / y1)`.
    pub log_growth: f64,
    pub mean_rate: f64,
    pub certified: bool,
}

fn horizon_index(times: &[f64], horizon: f64) -> Option<usize> {
    let eps = 1e-12 * horizon.abs().max(1.0);
    times.iter().rposition(|&t| t <= horizon + eps).filter(|&k| k > 0)
}

/// Mean-value witness of every probe of `strip` (any strip when `None`) tracked to `T`
/// whose `log(Phi1(T)/y1)` is positive and at least `margin`.
pub fn path_witnesses(bundle: &TrajectoryBundle, horizon: f64, strip: Option<u32>, margin: f64) -> Vec<Witness> {
    let Some(k_end) = horizon_index(&bundle.times, horizon) else {
        return Vec::new();
    };
    let t_end = bundle.times[k_end];
    let mut out = Vec::new();
    for p in &bundle.particles {
        if p.role != Role::Probe || p.path.len() <= k_end || p.origin[0] <= 0.0 {
            continue;
        }
        if strip.is_some() && p.region.and_then(|r| r.strip()) != strip {
            continue;
        }
        let log_growth = (p.path[k_end][0] / p.origin[0]).ln();
        if !(log_growth.is_finite() && log_growth > 0.0 && log_growth >= margin) {
            continue;
        }
        let (mut ratio, mut t_star, mut scale) = (f64::NEG_INFINITY, 0.0, 0.0_f64);
        for k in 0..k_end {
            let rate = (p.path[k + 1][0] / p.path[k][0]).ln() / (bundle.times[k + 1] - bundle.times[k]);
            scale = scale.max(rate.abs());
            if rate > ratio {
                ratio = rate;
                t_star = bundle.times[k + 1];
            }
        }
        let mean_rate = log_growth / t_end;
        // Rounding of the interval logarithms against the single one over [0, T].
        let slack = 4.0 * (k_end + 1) as f64 * f64::EPSILON * scale.max(mean_rate.abs());
        out.push(Witness {
            strip: p.region.and_then(|r| r.strip()),
            particle_id: p.id,
            horizon: t_end,
            t_star,
            ratio,
            log_growth,
            mean_rate,
            certified: ratio >= mean_rate - slack,
        });
    }
    out
}

/// The qualifying probe with the largest `log(Phi1(T)/y1)`, see [`path_witnesses`].
pub fn blowup_witness(
    bundle: &TrajectoryBundle,
    horizon: f64,
    strip: Option<u32>,
    margin: f64,
) -> Result<Witness, DiagnosticsError> {
    path_witnesses(bundle, horizon, strip, margin)
        .into_iter()
        .reduce(|a, b| if b.log_growth > a.log_growth { b } else { a })
        .ok_or_else(|| {
            DiagnosticsError::NoWitness(format!("no probe with log(Phi1(T)/y1) > max(0, {margin}) up to T = {horizon}"))
        })
}

/// Least-squares power law `y = C x^slope` fitted in log-log coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub stderr: f64,
    /// Two-sided 95% interval from the Student t distribution.
    pub ci95: [f64; 2],
    pub prefactor: f64,
    pub points: usize,
}

fn student_t95(dof: usize) -> f64 {
    const T: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131,
        2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    T.get(dof.wrapping_sub(1)).copied().unwrap_or(1.96)
}

pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<PowerFit, DiagnosticsError> {
    if x.len() < 3 {
        return Err(DiagnosticsError::InsufficientStrips(x.len()));
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(DiagnosticsError::Config("power-law fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (slope, stderr) = regression_slope(&lx, &ly);
    let n = lx.len() as f64;
    let intercept = ly.iter().sum::<f64>() / n - slope * lx.iter().sum::<f64>() / n;
    let half = student_t95(lx.len() - 2) * stderr;
    Ok(PowerFit { slope, stderr, ci95: [slope - half, slope + half], prefactor: intercept.exp(), points: lx.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardyRow {
    pub n: u32,
    /// `sum w |w0/y2|^2 (y2 / Phi2(T, y))^2` over the nodes of both lobes.
    pub value: f64,
    /// The same sum without the transport factor.
    pub value_t0: f64,
    /// `inf (y2 / Phi2(T, y))^2`.
    pub compression_inf: f64,
    /// `sup Phi2(T, y) / y2`.
    pub expansion_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardyProfile {
    pub horizon: f64,
    pub beta: f64,
    pub rows: Vec<HardyRow>,
    /// Fit of `value` against `n`.
    pub exponent: PowerFit,
    /// Fit of `expansion_sup` against `n`, read as `C* n^(-1/C_*)`.
    pub compression: PowerFit,
    pub c_star: f64,
    pub inverse_c_lower: f64,
}

/// Lagrangian pullback of `|w/x2|^2` over the strip images at sample index `k`.
pub fn hardy_profile(bundle: &TrajectoryBundle, atlas: &StripAtlas, k: usize) -> Result<HardyProfile, DiagnosticsError> {
    let mut rows = Vec::new();
    for s in &atlas.strips {
        let mut row = HardyRow { n: s.n, value: 0.0, value_t0: 0.0, compression_inf: f64::INFINITY, expansion_sup: 0.0 };
        let mut complete = true;
        for lobe in [Lobe::Plus, Lobe::Minus] {
            for p in bundle.in_region(Region::Strip { n: s.n, lobe }) {
                let Role::Node { weight, omega0 } = p.role else { continue };
                let Some(x) = p.path.get(k).filter(|_| p.retired_at.is_none_or(|t| t > bundle.times[k])) else {
                    complete = false;
                    continue;
                };
                let y2 = p.origin[1];
                let base = weight * (omega0 / y2).powi(2);
                let c = (y2 / x[1]).powi(2);
                row.value_t0 += base;
                row.value += base * c;
                row.compression_inf = row.compression_inf.min(c);
                row.expansion_sup = row.expansion_sup.max(x[1] / y2);
            }
        }
        if complete && row.value > 0.0 {
            rows.push(row);
        }
    }
    if rows.len() < 3 {
        return Err(DiagnosticsError::InsufficientStrips(rows.len()));
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let exponent = fit_power_law(&ns, &rows.iter().map(|r| r.value).collect::<Vec<_>>())?;
    let compression = fit_power_law(&ns, &rows.iter().map(|r| r.expansion_sup).collect::<Vec<_>>())?;
    Ok(HardyProfile {
        horizon: bundle.times[k],
        beta: atlas.recipe.beta,
        rows,
        c_star: compression.prefactor,
        inverse_c_lower: -compression.slope,
        exponent,
        compression,
    })
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let directed = |p: &[[f64; 2]], q: &[[f64; 2]]| {
        p.iter()
            .map(|x| q.iter().map(|y| (x[0] - y[0]).hypot(x[1] - y[1])).fold(f64::INFINITY, f64::min))
            .fold(0.0_f64, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Largest `|t - t'|` such that every pair of sample times that close keeps the marker
/// image of strip `n` within Hausdorff distance `cell`.
pub fn stability_window(bundle: &TrajectoryBundle, n: u32, cell: f64) -> f64 {
    let k_len = bundle.times.len();
    let markers: Vec<&[[f64; 2]]> = [Lobe::Plus, Lobe::Minus]
        .iter()
        .flat_map(|&lobe| bundle.in_region(Region::Strip { n, lobe }))
        .filter(|p| matches!(p.role, Role::Marker { .. }) && p.path.len() == k_len)
        .map(|p| p.path.as_slice())
        .collect();
    let image = |k: usize| -> Vec<[f64; 2]> { markers.iter().map(|m| m[k]).collect() };
    let images: Vec<Vec<[f64; 2]>> = (0..k_len).map(image).collect();
    let mut pairs: Vec<(f64, bool)> = Vec::new();
    for a in 0..k_len {
        for b in a + 1..k_len {
            let gap = bundle.times[b] - bundle.times[a];
            pairs.push((gap, hausdorff(&images[a], &images[b]) < cell));
        }
    }
    let first_bad = pairs.iter().filter(|p| !p.1).map(|p| p.0).fold(f64::INFINITY, f64::min);
    pairs.iter().map(|p| p.0).filter(|&g| g < first_bad).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::{advect_particles, LinearStrain, Particle, ZeroVelocity};

    fn times(n: usize, t: f64) -> Vec<f64> {
        (0..=n).map(|k| t * k as f64 / n as f64).collect()
    }

    #[test]
    fn hyperbolic_flow_witness_is_tight() {
        let ps = vec![Particle::new([0.2, 0.3], None, Role::Probe)];
        let b = advect_particles(ps, &LinearStrain { lambda: 1.0 }, &times(10, 0.1), 0.005).unwrap();
        let w = blowup_witness(&b, 0.1, None, 0.0).unwrap();
        assert!((w.ratio - 1.0).abs() < 1e-8);
        assert!((w.log_growth - 0.1).abs() < 1e-9);
        assert!(w.certified);
    }

    #[test]
    fn still_flow_has_no_witness() {
        let ps = vec![Particle::new([0.2, 0.3], None, Role::Probe)];
        let b = advect_particles(ps, &ZeroVelocity, &times(4, 0.1), 0.01).unwrap();
        assert!(matches!(blowup_witness(&b, 0.1, None, 0.0), Err(DiagnosticsError::NoWitness(_))));
    }

    #[test]
    fn power_law_recovers_exponent() {
        let x = [4.0, 5.0, 6.0, 7.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.1)).collect();
        let f = fit_power_law(&x, &y).unwrap();
        assert!((f.slope + 1.1).abs() < 1e-12);
        assert!((f.prefactor - 3.0).abs() < 1e-10);
        assert!(f.ci95[0] <= f.slope && f.slope <= f.ci95[1]);
        assert!(fit_power_law(&x[..2], &y[..2]).is_err());
    }

    #[test]
    fn hausdorff_of_shift() {
        let a = [[0.0, 0.0], [1.0, 0.0]];
        let b = [[0.0, 0.5], [1.0, 0.5]];
        assert!((hausdorff(&a, &b) - 0.5).abs() < 1e-15);
        assert_eq!(hausdorff(&a, &a), 0.0);
    }
}
