use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{write_snapshot, FieldError, Grid, ScalarField, Transform, VelocityField, VorticityField};

/// Sign convention linking vorticity to velocity.
///
/// `Printed` is `u = grad_perp (-Laplace)^{-1} w` with `grad_perp = (-d2, d1)`,
/// whose curl is `-w`. `CurlConsistent` flips the sign so that `curl u = w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Printed,
    CurlConsistent,
}

impl Orientation {
    #[inline]
    fn sign(self) -> f64 {
        match self {
            Orientation::Printed => 1.0,
            Orientation::CurlConsistent => -1.0,
        }
    }
}

impl std::fmt::Display for Orientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Orientation::Printed => "printed",
            Orientation::CurlConsistent => "curl_consistent",
        })
    }
}

/// Stream function `psi` with `Laplace psi = w`, zero mean.
pub fn poisson_solve(omega: &VorticityField) -> Result<ScalarField, FieldError> {
    omega.require_zero_mean()?;
    let g = omega.grid();
    let spectral = stream_coefficients(g, omega.spectral());
    let values = Transform::for_grid(g).inverse(&spectral);
    Ok(ScalarField::from_parts(g, values, spectral))
}

fn stream_coefficients(g: Grid, w: &[Complex64]) -> Vec<Complex64> {
    let h = g.half();
    w.par_iter()
        .enumerate()
        .map(|(i, c)| {
            let (k1, k2) = g.wavenumber(i % h, i / h);
            let k2sum = k1 * k1 + k2 * k2;
            if k2sum == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                -c / k2sum
            }
        })
        .collect()
}

/// Velocity in the printed orientation.
pub fn biot_savart(omega: &VorticityField) -> Result<VelocityField, FieldError> {
    biot_savart_oriented(omega, Orientation::Printed)
}

pub fn biot_savart_oriented(
    omega: &VorticityField,
    orientation: Orientation,
) -> Result<VelocityField, FieldError> {
    omega.require_zero_mean()?;
    let g = omega.grid();
    let (s1, s2) = velocity_coefficients(g, omega.spectral(), orientation);
    let t = Transform::for_grid(g);
    let (v1, v2) = rayon::join(|| t.inverse(&s1), || t.inverse(&s2));
    Ok(VelocityField::new(
        ScalarField::from_parts(g, v1, s1),
        ScalarField::from_parts(g, v2, s2),
    ))
}

fn velocity_coefficients(
    g: Grid,
    w: &[Complex64],
    orientation: Orientation,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let h = g.half();
    let s = orientation.sign();
    let psi = stream_coefficients(g, w);
    let (mut u1, mut u2) = (psi.clone(), psi);
    u1.par_iter_mut().zip(u2.par_iter_mut()).enumerate().for_each(|(i, (a, b))| {
        let (k1, k2) = g.derivative_wavenumber(i % h, i / h);
        let p = *a;
        *a = Complex64::new(0.0, s * k2) * p;
        *b = Complex64::new(0.0, -s * k1) * p;
    });
    (u1, u2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub cfl: f64,
    pub orientation: Orientation,
    /// Project onto odd-odd symmetry after every step.
    pub enforce_odd_odd: bool,
    /// Upper bound on the adaptive step.
    pub max_dt: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { cfl: 0.5, orientation: Orientation::CurlConsistent, enforce_odd_odd: false, max_dt: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Time at the end of the step.
    pub time: f64,
    pub dt: f64,
    pub cfl: f64,
    /// Relative change of the `L^2` norm since the start of the run.
    pub l2_drift: f64,
    pub linf: f64,
    /// Share of enstrophy carried by modes beyond two thirds of the dealiasing cutoff.
    pub tail_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub states: Vec<VorticityField>,
    pub step_log: Vec<StepRecord>,
    pub orientation: Orientation,
}

impl TimeSeries {
    pub fn final_state(&self) -> &VorticityField {
        self.states.last().expect("a series always holds the initial state")
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("a series always holds the initial time")
    }
}

/// Dealiased pseudo-spectral RK4 integrator for `w_t + u . grad w = 0`.
#[derive(Debug, Clone)]
pub struct EulerSolver {
    config: SolverConfig,
}

impl EulerSolver {
    pub fn new(config: SolverConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn velocity(&self, omega: &VorticityField) -> Result<VelocityField, FieldError> {
        biot_savart_oriented(omega, self.config.orientation)
    }

    /// Largest step allowed by the CFL condition, infinite for a motionless field.
    pub fn stable_dt(&self, omega: &VorticityField) -> Result<f64, FieldError> {
        let umax = self.velocity(omega)?.max_speed();
        Ok(self.cfl_limit(omega.grid(), umax))
    }

    fn cfl_limit(&self, g: Grid, umax: f64) -> f64 {
        if umax > 0.0 {
            self.config.cfl * g.spacing() / umax
        } else {
            f64::INFINITY
        }
    }

    pub fn step(&self, omega: &VorticityField, dt: f64) -> Result<VorticityField, FieldError> {
        omega.require_zero_mean()?;
        if dt.is_nan() || dt <= 0.0 {
            return Err(FieldError::NonPositiveStep(dt));
        }
        let g = omega.grid();
        let (k1, umax) = self.tendency(g, omega.spectral(), 0.0)?;
        let max_dt = self.cfl_limit(g, umax);
        if dt > max_dt * (1.0 + 1e-12) {
            return Err(FieldError::CflViolation { dt, max_dt });
        }
        self.finish_step(omega, k1, dt, 0.0)
    }

    fn finish_step(
        &self,
        omega: &VorticityField,
        k1: Vec<Complex64>,
        dt: f64,
        time: f64,
    ) -> Result<VorticityField, FieldError> {
        let g = omega.grid();
        let w0 = omega.spectral();
        let stage = |k: &[Complex64], a: f64| -> Vec<Complex64> {
            w0.par_iter().zip(k.par_iter()).map(|(w, k)| w + k * a).collect()
        };
        let (k2, _) = self.tendency(g, &stage(&k1, 0.5 * dt), time)?;
        let (k3, _) = self.tendency(g, &stage(&k2, 0.5 * dt), time)?;
        let (k4, _) = self.tendency(g, &stage(&k3, dt), time)?;
        let c = dt / 6.0;
        let mut next: Vec<Complex64> = (0..w0.len())
            .into_par_iter()
            .map(|i| w0[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * c)
            .collect();
        next[0] = Complex64::new(0.0, 0.0);
        let field = VorticityField::from_spectral(g, next).map_err(|e| match e {
            FieldError::NonFinite => FieldError::Blowup { time },
            other => other,
        })?;
        Ok(if self.config.enforce_odd_odd { field.odd_odd_projection() } else { field })
    }

    /// Spectral tendency `-P(u . grad w)` and the sup of the velocity used.
    fn tendency(
        &self,
        g: Grid,
        w: &[Complex64],
        time: f64,
    ) -> Result<(Vec<Complex64>, f64), FieldError> {
        let h = g.half();
        let trunc: Vec<Complex64> = w
            .par_iter()
            .enumerate()
            .map(|(i, c)| if g.dealias_keep(i % h, i / h) { *c } else { Complex64::new(0.0, 0.0) })
            .collect();
        let (s1, s2) = velocity_coefficients(g, &trunc, self.config.orientation);
        let grad = |axis: usize| -> Vec<Complex64> {
            trunc
                .par_iter()
                .enumerate()
                .map(|(i, c)| {
                    let (k1, k2) = g.derivative_wavenumber(i % h, i / h);
                    c * Complex64::new(0.0, if axis == 0 { k1 } else { k2 })
                })
                .collect()
        };
        let t = Transform::for_grid(g);
        let u1 = t.inverse(&s1);
        let u2 = t.inverse(&s2);
        let d1 = t.inverse(&grad(0));
        let d2 = t.inverse(&grad(1));
        let mut umax = 0.0_f64;
        let mut product = vec![0.0; g.len()];
        for i in 0..g.len() {
            umax = umax.max(u1[i].hypot(u2[i]));
            product[i] = -(u1[i] * d1[i] + u2[i] * d2[i]);
        }
        if !umax.is_finite() || product.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::Blowup { time });
        }
        let mut out = t.forward(&product);
        out.par_iter_mut().enumerate().for_each(|(i, c)| {
            if !g.dealias_keep(i % h, i / h) {
                *c = Complex64::new(0.0, 0.0);
            }
        });
        out[0] = Complex64::new(0.0, 0.0);
        Ok((out, umax))
    }

    /// Adaptive-dt integration up to `horizon`, keeping every `stride`-th state and the last one.
    pub fn run(
        &self,
        omega0: &VorticityField,
        horizon: f64,
        stride: usize,
    ) -> Result<TimeSeries, FieldError> {
        self.run_with_output(omega0, horizon, stride, None)
    }

    pub fn run_with_output(
        &self,
        omega0: &VorticityField,
        horizon: f64,
        stride: usize,
        snapshot_dir: Option<&Path>,
    ) -> Result<TimeSeries, FieldError> {
        omega0.require_zero_mean()?;
        let stride = stride.max(1);
        let g = omega0.grid();
        let l2_0 = omega0.l2_norm();
        let mut series = TimeSeries {
            times: vec![0.0],
            states: vec![omega0.clone()],
            step_log: Vec::new(),
            orientation: self.config.orientation,
        };
        if let Some(dir) = snapshot_dir {
            std::fs::create_dir_all(dir)?;
            write_snapshot(&dir.join("snapshot_00000.bin"), omega0, 0.0)?;
        }
        let mut current = omega0.clone();
        let mut t = 0.0;
        let eps = 1e-12 * horizon.max(1.0);
        let mut steps = 0usize;
        while t < horizon - eps {
            let (k1, umax) = self.tendency(g, current.spectral(), t)?;
            let remaining = horizon - t;
            let mut dt = self.cfl_limit(g, umax).min(self.config.max_dt);
            if dt >= remaining {
                dt = remaining;
            } else if remaining - dt < 0.25 * dt {
                dt = 0.5 * remaining;
            }
            let next = self.finish_step(&current, k1, dt, t)?;
            steps += 1;
            t = if dt == remaining { horizon } else { t + dt };
            let l2 = next.l2_norm();
            series.step_log.push(StepRecord {
                time: t,
                dt,
                cfl: umax * dt / g.spacing(),
                l2_drift: if l2_0 > 0.0 { (l2 - l2_0).abs() / l2_0 } else { 0.0 },
                linf: next.max_abs(),
                tail_fraction: tail_fraction(&next),
            });
            current = next;
            if steps.is_multiple_of(stride) || t >= horizon - eps {
                if let Some(dir) = snapshot_dir {
                    write_snapshot(&dir.join(format!("snapshot_{steps:05}.bin")), &current, t)?;
                }
                series.times.push(t);
                series.states.push(current.clone());
            }
        }
        Ok(series)
    }
}

/// Enstrophy share of the modes whose max-norm index exceeds `2/3` of the dealiasing cutoff.
pub(crate) fn tail_fraction(omega: &ScalarField) -> f64 {
    let g = omega.grid();
    let h = g.half();
    let cut = (g.resolution() / 3) as i64 * 2 / 3;
    let (mut tail, mut total) = (0.0, 0.0);
    for (i, c) in omega.spectral().iter().enumerate() {
        let m1 = (i % h) as i64;
        let m2 = g.signed_mode(i / h).abs();
        let weight = if m1 == 0 { 1.0 } else { 2.0 };
        let e = weight * c.norm_sqr();
        total += e;
        if m1.max(m2) > cut {
            tail += e;
        }
    }
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}
