use num_complex::Complex64;
use rayon::prelude::*;
use std::ops::Deref;

use super::{FieldError, Grid, Transform};

/// Real periodic field held both as grid samples and half-spectrum coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    spectral: Vec<Complex64>,
}

impl ScalarField {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite);
        }
        let spectral = Transform::for_grid(grid).forward(&values);
        Ok(Self { grid, values, spectral })
    }

    pub fn from_spectral(grid: Grid, spectral: Vec<Complex64>) -> Result<Self, FieldError> {
        if spectral.len() != grid.spectral_len() {
            return Err(FieldError::LengthMismatch {
                expected: grid.spectral_len(),
                got: spectral.len(),
            });
        }
        if spectral.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(FieldError::NonFinite);
        }
        let values = Transform::for_grid(grid).inverse(&spectral);
        Ok(Self { grid, values, spectral })
    }

    pub fn from_fn<F>(grid: Grid, f: F) -> Result<Self, FieldError>
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let [x1, x2] = grid.node(i);
                f(x1, x2)
            })
            .collect();
        Self::from_values(grid, values)
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            spectral: vec![Complex64::new(0.0, 0.0); grid.spectral_len()],
        }
    }

    /// Assemble without re-transforming. Callers guarantee consistency.
    pub(crate) fn from_parts(grid: Grid, values: Vec<f64>, spectral: Vec<Complex64>) -> Self {
        Self { grid, values, spectral }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn spectral(&self) -> &[Complex64] {
        &self.spectral
    }

    #[inline]
    pub fn at(&self, j1: usize, j2: usize) -> f64 {
        self.values[self.grid.index(j1, j2)]
    }

    pub fn mean(&self) -> f64 {
        self.spectral[0].re
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `L^2` norm over the torus from the grid samples.
    pub fn l2_norm(&self) -> f64 {
        let h = self.grid.spacing();
        (self.values.iter().map(|v| v * v).sum::<f64>() * h * h).sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
            spectral: self.spectral.iter().map(|v| v * c).collect(),
        }
    }

    /// Apply a coefficient-wise multiplier indexed by half-spectrum mode `(m1, m2)`.
    pub fn map_spectral<F>(&self, mult: F) -> Self
    where
        F: Fn(usize, usize) -> Complex64 + Sync,
    {
        let h = self.grid.half();
        let spectral: Vec<Complex64> = self
            .spectral
            .par_iter()
            .enumerate()
            .map(|(i, c)| c * mult(i % h, i / h))
            .collect();
        let values = Transform::for_grid(self.grid).inverse(&spectral);
        Self { grid: self.grid, values, spectral }
    }

    /// Spectral partial derivative along `axis` (0 for `x1`, 1 for `x2`).
    pub fn derivative(&self, axis: usize) -> Self {
        let g = self.grid;
        self.map_spectral(|m1, m2| {
            let (k1, k2) = g.derivative_wavenumber(m1, m2);
            Complex64::new(0.0, if axis == 0 { k1 } else { k2 })
        })
    }

    pub fn laplacian(&self) -> Self {
        let g = self.grid;
        self.map_spectral(|m1, m2| {
            let (k1, k2) = g.wavenumber(m1, m2);
            Complex64::new(-(k1 * k1 + k2 * k2), 0.0)
        })
    }

    /// Largest violation of `f(-x1, x2) = -f(x1, x2)` and `f(x1, -x2) = -f(x1, x2)`.
    pub fn odd_odd_defect(&self) -> f64 {
        let g = self.grid;
        let n = g.resolution();
        (0..n)
            .into_par_iter()
            .map(|j2| {
                let mut worst = 0.0_f64;
                for j1 in 0..n {
                    let v = self.at(j1, j2);
                    worst = worst
                        .max((v + self.at(g.mirror(j1), j2)).abs())
                        .max((v + self.at(j1, g.mirror(j2))).abs());
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Orthogonal projection onto fields odd in each coordinate.
    pub fn odd_odd_projection(&self) -> Self {
        let g = self.grid;
        let n = g.resolution();
        let values: Vec<f64> = (0..g.len())
            .into_par_iter()
            .map(|i| {
                let (j1, j2) = (i % n, i / n);
                let (r1, r2) = (g.mirror(j1), g.mirror(j2));
                0.25 * (self.at(j1, j2) - self.at(r1, j2) - self.at(j1, r2) + self.at(r1, r2))
            })
            .collect();
        let spectral = Transform::for_grid(g).forward(&values);
        Self { grid: g, values, spectral }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// The advected scalar of the vorticity formulation.
#[derive(Debug, Clone, PartialEq)]
pub struct VorticityField(ScalarField);

impl VorticityField {
    pub fn new(field: ScalarField) -> Self {
        Self(field)
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, FieldError> {
        ScalarField::from_values(grid, values).map(Self)
    }

    pub fn from_spectral(grid: Grid, spectral: Vec<Complex64>) -> Result<Self, FieldError> {
        ScalarField::from_spectral(grid, spectral).map(Self)
    }

    pub fn from_fn<F>(grid: Grid, f: F) -> Result<Self, FieldError>
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        ScalarField::from_fn(grid, f).map(Self)
    }

    pub fn zeros(grid: Grid) -> Self {
        Self(ScalarField::zeros(grid))
    }

    pub fn as_scalar(&self) -> &ScalarField {
        &self.0
    }

    pub fn into_scalar(self) -> ScalarField {
        self.0
    }

    /// Errors unless the mean is zero relative to the field's size.
    pub fn require_zero_mean(&self) -> Result<(), FieldError> {
        let mean = self.mean();
        if mean.abs() > 1e-10 * self.max_abs().max(1.0) {
            return Err(FieldError::NonZeroMean { mean });
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.scaled(c))
    }

    pub fn odd_odd_projection(&self) -> Self {
        Self(self.0.odd_odd_projection())
    }
}

impl Deref for VorticityField {
    type Target = ScalarField;
    fn deref(&self) -> &ScalarField {
        &self.0
    }
}

/// Divergence-free velocity `(u1, u2)` derived from a vorticity field.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    u1: ScalarField,
    u2: ScalarField,
}

impl VelocityField {
    pub(crate) fn new(u1: ScalarField, u2: ScalarField) -> Self {
        Self { u1, u2 }
    }

    pub fn grid(&self) -> Grid {
        self.u1.grid()
    }

    pub fn u1(&self) -> &ScalarField {
        &self.u1
    }

    pub fn u2(&self) -> &ScalarField {
        &self.u2
    }

    pub fn spectral1(&self) -> &[Complex64] {
        self.u1.spectral()
    }

    pub fn spectral2(&self) -> &[Complex64] {
        self.u2.spectral()
    }

    pub fn component(&self, j: usize) -> &ScalarField {
        if j == 0 {
            &self.u1
        } else {
            &self.u2
        }
    }

    /// `max |k . u_hat| / max |u_hat|`, zero for a vanishing field.
    pub fn divergence_certificate(&self) -> f64 {
        let g = self.grid();
        let h = g.half();
        let (s1, s2) = (self.spectral1(), self.spectral2());
        let mut worst = 0.0_f64;
        let mut scale = 0.0_f64;
        for i in 0..s1.len() {
            let (k1, k2) = g.wavenumber(i % h, i / h);
            worst = worst.max((s1[i] * k1 + s2[i] * k2).norm());
            scale = scale.max(s1[i].norm()).max(s2[i].norm());
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.u1
            .values()
            .iter()
            .zip(self.u2.values())
            .fold(0.0_f64, |m, (a, b)| m.max(a.hypot(*b)))
    }

    /// `d u_j / d x_i` as a grid field.
    pub fn gradient_entry(&self, i: usize, j: usize) -> ScalarField {
        self.component(j).derivative(i)
    }
}
