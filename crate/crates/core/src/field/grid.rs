use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::FieldError;

/// Uniform periodic grid on `[-1, 1)^2`.
///
/// Samples are stored row-major with `x1` fastest: node `(j1, j2)` lives at
/// index `j2 * n + j1`. Half-spectrum coefficients are stored as
/// `m2 * (n / 2 + 1) + m1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    resolution: usize,
}

impl Grid {
    pub fn new(resolution: usize) -> Result<Self, FieldError> {
        if resolution < 16 || !resolution.is_power_of_two() {
            return Err(FieldError::BadResolution(resolution));
        }
        Ok(Self { resolution })
    }

    #[inline]
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 / self.resolution as f64
    }

    /// Number of real samples.
    #[inline]
    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of retained columns of the half spectrum along `x1`.
    #[inline]
    pub fn half(&self) -> usize {
        self.resolution / 2 + 1
    }

    #[inline]
    pub fn spectral_len(&self) -> usize {
        self.resolution * self.half()
    }

    #[inline]
    pub fn coord(&self, j: usize) -> f64 {
        -1.0 + j as f64 * self.spacing()
    }

    #[inline]
    pub fn index(&self, j1: usize, j2: usize) -> usize {
        j2 * self.resolution + j1
    }

    #[inline]
    pub fn node(&self, idx: usize) -> [f64; 2] {
        let n = self.resolution;
        [self.coord(idx % n), self.coord(idx / n)]
    }

    /// Index of the node mirrored through the origin along one axis.
    #[inline]
    pub fn mirror(&self, j: usize) -> usize {
        (self.resolution - j) % self.resolution
    }

    /// Signed mode number for a full-length axis index.
    #[inline]
    pub fn signed_mode(&self, m: usize) -> i64 {
        let n = self.resolution;
        if m <= n / 2 {
            m as i64
        } else {
            m as i64 - n as i64
        }
    }

    /// Wavenumbers `(k1, k2)` of the half-spectrum entry `(m1, m2)`.
    #[inline]
    pub fn wavenumber(&self, m1: usize, m2: usize) -> (f64, f64) {
        (PI * m1 as f64, PI * self.signed_mode(m2) as f64)
    }

    /// Wavenumbers with the Nyquist modes zeroed, for odd-order derivatives.
    #[inline]
    pub fn derivative_wavenumber(&self, m1: usize, m2: usize) -> (f64, f64) {
        let nyq = self.resolution / 2;
        let (k1, k2) = self.wavenumber(m1, m2);
        (
            if m1 == nyq { 0.0 } else { k1 },
            if m2 == nyq { 0.0 } else { k2 },
        )
    }

    /// Whether mode `(m1, m2)` survives two-thirds dealiasing.
    #[inline]
    pub fn dealias_keep(&self, m1: usize, m2: usize) -> bool {
        let cut = (self.resolution / 3) as i64;
        (m1 as i64) <= cut && self.signed_mode(m2).abs() <= cut
    }

    /// Nearest node index along an axis for a coordinate in `[-1, 1)`.
    pub fn nearest(&self, x: f64) -> usize {
        let s = ((x + 1.0) / self.spacing()).round() as i64;
        s.rem_euclid(self.resolution as i64) as usize
    }

    /// Wrap a coordinate into `[-1, 1)`.
    #[inline]
    pub fn wrap(x: f64) -> f64 {
        (x + 1.0).rem_euclid(2.0) - 1.0
    }
}
