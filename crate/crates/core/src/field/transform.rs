use num_complex::Complex64;
use once_cell::sync::Lazy;
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::Grid;

/// Cached FFT plans for one grid.
///
/// `forward` produces coefficients `c` normalised so that
/// `f(x) = sum c[m] exp(i pi m . (x + 1))`; `inverse` is its exact inverse.
pub struct Transform {
    grid: Grid,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

static CACHE: Lazy<Mutex<HashMap<usize, Arc<Transform>>>> = Lazy::new(|| Mutex::new(HashMap::new()));

impl Transform {
    pub fn for_grid(grid: Grid) -> Arc<Transform> {
        let mut cache = CACHE.lock().unwrap_or_else(|e| e.into_inner());
        cache
            .entry(grid.resolution())
            .or_insert_with(|| {
                let n = grid.resolution();
                let mut rp = RealFftPlanner::<f64>::new();
                let mut cp = FftPlanner::<f64>::new();
                Arc::new(Transform {
                    grid,
                    r2c: rp.plan_fft_forward(n),
                    c2r: rp.plan_fft_inverse(n),
                    fwd: cp.plan_fft_forward(n),
                    inv: cp.plan_fft_inverse(n),
                })
            })
            .clone()
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let n = self.grid.resolution();
        let h = self.grid.half();
        assert_eq!(values.len(), n * n);
        let mut rows = vec![Complex64::new(0.0, 0.0); n * h];
        rows.par_chunks_mut(h)
            .zip(values.par_chunks(n))
            .for_each_init(
                || (vec![0.0; n], self.r2c.make_scratch_vec()),
                |(input, scratch), (out, row)| {
                    input.copy_from_slice(row);
                    self.r2c
                        .process_with_scratch(input, out, scratch)
                        .expect("r2c lengths are fixed by the grid");
                },
            );
        let mut cols = transpose(&rows, n, h);
        self.columns(&mut cols, &self.fwd);
        let scale = 1.0 / (n * n) as f64;
        let mut spec = transpose(&cols, h, n);
        spec.par_iter_mut().for_each(|c| *c *= scale);
        spec
    }

    pub fn inverse(&self, spectral: &[Complex64]) -> Vec<f64> {
        let n = self.grid.resolution();
        let h = self.grid.half();
        assert_eq!(spectral.len(), n * h);
        let mut cols = transpose(spectral, n, h);
        self.columns(&mut cols, &self.inv);
        let rows = transpose(&cols, h, n);
        let mut values = vec![0.0; n * n];
        values
            .par_chunks_mut(n)
            .zip(rows.par_chunks(h))
            .for_each_init(
                || (vec![Complex64::new(0.0, 0.0); h], self.c2r.make_scratch_vec()),
                |(input, scratch), (out, row)| {
                    input.copy_from_slice(row);
                    input[0].im = 0.0;
                    input[h - 1].im = 0.0;
                    self.c2r
                        .process_with_scratch(input, out, scratch)
                        .expect("c2r lengths are fixed by the grid");
                },
            );
        values
    }

    fn columns(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.resolution();
        data.par_chunks_mut(n).for_each_init(
            || vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()],
            |scratch, col| plan.process_with_scratch(col, scratch),
        );
    }
}

/// Transpose a `rows x cols` row-major array.
fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::new(0.0, 0.0); rows * cols];
    dst.par_chunks_mut(rows).enumerate().for_each(|(c, out)| {
        for (r, o) in out.iter_mut().enumerate() {
            *o = src[r * cols + c];
        }
    });
    dst
}
