use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use super::{Grid, ScalarField, VelocityField};

/// Exact off-grid evaluation of trigonometric polynomials by separable mode summation.
pub struct PointEvaluator<'a> {
    grid: Grid,
    fields: Vec<&'a [Complex64]>,
}

impl<'a> PointEvaluator<'a> {
    pub fn new(grid: Grid, fields: Vec<&'a [Complex64]>) -> Self {
        Self { grid, fields }
    }

    pub fn scalar(field: &'a ScalarField) -> Self {
        Self::new(field.grid(), vec![field.spectral()])
    }

    pub fn velocity(u: &'a VelocityField) -> Self {
        Self::new(u.grid(), vec![u.spectral1(), u.spectral2()])
    }

    /// Values of every attached field at `x`.
    pub fn eval(&self, x: [f64; 2]) -> Vec<f64> {
        let n = self.grid.resolution();
        let h = self.grid.half();
        let e1: Vec<Complex64> = (0..h)
            .map(|m| {
                let w = if m == 0 || m == h - 1 { 1.0 } else { 2.0 };
                Complex64::from_polar(w, PI * m as f64 * (x[0] + 1.0))
            })
            .collect();
        let mut out = vec![0.0; self.fields.len()];
        for m2 in 0..n {
            let e2 = Complex64::from_polar(1.0, PI * self.grid.signed_mode(m2) as f64 * (x[1] + 1.0));
            for (o, s) in out.iter_mut().zip(&self.fields) {
                let row = &s[m2 * h..(m2 + 1) * h];
                let mut acc = Complex64::new(0.0, 0.0);
                for (c, e) in row.iter().zip(&e1) {
                    acc += c * e;
                }
                *o += (acc * e2).re;
            }
        }
        out
    }
}

const STENCIL: usize = 6;

/// Periodic tensor-product Lagrange interpolation on a six-point stencil.
pub struct LocalInterpolator {
    grid: Grid,
}

impl LocalInterpolator {
    pub fn new(grid: Grid) -> Self {
        Self { grid }
    }

    fn weights(&self, x: f64) -> (i64, [f64; STENCIL]) {
        let s = (x + 1.0) / self.grid.spacing();
        let base = s.floor();
        let t = s - base;
        let mut w = [0.0; STENCIL];
        for (a, wa) in w.iter_mut().enumerate() {
            let oa = a as f64 - 2.0;
            let mut p = 1.0;
            for b in 0..STENCIL {
                if b != a {
                    let ob = b as f64 - 2.0;
                    p *= (t - ob) / (oa - ob);
                }
            }
            *wa = p;
        }
        (base as i64 - 2, w)
    }

    /// Interpolate several fields sampled on the grid at the same point.
    pub fn eval_into(&self, fields: &[&[f64]], x: [f64; 2], out: &mut [f64]) {
        let n = self.grid.resolution() as i64;
        let (b1, w1) = self.weights(x[0]);
        let (b2, w2) = self.weights(x[1]);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (a, wa) in w2.iter().enumerate() {
            let j2 = (b2 + a as i64).rem_euclid(n) as usize;
            for (b, wb) in w1.iter().enumerate() {
                let j1 = (b1 + b as i64).rem_euclid(n) as usize;
                let idx = self.grid.index(j1, j2);
                let w = wa * wb;
                for (o, f) in out.iter_mut().zip(fields) {
                    *o += w * f[idx];
                }
            }
        }
    }

    pub fn eval(&self, field: &[f64], x: [f64; 2]) -> f64 {
        let mut out = [0.0];
        self.eval_into(&[field], x, &mut out);
        out[0]
    }
}

/// Largest observed `|u(x) - u(y)| / (|x - y| log(1 + 1/|x - y|))` over random node pairs
/// at dyadic separations.
pub fn log_lipschitz_modulus(u: &VelocityField, samples: usize, seed: u64) -> f64 {
    use rand::RngExt;
    let g = u.grid();
    let n = g.resolution();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (v1, v2) = (u.u1().values(), u.u2().values());
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let j1 = rng.random_range(0..n);
        let j2 = rng.random_range(0..n);
        let shift = 1usize << rng.random_range(0..(n.trailing_zeros() as usize - 1));
        let dir = rng.random_range(0..3usize);
        let (d1, d2) = match dir {
            0 => (shift, 0),
            1 => (0, shift),
            _ => (shift, shift),
        };
        let a = g.index(j1, j2);
        let b = g.index((j1 + d1) % n, (j2 + d2) % n);
        let dist = g.spacing() * ((d1 * d1 + d2 * d2) as f64).sqrt();
        let du = (v1[a] - v1[b]).hypot(v2[a] - v2[b]);
        worst = worst.max(du / (dist * (1.0 + 1.0 / dist).ln()));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_sum_matches_closed_form() {
        let g = Grid::new(32).unwrap();
        let f = ScalarField::from_fn(g, |x1, x2| (PI * x1).sin() * (3.0 * PI * x2).cos() + (2.0 * PI * x2).sin())
            .unwrap();
        let ev = PointEvaluator::scalar(&f);
        for &x in &[[0.123, -0.77], [0.5, 0.5], [-0.999, 0.31]] {
            let e = (PI * x[0]).sin() * (3.0 * PI * x[1]).cos() + (2.0 * PI * x[1]).sin();
            assert!((ev.eval(x)[0] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn lagrange_reproduces_quintics_and_nodes() {
        let g = Grid::new(64).unwrap();
        let f = ScalarField::from_fn(g, |x1, x2| (PI * x1).cos() * (PI * x2).sin()).unwrap();
        let li = LocalInterpolator::new(g);
        assert!((li.eval(f.values(), g.node(g.index(5, 9))) - f.at(5, 9)).abs() < 1e-14);
        let x = [0.3001, -0.4172];
        let e = (PI * x[0]).cos() * (PI * x[1]).sin();
        assert!((li.eval(f.values(), x) - e).abs() < 1e-8);
    }
}
