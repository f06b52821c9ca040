//! One-dimensional quadrature rules.

use std::collections::BinaryHeap;
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("adaptive quadrature stopped at {intervals} intervals with error {error:e} above tolerance {tolerance:e}")]
    NotConverged { intervals: usize, error: f64, tolerance: f64 },
    #[error("integrand returned a non-finite value at {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Single Gauss–Kronrod 7/15 panel.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(&WGK).take(7).enumerate() {
        let (f1, f2) = (f(c - h * x), f(c + h * x));
        kron += w * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Estimate { value: kron * h, error: ((kron - gauss) * h).abs() }
}

struct Panel {
    a: f64,
    b: f64,
    est: Estimate,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

/// Globally adaptive Gauss–Kronrod integration over `[a, b]` split at `breaks`.
///
/// Stops once the summed error estimate is below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Estimate, QuadratureError> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut pts = vec![lo];
    pts.extend(breaks.iter().copied().filter(|&p| p > lo && p < hi));
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut heap = BinaryHeap::new();
    let (mut value, mut error) = (0.0, 0.0);
    for w in pts.windows(2) {
        let est = gk15(&f, w[0], w[1]);
        value += est.value;
        error += est.error;
        heap.push(Panel { a: w[0], b: w[1], est });
    }
    const MAX_PANELS: usize = 20_000;
    loop {
        if !value.is_finite() {
            return Err(QuadratureError::NonFinite(0.5 * (lo + hi)));
        }
        let tol = abs_tol.max(rel_tol * value.abs());
        if error <= tol {
            return Ok(Estimate { value: sign * value, error });
        }
        if heap.len() >= MAX_PANELS {
            return Err(QuadratureError::NotConverged { intervals: heap.len(), error, tolerance: tol });
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            return Err(QuadratureError::NotConverged { intervals: heap.len(), error, tolerance: tol });
        }
        let left = gk15(&f, worst.a, m);
        let right = gk15(&f, m, worst.b);
        value += left.value + right.value - worst.est.value;
        error += left.error + right.error - worst.est.error;
        heap.push(Panel { a: worst.a, b: m, est: left });
        heap.push(Panel { a: m, b: worst.b, est: right });
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (c + h * x, h * w))
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Trapezoid rule over one period, spectrally accurate for smooth periodic integrands.
pub fn periodic_trapezoid<F: Fn(f64) -> f64>(f: F, start: f64, period: f64, samples: usize) -> f64 {
    let h = period / samples as f64;
    (0..samples).map(|i| f(start + i as f64 * h)).sum::<f64>() * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(8);
        let v = gl.integrate(|x| x.powi(15) + 3.0 * x.powi(14), -1.0, 2.0);
        let e = (2f64.powi(16) - 1.0) / 16.0 + 3.0 * (2f64.powi(15) + 1.0) / 15.0;
        assert!((v - e).abs() < 1e-9 * e);
        let wsum: f64 = gl.weights.iter().sum();
        assert!((wsum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let est = integrate(|x: f64| x.sqrt().ln(), 0.0, 1.0, &[], 1e-10, 0.0).unwrap();
        assert!((est.value + 0.5).abs() < 1e-9);
    }

    #[test]
    fn adaptive_respects_breakpoints_and_orientation() {
        let f = |x: f64| if x < 0.3 { 1.0 } else { 2.0 };
        let est = integrate(f, 1.0, 0.0, &[0.3], 1e-12, 0.0).unwrap();
        assert!((est.value + 1.7).abs() < 1e-13);
    }

    #[test]
    fn trapezoid_integrates_trig_polynomial() {
        let v = periodic_trapezoid(|t| (4.0 * t).sin().powi(2), 0.0, std::f64::consts::FRAC_PI_2, 64);
        assert!((v - std::f64::consts::FRAC_PI_4).abs() < 1e-14);
    }
}
