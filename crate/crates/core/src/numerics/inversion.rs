//! Numerical Laplace inversion of real functions from their transforms.
//!
//! Two schemes are provided. The fixed Talbot contour converges
//! geometrically for transforms that are analytic off the negative real
//! axis and bounded on the left half of the contour. Transforms carrying a
//! delay factor `e^{-s·b}` (deterministic or Pareto jump laws) blow up on
//! that half-plane, so those go through Euler-accelerated Fourier series
//! on a vertical Bromwich line instead.

use num_complex::Complex64;
use std::f64::consts::PI;

/// Roundoff-optimal node count for the fixed Talbot contour in f64.
pub const TALBOT_NODES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionScheme {
    Talbot { nodes: usize },
    Euler,
}

impl InversionScheme {
    pub fn invert<F: Fn(Complex64) -> Complex64>(&self, transform: F, t: f64) -> f64 {
        match *self {
            InversionScheme::Talbot { nodes } => talbot(transform, t, nodes),
            InversionScheme::Euler => euler(transform, t),
        }
    }
}

/// Fixed-Talbot inversion with `m` nodes; requires `t > 0`.
pub fn talbot<F: Fn(Complex64) -> Complex64>(transform: F, t: f64, m: usize) -> f64 {
    let r = 2.0 * m as f64 / (5.0 * t);
    let mut total = 0.5 * (r * t).exp() * transform(Complex64::new(r, 0.0)).re;
    for k in 1..m {
        let theta = k as f64 * PI / m as f64;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        let term = (s * t).exp() * transform(s) * Complex64::new(1.0, sigma);
        if term.re.is_finite() {
            total += term.re;
        }
    }
    r / m as f64 * total
}

// Long partial sums: kinks (atoms of the jump law) make the series decay
// only like k^-2, and the binomial averaging alone does not recover that.
const EULER_A: f64 = 25.0;
const EULER_TERMS: usize = 1000;
const EULER_AVG: usize = 40;

/// Abate–Whitt Euler summation on the Bromwich line `Re s = A/(2t)`.
pub fn euler<F: Fn(Complex64) -> Complex64>(transform: F, t: f64) -> f64 {
    let scale = (EULER_A / 2.0).exp() / t;
    let mut partial = Vec::with_capacity(EULER_TERMS + EULER_AVG + 1);
    let mut sum = 0.5 * transform(Complex64::new(EULER_A / (2.0 * t), 0.0)).re;
    partial.push(sum);
    for k in 1..=(EULER_TERMS + EULER_AVG) {
        let s = Complex64::new(EULER_A, 2.0 * k as f64 * PI) / (2.0 * t);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * transform(s).re;
        partial.push(sum);
    }
    let mut binom = 1.0;
    let mut avg = 0.0;
    for k in 0..=EULER_AVG {
        avg += binom * partial[EULER_TERMS + k];
        binom *= (EULER_AVG - k) as f64 / (k + 1) as f64;
    }
    scale * avg / 2f64.powi(EULER_AVG as i32)
}
