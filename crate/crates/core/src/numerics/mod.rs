//! Numerical building blocks: quadrature, root finding, Laplace inversion
//! and the special functions needed by the Pareto jump law.

pub mod inversion;
pub mod quad;
pub mod roots;
pub mod special;

/// `(1 - e^{-u})/u`, continuous at `u = 0`.
pub fn one_minus_exp_over(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - 0.5 * u
    } else {
        -(-u).exp_m1() / u
    }
}

/// `n` points evenly spaced on `[a, b]`, endpoints included.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `n` points geometrically spaced on `[a, b]`, `0 < a < b`.
pub fn geomspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n).into_iter().map(f64::exp).collect()
}
