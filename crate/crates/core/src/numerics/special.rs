//! Generalized exponential integral `E_p(z) = ∫_1^∞ e^{-zt} t^{-p} dt` for
//! real `p > 0` and complex `z` with `Re z ≥ 0`, which gives the Laplace
//! transform of a Pareto law in closed form.

use num_complex::Complex64;
use statrs::function::gamma::gamma;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_RADIUS: f64 = 2.0;

fn is_integer(p: f64) -> bool {
    (p - p.round()).abs() < 1e-12
}

fn digamma_int(n: usize) -> f64 {
    -EULER_GAMMA + (1..n).map(|m| 1.0 / m as f64).sum::<f64>()
}

/// Modified-Lentz continued fraction, good for `|z| ≥ 1` off the negative axis.
fn expint_cf(p: f64, z: Complex64) -> Complex64 {
    let tiny = 1e-300;
    let mut b = z + p;
    let mut c = Complex64::new(1.0 / tiny, 0.0);
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -(i as f64) * (p - 1.0 + i as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    h * (-z).exp()
}

/// Σ_{k ≥ k0} (-z)^k / (k! (k + 1 - p)), skipping the resonant index when
/// `p` is an integer.
fn power_sum(p: f64, z: Complex64, k0: usize) -> Complex64 {
    let mut term = Complex64::new(1.0, 0.0); // (-z)^k / k!
    for k in 1..=k0 {
        term *= -z / k as f64;
    }
    let mut sum = Complex64::new(0.0, 0.0);
    let resonant = if is_integer(p) { Some(p.round() as usize - 1) } else { None };
    let mut k = k0;
    loop {
        if Some(k) != resonant {
            let piece = term / (k as f64 + 1.0 - p);
            sum += piece;
            if k > 4 && piece.norm() < 1e-17 * sum.norm().max(1e-300) {
                break;
            }
        }
        k += 1;
        term *= -z / k as f64;
        if k > 400 {
            break;
        }
    }
    sum
}

/// The singular part of the series: `Γ(1-p) z^{p-1}` for non-integer `p`,
/// and the logarithmic term for integer `p`.
fn singular_part(p: f64, z: Complex64) -> Complex64 {
    if is_integer(p) {
        let n = p.round() as usize;
        let mut pow = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        for k in 1..n {
            pow *= -z;
            fact *= k as f64;
        }
        pow / fact * (-z.ln() + digamma_int(n))
    } else {
        gamma(1.0 - p) * z.powf(p - 1.0)
    }
}

/// `E_p(z)`.
pub fn expint(p: f64, z: Complex64) -> Complex64 {
    if z.norm() == 0.0 {
        return Complex64::new(1.0 / (p - 1.0), 0.0);
    }
    if z.norm() >= SERIES_RADIUS {
        expint_cf(p, z)
    } else {
        singular_part(p, z) - power_sum(p, z, 0)
    }
}

/// `1 - a·E_{a+1}(z)`, the complement of the Pareto(a) transform at
/// `z = x_m θ`, computed without cancellation near `z = 0`.
pub fn pareto_transform_complement(a: f64, z: Complex64) -> Complex64 {
    if z.norm() == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if z.norm() >= SERIES_RADIUS {
        return 1.0 - a * expint_cf(a + 1.0, z);
    }
    // a·E_{a+1}(z) = 1 + a·singular - a·Σ_{k≥1}
    -a * singular_part(a + 1.0, z) + a * power_sum(a + 1.0, z, 1)
}
