use crate::error::{Error, Result};

/// Newton iteration safeguarded by a sign-changing bracket `[lo, hi]`:
/// any Newton step leaving the bracket, or failing to halve it, is
/// replaced by bisection.
pub fn newton_bisect<F, D>(f: F, df: D, mut lo: f64, mut hi: f64, xtol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NoConvergence {
            what: "root bracket",
            iterations: 0,
            residual: flo.abs().min(fhi.abs()),
        });
    }
    let mut x = 0.5 * (lo + hi);
    let mut last_width = hi - lo;
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
        } else {
            hi = x;
        }
        let width = hi - lo;
        if width <= xtol * (1.0 + x.abs()) {
            return Ok(0.5 * (lo + hi));
        }
        let d = df(x);
        let newton = x - fx / d;
        let accept = d.is_finite() && d != 0.0 && newton > lo && newton < hi && width < 0.75 * last_width;
        last_width = width;
        let next = if accept { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 0.25 * xtol * (1.0 + x.abs()) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NoConvergence {
        what: "newton_bisect",
        iterations: 200,
        residual: f(x).abs(),
    })
}

/// Plain bisection for a nondecreasing function: returns `x` in `[lo, hi]`
/// with `f(x) ≈ target` to absolute `xtol`.
pub fn bisect_monotone<F: Fn(f64) -> f64>(f: F, target: f64, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
