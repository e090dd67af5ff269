//! Exact simulation of `(X(e_q), X̄(e_q), X̲(e_q))`.
//!
//! Between jumps `X` is a Brownian motion with drift. Its increment over an
//! interval is Gaussian and, given the increment, the bridge maximum and the
//! bridge minimum each have an explicit law. No time grid is involved.
//!
//! The pairs `(X, X̄)` and `(X, X̲)` are exact in joint law. When `σ > 0` the
//! bridge maximum and minimum of the same interval are drawn independently,
//! so the triple is not; nothing in this crate uses `X̄` and `X̲` jointly.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::levy_model::LevyModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathExtremes {
    pub end: f64,
    pub sup: f64,
    pub inf: f64,
}

impl PathExtremes {
    /// The process reflected at its infimum, started from `z`, at the end
    /// of the path: `max(z + X, X − X̲)`.
    pub fn reflected_from(&self, z: f64) -> f64 {
        (z + self.end).max(self.end - self.inf)
    }
}

fn bridge_extreme<R: Rng + ?Sized>(rng: &mut R, d: f64, var: f64, upper: bool) -> f64 {
    if var == 0.0 {
        return if upper { d.max(0.0) } else { d.min(0.0) };
    }
    let e: f64 = -(1.0 - rng.random::<f64>()).ln();
    let root = (d * d + 2.0 * var * e).sqrt();
    if upper {
        0.5 * (d + root)
    } else {
        0.5 * (d - root)
    }
}

/// One path of `X` up to an independent `Exp(q)` time.
pub fn simulate_extremes<R: Rng + ?Sized>(model: &LevyModel, q: f64, rng: &mut R) -> PathExtremes {
    let horizon = Exp::new(q).expect("q > 0").sample(rng);
    let sigma = model.sigma();
    let drift = model.drift();
    let jumps = model.jumps();
    let jump_clock = jumps.map(|_| Exp::new(model.jump_rate()).expect("rate > 0"));
    let (mut x, mut sup, mut inf) = (0.0f64, 0.0f64, 0.0f64);
    let mut left = horizon;
    loop {
        let gap = jump_clock.as_ref().map_or(f64::INFINITY, |c| c.sample(rng));
        let h = gap.min(left);
        let var = sigma * sigma * h;
        let z: f64 = StandardNormal.sample(rng);
        let d = -drift * h + var.sqrt() * z;
        let hi = bridge_extreme(rng, d, var, true);
        let lo = bridge_extreme(rng, d, var, false);
        sup = sup.max(x + hi);
        inf = inf.min(x + lo);
        x += d;
        if gap >= left {
            break;
        }
        left -= gap;
        x += jumps.expect("jump clock implies jumps").sample(rng);
        sup = sup.max(x);
    }
    PathExtremes { end: x, sup, inf }
}
