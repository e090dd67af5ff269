//! The spectrally positive input `X(t) = σB(t) − c·t + Σ J_i` and the
//! Laplace exponent `ψ(θ) = log E[e^{−θX(1)}]` of its dual.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numerics::roots::newton_bisect;
use crate::numerics::special::{expint, pareto_transform_complement};

/// Law of the upward jumps of `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpDist {
    Exponential { rate: f64 },
    Pareto { tail_index: f64, scale: f64 },
    Deterministic { size: f64 },
}

impl JumpDist {
    fn problems(&self, out: &mut Vec<String>) {
        let bad = |v: f64| !(v.is_finite() && v > 0.0);
        match *self {
            JumpDist::Exponential { rate } if bad(rate) => {
                out.push(format!("jump_dist.rate must be > 0 (got {rate})"))
            }
            JumpDist::Pareto { tail_index, scale } => {
                if !(tail_index.is_finite() && tail_index > 1.0) {
                    out.push(format!("jump_dist.tail_index must be > 1 (got {tail_index})"));
                }
                if bad(scale) {
                    out.push(format!("jump_dist.scale must be > 0 (got {scale})"));
                }
            }
            JumpDist::Deterministic { size } if bad(size) => {
                out.push(format!("jump_dist.size must be > 0 (got {size})"))
            }
            _ => {}
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            JumpDist::Exponential { rate } => 1.0 / rate,
            JumpDist::Pareto { tail_index, scale } => tail_index * scale / (tail_index - 1.0),
            JumpDist::Deterministic { size } => size,
        }
    }

    /// `P(J > u)`.
    pub fn survival(&self, u: f64) -> f64 {
        match *self {
            JumpDist::Exponential { rate } => (-rate * u.max(0.0)).exp(),
            JumpDist::Pareto { tail_index, scale } => {
                if u <= scale {
                    1.0
                } else {
                    (scale / u).powf(tail_index)
                }
            }
            JumpDist::Deterministic { size } => {
                if u < size {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_absolutely_continuous(&self) -> bool {
        !matches!(self, JumpDist::Deterministic { .. })
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self, JumpDist::Deterministic { .. })
    }

    /// `1 − E[e^{−θJ}]` for real θ; infinite when the moment generating
    /// function diverges (θ < 0 beyond the exponential moment range).
    pub fn transform_complement(&self, theta: f64) -> f64 {
        match *self {
            JumpDist::Exponential { rate } => {
                if theta <= -rate {
                    f64::NEG_INFINITY
                } else {
                    theta / (rate + theta)
                }
            }
            JumpDist::Deterministic { size } => -(-theta * size).exp_m1(),
            JumpDist::Pareto { tail_index, scale } => {
                if theta < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    pareto_transform_complement(tail_index, Complex64::new(scale * theta, 0.0)).re
                }
            }
        }
    }

    /// `d/dθ (1 − E[e^{−θJ}]) = E[J e^{−θJ}]`.
    pub fn transform_complement_derivative(&self, theta: f64) -> f64 {
        match *self {
            JumpDist::Exponential { rate } => rate / ((rate + theta) * (rate + theta)),
            JumpDist::Deterministic { size } => size * (-theta * size).exp(),
            JumpDist::Pareto { tail_index, scale } => {
                if theta < 0.0 {
                    f64::INFINITY
                } else {
                    tail_index * scale * expint(tail_index, Complex64::new(scale * theta, 0.0)).re
                }
            }
        }
    }

    /// Complex version of [`Self::transform_complement`], valid for
    /// `Re θ ≥ 0` for every family and on the whole plane minus `θ = −μ`
    /// for exponential jumps.
    pub fn transform_complement_complex(&self, theta: Complex64) -> Complex64 {
        match *self {
            JumpDist::Exponential { rate } => theta / (theta + rate),
            JumpDist::Deterministic { size } => {
                let z = theta * size;
                if z.norm() < 1e-4 {
                    z * (1.0 - z * (0.5 - z / 6.0))
                } else {
                    1.0 - (-z).exp()
                }
            }
            JumpDist::Pareto { tail_index, scale } => pareto_transform_complement(tail_index, theta * scale),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpDist::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            JumpDist::Pareto { tail_index, scale } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                scale * u.powf(-1.0 / tail_index)
            }
            JumpDist::Deterministic { size } => size,
        }
    }
}

/// Parametric description of `X`. `drift` is the service speed `c ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyModelSpec {
    pub sigma: f64,
    pub drift: f64,
    pub jump_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_dist: Option<JumpDist>,
}

impl LevyModelSpec {
    pub fn brownian(sigma: f64, drift: f64) -> Self {
        LevyModelSpec {
            sigma,
            drift,
            jump_rate: 0.0,
            jump_dist: None,
        }
    }

    /// Compound Poisson input with exponential service requirements minus
    /// a linear server of speed `speed`.
    pub fn cpp_exponential(speed: f64, arrival_rate: f64, service_rate: f64) -> Self {
        LevyModelSpec {
            sigma: 0.0,
            drift: speed,
            jump_rate: arrival_rate,
            jump_dist: Some(JumpDist::Exponential { rate: service_rate }),
        }
    }

    pub fn with_jumps(sigma: f64, drift: f64, jump_rate: f64, jumps: JumpDist) -> Self {
        LevyModelSpec {
            sigma,
            drift,
            jump_rate,
            jump_dist: Some(jumps),
        }
    }

    /// Every invariant violation, one message per offending field.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            out.push(format!("sigma must be >= 0 (got {})", self.sigma));
        }
        if !(self.drift.is_finite() && self.drift >= 0.0) {
            out.push(format!("drift must be >= 0 (got {})", self.drift));
        }
        if !(self.jump_rate.is_finite() && self.jump_rate >= 0.0) {
            out.push(format!("jump_rate must be >= 0 (got {})", self.jump_rate));
        }
        match (self.jump_rate > 0.0, &self.jump_dist) {
            (true, None) => out.push("jump_dist is required when jump_rate > 0".into()),
            (false, Some(_)) => out.push("jump_dist given but jump_rate = 0".into()),
            (_, Some(j)) => j.problems(&mut out),
            _ => {}
        }
        if !out.is_empty() {
            return out;
        }
        let has_jumps = self.jump_rate > 0.0;
        if !(self.sigma > 0.0 || (has_jumps && self.drift > 0.0)) {
            out.push("monotone paths: need sigma > 0, or jumps together with drift > 0".into());
        }
        out
    }
}

/// A validated model. Construction rejects monotone and unstable inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyModel {
    spec: LevyModelSpec,
    slope_at_zero: f64,
}

/// Families with a closed-form scale function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    Brownian,
    CppExponential,
    General,
}

impl LevyModel {
    pub fn new(spec: LevyModelSpec) -> Result<Self> {
        let problems = spec.problems();
        if !problems.is_empty() {
            return Err(Error::InvalidModel(problems.join("; ")));
        }
        let jump_mean = spec.jump_dist.map_or(0.0, |j| j.mean());
        let slope_at_zero = spec.drift - spec.jump_rate * jump_mean;
        if slope_at_zero < 0.0 {
            return Err(Error::Unstable { slope: slope_at_zero });
        }
        Ok(LevyModel { spec, slope_at_zero })
    }

    pub fn spec(&self) -> &LevyModelSpec {
        &self.spec
    }

    pub fn sigma(&self) -> f64 {
        self.spec.sigma
    }

    pub fn drift(&self) -> f64 {
        self.spec.drift
    }

    pub fn jump_rate(&self) -> f64 {
        self.spec.jump_rate
    }

    pub fn jumps(&self) -> Option<JumpDist> {
        if self.spec.jump_rate > 0.0 {
            self.spec.jump_dist
        } else {
            None
        }
    }

    /// `ψ′(0+) = c − λE[J] = −E[X(1)]`.
    pub fn mean_slope(&self) -> f64 {
        self.slope_at_zero
    }

    pub fn is_null_recurrent(&self) -> bool {
        self.slope_at_zero == 0.0
    }

    /// Structural regularity: `σ > 0` or an absolutely continuous jump law.
    pub fn is_regular(&self) -> bool {
        self.spec.sigma > 0.0 || self.jumps().is_none_or(|j| j.is_absolutely_continuous())
    }

    pub fn has_bounded_variation(&self) -> bool {
        self.spec.sigma == 0.0
    }

    pub fn family(&self) -> ModelFamily {
        match (self.spec.sigma > 0.0, self.jumps()) {
            (true, None) => ModelFamily::Brownian,
            (false, Some(JumpDist::Exponential { .. })) => ModelFamily::CppExponential,
            _ => ModelFamily::General,
        }
    }

    /// Fails with a domain error for `θ < 0`.
    pub fn psi(&self, theta: f64) -> Result<f64> {
        if !(theta >= 0.0) {
            return Err(domain("psi", theta, "theta >= 0"));
        }
        Ok(self.psi_unchecked(theta))
    }

    /// `ψ` without the domain check; meaningful for `θ < 0` only while the
    /// jump law has exponential moments there (−∞ otherwise).
    pub(crate) fn psi_unchecked(&self, theta: f64) -> f64 {
        let s = &self.spec;
        let mut v = s.drift * theta + 0.5 * s.sigma * s.sigma * theta * theta;
        if let Some(j) = self.jumps() {
            let comp = j.transform_complement(theta);
            if comp == f64::NEG_INFINITY {
                return f64::INFINITY;
            }
            v -= s.jump_rate * comp;
        }
        v
    }

    pub fn psi_prime(&self, theta: f64) -> Result<f64> {
        if !(theta >= 0.0) {
            return Err(domain("psi_prime", theta, "theta >= 0"));
        }
        Ok(self.psi_prime_unchecked(theta))
    }

    pub(crate) fn psi_prime_unchecked(&self, theta: f64) -> f64 {
        let s = &self.spec;
        let mut v = s.drift + s.sigma * s.sigma * theta;
        if let Some(j) = self.jumps() {
            v -= s.jump_rate * j.transform_complement_derivative(theta);
        }
        v
    }

    /// `ψ` on the complex plane (`Re θ ≥ 0`, or anywhere off the poles for
    /// exponential jumps).
    pub fn psi_complex(&self, theta: Complex64) -> Complex64 {
        let s = &self.spec;
        let mut v = s.drift * theta + 0.5 * s.sigma * s.sigma * theta * theta;
        if let Some(j) = self.jumps() {
            v -= s.jump_rate * j.transform_complement_complex(theta);
        }
        v
    }

    /// `log E[e^{γX(1)}] = ψ(−γ)`, or `None` when the exponential moment
    /// of order `γ` is infinite.
    pub fn cumulant(&self, gamma: f64) -> Option<f64> {
        let v = self.psi_unchecked(-gamma);
        v.is_finite().then_some(v)
    }

    /// `Φ(q)`: the largest root of `ψ(θ) = q`.
    pub fn phi(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(domain("phi_inverse", q, "q > 0"));
        }
        let slope = self.slope_at_zero;
        let mut hi = if slope > 0.0 { (q / slope + 1.0).max(1e-8) } else { 1.0 };
        let mut lo = 0.0;
        let mut guard = 0;
        while self.psi_unchecked(hi) <= q {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 2000 {
                return Err(Error::NoConvergence {
                    what: "phi bracket",
                    iterations: guard,
                    residual: q - self.psi_unchecked(hi),
                });
            }
        }
        // ψ − q < 0 on (0, Φ) by convexity and ψ(0) = 0, so the bracket is valid
        // as soon as lo > 0 or ψ′(0+) > 0; if lo = 0 nudge it inside.
        if lo == 0.0 {
            lo = f64::MIN_POSITIVE;
        }
        newton_bisect(
            |t| self.psi_unchecked(t) - q,
            |t| self.psi_prime_unchecked(t),
            lo,
            hi,
            1e-16,
        )
    }

    /// `Π̄(u) = λ P(J > u)`.
    pub fn levy_tail(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return Err(domain("levy_tail", u, "u > 0"));
        }
        Ok(self.jumps().map_or(0.0, |j| self.spec.jump_rate * j.survival(u)))
    }
}
