//! Law of the continuous-time stationary workload `V(∞)` through its
//! Laplace–Stieltjes transform.
//!
//! Everything here rests on the cycle decomposition: between adjustments
//! the workload started from `Z ~ π` is `X̄(e_q) + (Z − E)⁺` with
//! `E ~ Exp(Φ)` independent, which gives the key equation
//! `E e^{−sV} = L(s)(Φ π̃(s) − s π̃(Φ))/(Φ − s)` where `L` is the
//! transform of `X̄(e_q)` and `π̃` that of `π`.

use crate::embedded_chain::{pi_zero_fixed_point, ChainSamples, LevelDist, StationaryDistribution};
use crate::error::{Error, Result};
use crate::fluctuation::{overshoot_lst, TransitionLaw};
use crate::levy_model::ModelFamily;
use crate::numerics::quad::{integrate, integrate_to_inf};
use crate::scale_fn::ScaleFunction;
use crate::stats::{batch_means, BATCHES};

/// `E[g(V(∞))] = ∫π(dx)(∫g(y)h(x,y)dy + g(0)·atom(x))`, by nested
/// adaptive quadrature. The atom coefficient follows the transition law,
/// so a strict-mode law carries the uncorrected atom.
pub fn steady_functional<G: Fn(f64) -> f64>(law: &TransitionLaw, pi: &StationaryDistribution, g: G) -> Result<f64> {
    let decay = law.sup_law().evaluator().phi().min(decay_rate(law)).max(1e-3);
    let inner = |x: f64| {
        let body = if x > 0.0 {
            integrate(|y| g(y) * law.density(x, y), 0.0, x, 1e-12, 1e-9).value
        } else {
            0.0
        };
        let tail = integrate_to_inf(|y| g(y) * law.density(x, y), x, 1.0 / decay, 1e-12, 1e-9).value;
        body + tail + g(0.0) * law.atom(x)
    };
    let v = pi.integrate(inner);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain {
            what: "steady_functional",
            value: v,
            expected: "g integrable against the stationary law",
        })
    }
}

// slowest exponential rate in the tail of X̄(e_q), used as a length scale
fn decay_rate(law: &TransitionLaw) -> f64 {
    law.sup_law()
        .evaluator()
        .exp_sum()
        .map(|e| e.others().map(|(_, r)| -r).fold(f64::INFINITY, f64::min))
        .filter(|r| r.is_finite() && *r > 0.0)
        .unwrap_or(1.0)
}

/// `E[e^{−sV(∞)}]` from `π` through the key equation.
pub fn steady_lst(law: &TransitionLaw, pi: &StationaryDistribution, s: f64) -> f64 {
    let phi = law.evaluator().phi();
    law.sup_law().lst(s) * pi.integrate(|z| overshoot_lst(phi, z, s))
}

/// A stationary law paired with its transition law, for transform sweeps.
#[derive(Debug, Clone)]
pub struct LstEvaluator<'a> {
    pub law: &'a TransitionLaw,
    pub pi: StationaryDistribution,
}

impl LstEvaluator<'_> {
    pub fn lst(&self, s: f64) -> f64 {
        steady_lst(self.law, &self.pi, s)
    }

    pub fn lst_by_quadrature(&self, s: f64) -> Result<f64> {
        steady_functional(self.law, &self.pi, |y| (-s * y).exp())
    }
}

fn key_factor(b_s: f64, b_phi: f64, b_phi_prime: f64, phi: f64, s: f64) -> f64 {
    if (s - phi).abs() < 1e-6 {
        b_phi - phi * b_phi_prime
    } else {
        (phi * b_s - s * b_phi) / (phi - s)
    }
}

fn level_lst_prime(level: &LevelDist, s: f64) -> f64 {
    match *level {
        LevelDist::Deterministic { value } => -value * (-s * value).exp(),
        LevelDist::Exponential { rate } => -rate / (rate + s).powi(2),
    }
}

/// Transform of `V(∞)` for the constant-level functional `F ≡ B`.
pub fn lst_constant_level(ev: &ScaleFunction, level: &LevelDist, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(crate::error::domain("lst_constant_level", s, "s >= 0"));
    }
    let phi = ev.phi();
    let sup = crate::fluctuation::sup_law(ev)?;
    let bracket = key_factor(level.lst(s), level.lst(phi), level_lst_prime(level, phi), phi, s);
    Ok(sup.lst(s) * bracket)
}

/// Key-equation residual from chain output: the batch-means mean and
/// standard error of `e^{−sU} − L(s)E[e^{−s(F(U) − E)⁺}]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyResidual {
    pub s: f64,
    pub residual: f64,
    pub se: f64,
}

pub fn key_equation_residual(ev: &ScaleFunction, samples: &ChainSamples, s: f64) -> Result<KeyResidual> {
    let phi = ev.phi();
    let l = crate::fluctuation::sup_law(ev)?.lst(s);
    let d: Vec<f64> = samples
        .u
        .iter()
        .zip(&samples.z)
        .map(|(&u, &z)| (-s * u).exp() - l * overshoot_lst(phi, z, s))
        .collect();
    let (residual, se) = batch_means(&d, BATCHES);
    Ok(KeyResidual { s, residual, se })
}

/// `v(s) = E[e^{−sV(∞)}]` for `F(y) = δy` together with the depth at
/// which its products and sums were cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionalLst {
    pub value: f64,
    pub depth: usize,
    /// bound on the relative effect of the dropped factors
    pub tail_bound: f64,
}

// Π_{j<depth} P(δʲs) and (s/Φ)Σ_{k<depth} δᵏ Π_{j≤k} P(δʲs), P(t) = q/(q − ψ(t))
fn proportional_parts(ev: &ScaleFunction, delta: f64, s: f64, depth: usize) -> Result<(f64, f64)> {
    let model = ev.model();
    let q = ev.q();
    let mut prod = 1.0;
    let mut sum = 0.0;
    let mut t = s;
    let mut dk = 1.0;
    for j in 0..depth {
        let gap = q - model.psi(t)?;
        if gap.abs() <= 1e-12 * q {
            return Err(Error::Pole { index: j, value: t });
        }
        prod *= q / gap;
        sum += dk * prod;
        dk *= delta;
        t *= delta;
    }
    Ok((prod, s / ev.phi() * sum))
}

fn auto_depth(ev: &ScaleFunction, delta: f64, s: f64) -> Result<(usize, f64)> {
    let model = ev.model();
    let q = ev.q();
    let mut t = s;
    let mut dk = 1.0;
    for j in 0..10_000 {
        let small = model.psi(t)?.abs() / q;
        if small < 1e-14 && dk * s / ev.phi() / (1.0 - delta) < 1e-14 {
            // Σ_{i≥j}|ψ(δⁱs)|/q ≤ small/(1 − δ) by convexity near 0
            return Ok((j.max(1), (small / (1.0 - delta)).exp_m1()));
        }
        t *= delta;
        dk *= delta;
    }
    Err(Error::NoConvergence {
        what: "lst_proportional truncation",
        iterations: 10_000,
        residual: t,
    })
}

/// Evaluates `v(s) = A(s) − v*·B(s)` with `A = Π P(δʲs)`,
/// `B = (s/Φ)Σ δᵏ Π_{j≤k} P(δʲs)` and `v* = v(δΦ) = A(δΦ)/(1 + B(δΦ))`.
pub fn lst_proportional(ev: &ScaleFunction, delta: f64, s: f64) -> Result<ProportionalLst> {
    let (d1, b1) = auto_depth(ev, delta, s.max(ev.phi()))?;
    lst_proportional_depth(ev, delta, s, d1).map(|v| ProportionalLst { tail_bound: b1, ..v })
}

pub fn lst_proportional_depth(ev: &ScaleFunction, delta: f64, s: f64, depth: usize) -> Result<ProportionalLst> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(crate::error::domain("lst_proportional", delta, "0 < delta < 1"));
    }
    if !(s >= 0.0) {
        return Err(crate::error::domain("lst_proportional", s, "s >= 0"));
    }
    if ev.model().is_null_recurrent() {
        return Err(Error::NullRecurrent);
    }
    let (a_star, b_star) = proportional_parts(ev, delta, delta * ev.phi(), depth)?;
    let denom = 1.0 + b_star;
    if denom.abs() < 1e-12 {
        return Err(Error::Degenerate("lst_proportional: 1 + B(δΦ) vanishes".into()));
    }
    let v_star = a_star / denom;
    let (a, b) = proportional_parts(ev, delta, s, depth)?;
    Ok(ProportionalLst {
        value: a - v_star * b,
        depth,
        tail_bound: 0.0,
    })
}

/// Residual of `v(s) = q/(q − ψ(s))·(v(δs) − (s/Φ)v(δΦ))`.
pub fn proportional_equation_residual(ev: &ScaleFunction, delta: f64, s: f64) -> Result<f64> {
    let v = |t: f64| lst_proportional(ev, delta, t).map(|r| r.value);
    let q = ev.q();
    let rhs = q / (q - ev.model().psi(s)?) * (v(delta * s)? - s / ev.phi() * v(delta * ev.phi())?);
    Ok((v(s)? - rhs).abs())
}

/// The compound Poisson, exponential-jump pieces used by the strict-mode
/// reflect-around-`B` formulas.
#[derive(Debug, Clone, Copy)]
struct CppRoots {
    p: f64,
    mu: f64,
    q: f64,
    plus: f64,
    minus: f64,
}

impl CppRoots {
    fn new(ev: &ScaleFunction) -> Result<Self> {
        let model = ev.model();
        let mu = match (model.family(), model.jumps()) {
            (ModelFamily::CppExponential, Some(crate::levy_model::JumpDist::Exponential { rate })) => rate,
            _ => {
                return Err(Error::UnsupportedModel {
                    operation: "lst_cpp_reflect",
                    reason: "needs a compound Poisson model with exponential jumps and no Gaussian part".into(),
                })
            }
        };
        let (p, lambda, q) = (model.drift(), model.jump_rate(), ev.q());
        let plus = ev.phi();
        // the roots of pθ² + (pμ − λ − q)θ − qμ = 0 multiply to −qμ/p
        let minus = -q * mu / (p * plus);
        debug_assert!((p * plus * plus + (p * mu - lambda - q) * plus - q * mu).abs() < 1e-8);
        Ok(CppRoots { p, mu, q, plus, minus })
    }

    fn a_minus(&self) -> f64 {
        (self.mu + self.minus) / (self.plus - self.minus)
    }

    /// `H(θ, u)` in strict form, for `u` given by its transform.
    fn h<U: Fn(f64) -> f64>(&self, theta: f64, u: U) -> f64 {
        let (qp, qm) = (self.plus, self.minus);
        self.q / self.p
            * self.a_minus()
            * (u(qp) * (qp - qm) / ((theta - qp) * (theta - qm)) - u(theta) * 2.0 * qp / (theta * theta - qp * qp)
                + u(theta + qp - qm) * 2.0 * qm / (theta * theta - qm * qm))
    }

    /// `G(q)` in strict form.
    fn g(&self, beta: f64) -> f64 {
        let (qp, qm) = (self.plus, self.minus);
        beta * self.q / (self.p * (beta - qm)) * (qm - qp) / (qm * qp)
    }
}

/// `π(0)` from the strict-mode reflect-around-`B` formula.
pub fn strict_pi_zero(ev: &ScaleFunction, beta: f64) -> Result<f64> {
    let r = CppRoots::new(ev)?;
    let eps = |t: f64| beta / (beta + t);
    let g = r.g(beta);
    Ok((g * beta / (beta + r.plus) + r.h(0.0, eps) - r.h(beta, eps)) / (1.0 - g))
}

/// The strict-mode `H(θ, ε_β)`, exposed for comparison with the resolvent
/// integral it stands for.
pub fn strict_h_exponential(ev: &ScaleFunction, theta: f64, beta: f64) -> Result<f64> {
    Ok(CppRoots::new(ev)?.h(theta, |t| beta / (beta + t)))
}

/// `E[e^{−sV(∞)}]` for `F(y) = (B − y)⁺`, `B ~ Exp(β)`, on the compound
/// Poisson model with exponential jumps.
///
/// The default assembles the resolvent term, the `W′`/`W` term and the
/// atom term with the normalized fixed-point `π`. With `strict` the
/// strict-mode `H`, `G`, `π(0)` and unnormalized `π̃` are used instead.
pub fn lst_cpp_reflect(law: &TransitionLaw, beta: f64, s: f64, strict: bool) -> Result<f64> {
    let ev = law.evaluator();
    let r = CppRoots::new(ev)?;
    let (q, phi) = (r.q, r.plus);
    let w0 = ev.w0();
    let ratio = ev.psi_ratio_real(s); // (s − Φ)/(ψ(s) − q)
    if strict {
        let pi0 = strict_pi_zero(ev, beta)?;
        let pt = |t: f64| pi0 + beta / (beta + t);
        return Ok(r.h(s, pt) + q * pt(phi) * ratio / phi + w0 * pt(phi));
    }
    let pi0 = pi_zero_fixed_point(law, beta)?.pi_zero;
    let pt = |t: f64| pi0 + (1.0 - pi0) * beta / (beta + t);
    // q∫π(dx)∫e^{−sy}r(x,y)dy = q(π̃(Φ) − π̃(s))/(ψ(s) − q)
    let resolvent = if (s - phi).abs() < 1e-6 {
        // π̃(Φ) − π̃(s) ≈ −π̃′(Φ)(s − Φ)
        let d = (1.0 - pi0) * beta / (beta + phi).powi(2);
        q * d * ratio
    } else {
        q * (pt(phi) - pt(s)) / (ev.model().psi(s)? - q)
    };
    let density = pt(phi) * (q * ratio / phi - q / phi * w0);
    let atom = q / phi * w0 * pt(phi);
    Ok(resolvent + density + atom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedded_chain::{simulate_chain, ChainOptions, FunctionalSpec, Provenance};
    use crate::fluctuation::transition;
    use crate::levy_model::{LevyModel, LevyModelSpec};

    fn cpp() -> ScaleFunction {
        ScaleFunction::new(&LevyModel::new(LevyModelSpec::cpp_exponential(2.0, 1.0, 1.0)).unwrap(), 1.0).unwrap()
    }

    fn bm() -> ScaleFunction {
        ScaleFunction::new(&LevyModel::new(LevyModelSpec::brownian(1.0, 1.0)).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn constant_level_limits() {
        for ev in [cpp(), bm()] {
            let sup = crate::fluctuation::sup_law(&ev).unwrap();
            for level in [LevelDist::Deterministic { value: 2.0 }, LevelDist::Exponential { rate: 1.0 }] {
                assert!((lst_constant_level(&ev, &level, 0.0).unwrap() - 1.0).abs() < 1e-12);
                let phi = ev.phi();
                let at = lst_constant_level(&ev, &level, phi).unwrap();
                let near = lst_constant_level(&ev, &level, phi + 1e-4).unwrap();
                assert!((at - near).abs() < 1e-4);
            }
            let zero = LevelDist::Deterministic { value: 0.0 };
            for s in [0.1, 0.7, 3.0] {
                assert!((lst_constant_level(&ev, &zero, s).unwrap() - sup.lst(s)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn steady_functional_total_mass_and_clearing() {
        let ev = cpp();
        let law = transition(&ev, false).unwrap();
        let delta0 = StationaryDistribution::point_mass(0.0, Provenance::Exact);
        assert!((steady_functional(&law, &delta0, |_| 1.0).unwrap() - 1.0).abs() < 1e-6);
        let sup = law.sup_law();
        for s in [0.3, 1.0, 4.0] {
            let v = steady_functional(&law, &delta0, |y| (-s * y).exp()).unwrap();
            assert!((v - sup.lst(s)).abs() < 1e-8);
        }
        let level = StationaryDistribution::level_law(&LevelDist::Exponential { rate: 1.0 });
        let v = steady_functional(&law, &level, |_| 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-6);
        // the strict atom loses mass
        let strict = transition(&ev, true).unwrap();
        let v = steady_functional(&strict, &level, |_| 1.0).unwrap();
        assert!((v - 1.0).abs() > 1e-3);
    }

    #[test]
    fn reflect_paths_agree() {
        let ev = cpp();
        let law = transition(&ev, false).unwrap();
        let fp = pi_zero_fixed_point(&law, 1.0).unwrap();
        assert!((lst_cpp_reflect(&law, 1.0, 0.0, false).unwrap() - 1.0).abs() < 1e-8);
        for s in [0.2, 1.0, ev.phi(), 3.0] {
            let direct = lst_cpp_reflect(&law, 1.0, s, false).unwrap();
            let quad = steady_functional(&law, &fp.pi, |y| (-s * y).exp()).unwrap();
            let key = steady_lst(&law, &fp.pi, s);
            assert!((direct - quad).abs() < 1e-6, "s={s}: {direct} {quad}");
            assert!((direct - key).abs() < 1e-10);
        }
        let bm_law = transition(&bm(), false).unwrap();
        assert!(matches!(lst_cpp_reflect(&bm_law, 1.0, 1.0, false), Err(Error::UnsupportedModel { .. })));
    }

    #[test]
    fn strict_reflect_formulas_differ() {
        let ev = cpp();
        let law = transition(&ev, false).unwrap();
        let fp = pi_zero_fixed_point(&law, 1.0).unwrap();
        let strict = strict_pi_zero(&ev, 1.0).unwrap();
        assert!((strict - fp.pi_zero).abs() > 1e-3, "{strict} vs {}", fp.pi_zero);
        let v = lst_cpp_reflect(&law, 1.0, 0.0, true).unwrap();
        assert!((v - 1.0).abs() > 1e-3);
    }

    #[test]
    fn proportional_equation_and_truncation() {
        let ev = bm();
        assert!((lst_proportional(&ev, 0.5, 0.0).unwrap().value - 1.0).abs() < 1e-14);
        let mut prev = 1.0;
        for s in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let r = lst_proportional(&ev, 0.5, s).unwrap();
            assert!(r.value > 0.0 && r.value < prev);
            prev = r.value;
            assert!(proportional_equation_residual(&ev, 0.5, s).unwrap() < 1e-9);
            let doubled = lst_proportional_depth(&ev, 0.5, s, 2 * r.depth).unwrap();
            assert!((doubled.value - r.value).abs() < 1e-10);
        }
        assert!(matches!(lst_proportional(&ev, 0.5, ev.phi()), Err(Error::Pole { index: 0, .. })));
        assert!(matches!(lst_proportional(&ev, 0.5, ev.phi() / 0.25), Err(Error::Pole { index: 2, .. })));
    }

    #[test]
    fn key_equation_clearing_mc() {
        let ev = cpp();
        let opts = ChainOptions {
            draws: 200_000,
            burnin: 100,
            seed: 11,
            shards: 4,
        };
        let samples = simulate_chain(&ev, &FunctionalSpec::Clearing, &opts).unwrap();
        for s in [0.3, 1.0, 3.0] {
            let r = key_equation_residual(&ev, &samples, s).unwrap();
            assert!(r.residual.abs() < 4.0 * r.se, "{r:?}");
        }
    }
}
