//! Fluctuation identities at an independent exponential time `e_q`: the laws
//! of `X̄(e_q)` and `−X̲(e_q)`, the resolvent of `X` killed on leaving
//! `[0, ∞)`, the law of the reflected process at `e_q`, and its exact
//! sampler.
//!
//! Everything rests on the Wiener–Hopf split: `X̄(e_q)` and
//! `X̄(e_q) − X(e_q) ~ Exp(Φ(q))` are independent, and the reflected process
//! started from `z` equals `X̄ + (z − (X̄ − X))⁺` at `e_q`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::numerics::inversion::euler;
use crate::numerics::roots::bisect_monotone;
use crate::path_oracle::simulate_extremes;
use crate::scale_fn::ScaleFunction;

/// `−X̲(e_q) ~ Exp(Φ(q))`.
pub fn inf_law_rate(ev: &ScaleFunction) -> f64 {
    ev.phi()
}

fn require_regular(ev: &ScaleFunction, operation: &'static str) -> Result<()> {
    if ev.model().is_regular() {
        Ok(())
    } else {
        Err(Error::UnsupportedModel {
            operation,
            reason: "deterministic jumps without a Gaussian part: W is not C1 and the density identities fail".into(),
        })
    }
}

/// `(1 − e^{−u})/u` on the complex plane.
fn phi1(u: Complex64) -> Complex64 {
    if u.norm() < 1e-4 {
        1.0 - u * (0.5 - u / 6.0)
    } else {
        (1.0 - (-u).exp()) / u
    }
}

/// `E[e^{−s(z − E)⁺}]` for `E ~ Exp(φ)`, written as
/// `e^{−φz}(1 + φz·(1 − e^{−(s−φ)z})/((s−φ)z))` so that `s = φ` is harmless.
pub fn overshoot_lst(phi: f64, z: f64, s: f64) -> f64 {
    overshoot_lst_complex(phi, z, Complex64::new(s, 0.0)).re
}

pub fn overshoot_lst_complex(phi: f64, z: f64, s: Complex64) -> Complex64 {
    if z <= 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    (-phi * z).exp() * (1.0 + phi * z * phi1((s - phi) * z))
}

/// Law of `X̄(e_q)`: an atom `(q/Φ)W(0)` at zero plus a density.
#[derive(Debug, Clone)]
pub struct SupremumLaw {
    ev: ScaleFunction,
    atom: f64,
    // (weight, rate) pairs of the survival function when W is an exponential sum
    survival_terms: Option<Vec<(f64, f64)>>,
}

pub fn sup_law(ev: &ScaleFunction) -> Result<SupremumLaw> {
    require_regular(ev, "sup_law")?;
    Ok(SupremumLaw::new(ev))
}

impl SupremumLaw {
    fn new(ev: &ScaleFunction) -> Self {
        let (q, phi) = (ev.q(), ev.phi());
        // the Φ-term of (q/Φ)W(x) − Z(x) cancels exactly; keep only the rest
        let survival_terms = ev
            .exp_sum()
            .map(|e| e.others().map(|(a, r)| (q * a * (1.0 / r - 1.0 / phi), r)).collect());
        SupremumLaw {
            ev: ev.clone(),
            atom: q / phi * ev.w0(),
            survival_terms,
        }
    }

    pub fn evaluator(&self) -> &ScaleFunction {
        &self.ev
    }

    pub fn atom(&self) -> f64 {
        self.atom
    }

    /// `E[e^{−sX̄(e_q)}] = q(s − Φ)/(Φ(ψ(s) − q))`.
    pub fn lst(&self, s: f64) -> f64 {
        self.ev.q() / self.ev.phi() * self.ev.psi_ratio_real(s)
    }

    pub fn lst_complex(&self, s: Complex64) -> Complex64 {
        self.ev.q() / self.ev.phi() * self.ev.psi_ratio(s)
    }

    /// `(q/Φ)W′(y) − qW(y)`.
    pub fn density(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        match &self.survival_terms {
            Some(t) => t.iter().map(|&(w, r)| -w * r * (r * y).exp()).sum(),
            None => self.ev.invert(|s| self.lst_complex(s) - self.atom, y).max(0.0),
        }
    }

    /// `P(X̄(e_q) > x) = Z(x) − (q/Φ)W(x)`.
    pub fn survival(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match &self.survival_terms {
            Some(t) => t.iter().map(|&(w, r)| w * (r * x).exp()).sum(),
            None if x == 0.0 => 1.0 - self.atom,
            None => self
                .ev
                .invert(|s| (1.0 - self.lst_complex(s)) / s, x)
                .clamp(0.0, 1.0),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            1.0 - self.survival(x)
        }
    }

    /// `E[X̄(e_q)] = 1/Φ − ψ′(0+)/q`.
    pub fn mean(&self) -> f64 {
        1.0 / self.ev.phi() - self.ev.model().mean_slope() / self.ev.q()
    }

    /// Smallest `x` with `P(X̄ > x) ≤ u`, by bisection.
    pub fn survival_quantile(&self, u: f64) -> f64 {
        if u >= 1.0 - self.atom {
            return 0.0;
        }
        let mut hi = 1.0 / self.ev.phi();
        while self.survival(hi) > u {
            hi *= 2.0;
        }
        bisect_monotone(|x| -self.survival(x), -u, 0.0, hi, 1e-12 * hi)
    }
}

/// Resolvent density of `X` started at `x` and killed on leaving `[0, ∞)`:
/// `e^{−Φx}W(y) − W(y − x)`.
pub fn resolvent(ev: &ScaleFunction, x: f64, y: f64) -> f64 {
    if y < 0.0 || x < 0.0 {
        return 0.0;
    }
    let phi = ev.phi();
    match ev.exp_sum() {
        Some(e) if y >= x => e
            .others()
            .map(|(a, r)| a * (r * (y - x)).exp() * ((r - phi) * x).exp_m1())
            .sum(),
        Some(e) => e.terms().map(|(a, r)| a * (r * y - phi * x).exp()).sum(),
        None if y >= x => (phi * (y - x)).exp() * (ev.w_tilted(y) - ev.w_tilted(y - x)),
        None => (phi * (y - x)).exp() * ev.w_tilted(y),
    }
}

/// Law of the reflected process at `e_q` from level `x`: atom at zero plus
/// the density `h(x, y) = q r(x, y) + e^{−Φx}[(q/Φ)W′(y) − qW(y)]`.
///
/// The atom is `(q/Φ)W(0)e^{−Φx}`. With `strict_paper` set it is
/// `W(0)e^{−Φx}` instead and total mass is no longer one when `W(0) > 0`.
#[derive(Debug, Clone)]
pub struct TransitionLaw {
    sup: SupremumLaw,
    strict_paper: bool,
}

pub fn transition(ev: &ScaleFunction, strict_paper: bool) -> Result<TransitionLaw> {
    require_regular(ev, "transition")?;
    Ok(TransitionLaw {
        sup: SupremumLaw::new(ev),
        strict_paper,
    })
}

impl TransitionLaw {
    pub fn evaluator(&self) -> &ScaleFunction {
        &self.sup.ev
    }

    pub fn sup_law(&self) -> &SupremumLaw {
        &self.sup
    }

    pub fn strict_paper(&self) -> bool {
        self.strict_paper
    }

    fn true_atom(&self, x: f64) -> f64 {
        self.sup.atom * (-self.sup.ev.phi() * x.max(0.0)).exp()
    }

    pub fn atom(&self, x: f64) -> f64 {
        if self.strict_paper {
            self.sup.ev.w0() * (-self.sup.ev.phi() * x.max(0.0)).exp()
        } else {
            self.true_atom(x)
        }
    }

    /// `E_x[e^{−sY(e_q)}] = E[e^{−sX̄(e_q)}]·E[e^{−s(x − E)⁺}]`.
    pub fn lst(&self, x: f64, s: f64) -> f64 {
        self.sup.lst(s) * overshoot_lst(self.sup.ev.phi(), x, s)
    }

    fn lst_complex(&self, x: f64, s: Complex64) -> Complex64 {
        self.sup.lst_complex(s) * overshoot_lst_complex(self.sup.ev.phi(), x, s)
    }

    pub fn density(&self, x: f64, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let ev = &self.sup.ev;
        if ev.exp_sum().is_some() {
            return ev.q() * resolvent(ev, x, y) + (-ev.phi() * x).exp() * self.sup.density(y);
        }
        // e^{−sx} in the transform rules out the Talbot contour
        let atom = self.true_atom(x);
        euler(|s| self.lst_complex(x, s) - atom, y).max(0.0)
    }

    /// `P_x(Y(e_q) > y)`; for `y ≥ x` this is `Z(y − x) − e^{−Φx}(q/Φ)W(y)`.
    pub fn survival(&self, x: f64, y: f64) -> f64 {
        let shift = self.true_atom(x) - self.atom(x);
        if y < 0.0 {
            return 1.0 + shift;
        }
        let ev = &self.sup.ev;
        let (q, phi) = (ev.q(), ev.phi());
        let exact = match ev.exp_sum() {
            Some(e) if y >= x => e
                .others()
                .map(|(a, r)| q * a * ((r * (y - x)).exp() / r - (r * y - phi * x).exp() / phi))
                .sum(),
            Some(_) => 1.0 - (-phi * x).exp() * q / phi * ev.w(y),
            None if y == 0.0 => 1.0 - self.true_atom(x),
            None => euler(|s| (1.0 - self.lst_complex(x, s)) / s, y).clamp(0.0, 1.0),
        };
        exact + shift
    }

    pub fn cdf(&self, x: f64, y: f64) -> f64 {
        1.0 - self.survival(x, y)
    }

    /// Smallest `y` with `P_x(Y > y) ≤ u`.
    pub fn survival_quantile(&self, x: f64, u: f64) -> f64 {
        if u >= self.survival(x, 0.0) {
            return 0.0;
        }
        let mut hi = x + 1.0 / self.sup.ev.phi();
        while self.survival(x, hi) > u {
            hi *= 2.0;
        }
        bisect_monotone(|y| -self.survival(x, y), -u, 0.0, hi, 1e-12 * hi)
    }
}

#[derive(Debug, Clone)]
enum SupSampler {
    /// atom plus a single exponential
    Exponential { atom: f64, rate: f64 },
    Inverse(SupremumLaw),
    Path,
}

/// Exact draws of `Y(e_q)` given `Y(0) = z`, as `S + (z − E)⁺` with
/// `S ~ X̄(e_q)` and `E ~ Exp(Φ(q))` independent.
#[derive(Debug, Clone)]
pub struct StepSampler {
    ev: ScaleFunction,
    sup: SupSampler,
    gap: Exp<f64>,
}

impl StepSampler {
    /// `S` is drawn from the closed-form law when `W` is an exponential sum
    /// and from an exact path simulation otherwise.
    pub fn new(ev: &ScaleFunction) -> Self {
        let sup = match ev.exp_sum() {
            Some(e) if e.rate.len() == 2 => {
                let law = SupremumLaw::new(ev);
                let (_, r) = e.others().next().expect("two terms");
                SupSampler::Exponential {
                    atom: law.atom(),
                    rate: -r,
                }
            }
            Some(_) => SupSampler::Inverse(SupremumLaw::new(ev)),
            None => SupSampler::Path,
        };
        StepSampler {
            ev: ev.clone(),
            sup,
            gap: Exp::new(ev.phi()).expect("phi > 0"),
        }
    }

    pub fn evaluator(&self) -> &ScaleFunction {
        &self.ev
    }

    pub fn sample_sup<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.sup {
            SupSampler::Exponential { atom, rate } => {
                let u: f64 = rng.random();
                if u < *atom {
                    0.0
                } else {
                    // conditional on S > 0 the law is Exp(rate); reuse u
                    -((1.0 - u) / (1.0 - atom)).ln() / rate
                }
            }
            SupSampler::Inverse(law) => {
                let u: f64 = 1.0 - rng.random::<f64>();
                law.survival_quantile(u)
            }
            SupSampler::Path => simulate_extremes(self.ev.model(), self.ev.q(), rng).sup,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, z: f64, rng: &mut R) -> f64 {
        let s = self.sample_sup(rng);
        let e = self.gap.sample(rng);
        s + (z - e).max(0.0)
    }
}

/// One draw of `Y(e_q)` from `Y(0) = z`. Builds the sampler on each call;
/// hold a [`StepSampler`] for repeated draws.
pub fn step_sample<R: Rng + ?Sized>(ev: &ScaleFunction, z: f64, rng: &mut R) -> f64 {
    StepSampler::new(ev).sample(z, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::{JumpDist, LevyModel, LevyModelSpec};
    use crate::numerics::quad::{integrate, integrate_to_inf};
    use crate::scale_fn::ScaleMethod;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bm() -> ScaleFunction {
        ScaleFunction::new(&LevyModel::new(LevyModelSpec::brownian(1.0, 1.0)).unwrap(), 1.0).unwrap()
    }

    fn cpp() -> ScaleFunction {
        ScaleFunction::new(&LevyModel::new(LevyModelSpec::cpp_exponential(2.0, 1.0, 1.0)).unwrap(), 1.0).unwrap()
    }

    fn numeric(ev: &ScaleFunction) -> ScaleFunction {
        ScaleFunction::with_method(ev.model(), ev.q(), ScaleMethod::NumericInversion).unwrap()
    }

    fn total_mass(law: &TransitionLaw, x: f64) -> f64 {
        let phi = law.evaluator().phi();
        let body = integrate(|y| law.density(x, y), 0.0, x.max(1e-12), 1e-13, 1e-12).value;
        let tail = integrate_to_inf(|y| law.density(x, y), x, 1.0 / phi, 1e-13, 1e-12).value;
        body + tail + law.atom(x)
    }

    #[test]
    fn inf_rate_is_phi() {
        assert!((inf_law_rate(&bm()) - (3f64.sqrt() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn sup_law_atoms() {
        assert_eq!(sup_law(&bm()).unwrap().atom(), 0.0);
        let c = cpp();
        let law = sup_law(&c).unwrap();
        assert!((law.atom() - 1.0 / c.phi() * 0.5).abs() < 1e-15);
        // q/Φ(q) → p as q grows, so the atom tends to one
        let big = ScaleFunction::new(c.model(), 1e6).unwrap();
        assert!((sup_law(&big).unwrap().atom() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn sup_law_total_mass_and_cdf() {
        for ev in [bm(), cpp()] {
            let law = sup_law(&ev).unwrap();
            let mass = integrate_to_inf(|y| law.density(y), 0.0, 1.0 / ev.phi(), 1e-14, 1e-13).value;
            assert!((mass + law.atom() - 1.0).abs() < 1e-8);
            // cdf written with the raw scale functions
            for &x in &[0.0, 0.4, 2.0, 6.0] {
                let raw = 1.0 + ev.q() / ev.phi() * ev.w(x) - ev.z(x);
                assert!((law.cdf(x) - raw).abs() < 1e-10, "x={x}");
            }
            let mut prev = 0.0;
            for k in 1..200 {
                let x = 0.05 * k as f64;
                assert!(law.cdf(x) >= prev);
                prev = law.cdf(x);
                let fd = (law.cdf(x + 1e-5) - law.cdf(x - 1e-5)) / 2e-5;
                assert!((fd - law.density(x)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn density_from_scale_functions() {
        for ev in [bm(), cpp()] {
            let law = sup_law(&ev).unwrap();
            for &y in &[0.1, 1.0, 5.0] {
                let raw = ev.q() / ev.phi() * ev.w_prime(y).unwrap() - ev.q() * ev.w(y);
                assert!((law.density(y) - raw).abs() < 1e-10);
                assert!(law.density(y) >= 0.0);
            }
        }
    }

    #[test]
    fn sup_law_lst_matches_quadrature() {
        for ev in [bm(), cpp()] {
            let law = sup_law(&ev).unwrap();
            for &s in &[0.3, ev.phi(), 2.0] {
                let q = integrate_to_inf(|y| (-s * y).exp() * law.density(y), 0.0, 1.0, 1e-14, 1e-13).value;
                assert!((law.lst(s) - q - law.atom()).abs() < 1e-10, "s={s}");
            }
        }
    }

    #[test]
    fn resolvent_examples() {
        for ev in [bm(), cpp()] {
            for &y in &[0.1, 1.0, 3.0] {
                assert!(resolvent(&ev, 0.0, y).abs() < 1e-15);
            }
            for &x in &[0.5, 1.0, 3.0] {
                let raw = |y: f64| (-ev.phi() * x).exp() * ev.w(y) - ev.w(y - x);
                for &y in &[0.2, x, 2.0, 7.0] {
                    assert!((resolvent(&ev, x, y) - raw(y)).abs() < 1e-10);
                }
                let phi = ev.phi();
                let mass = integrate(|y| resolvent(&ev, x, y), 0.0, x, 1e-14, 1e-13).value
                    + integrate_to_inf(|y| resolvent(&ev, x, y), x, 1.0 / phi, 1e-14, 1e-13).value;
                assert!((ev.q() * mass - (1.0 - (-phi * x).exp())).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn transition_normalization() {
        for ev in [bm(), cpp()] {
            let law = transition(&ev, false).unwrap();
            for &x in &[0.0, 0.5, 1.0, 2.0, 5.0] {
                assert!((total_mass(&law, x) - 1.0).abs() < 1e-6, "x={x}");
            }
        }
        let strict = transition(&cpp(), true).unwrap();
        assert!((total_mass(&strict, 1.0) - 1.0).abs() > 1e-3);
    }

    #[test]
    fn transition_from_zero_is_sup_law() {
        for ev in [bm(), cpp()] {
            let law = transition(&ev, false).unwrap();
            let sup = sup_law(&ev).unwrap();
            assert!((law.atom(0.0) - sup.atom()).abs() < 1e-15);
            for &y in &[0.1, 1.0, 4.0] {
                assert!((law.density(0.0, y) - sup.density(y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transition_survival_consistent() {
        for ev in [bm(), cpp()] {
            let law = transition(&ev, false).unwrap();
            for &x in &[0.0, 0.7, 2.0] {
                for &y in &[0.0, 0.3, 0.7, 1.5, 4.0] {
                    let raw = ev.z(y - x) - (-ev.phi() * x).exp() * ev.q() / ev.phi() * ev.w(y);
                    assert!((law.survival(x, y) - raw).abs() < 1e-10, "x={x} y={y}");
                    // split at the kink y = x
                    let from = y.max(x);
                    let mut tail = integrate_to_inf(|t| law.density(x, t), from, 1.0, 1e-14, 1e-12).value;
                    if y < x {
                        tail += integrate(|t| law.density(x, t), y, x, 1e-14, 1e-12).value;
                    }
                    assert!((law.survival(x, y) - tail).abs() < 1e-8, "x={x} y={y}");
                }
            }
        }
    }

    #[test]
    fn transition_lst_matches_density() {
        let ev = cpp();
        let law = transition(&ev, false).unwrap();
        for &x in &[0.5, 2.0] {
            for &s in &[0.2, ev.phi(), 1.5] {
                let body = integrate(|y| (-s * y).exp() * law.density(x, y), 0.0, x, 1e-14, 1e-13).value
                    + integrate_to_inf(|y| (-s * y).exp() * law.density(x, y), x, 1.0, 1e-14, 1e-13).value;
                assert!((body + law.atom(x) - law.lst(x, s)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn numeric_path_agrees() {
        for ev in [bm(), cpp()] {
            let num = numeric(&ev);
            let (a, b) = (sup_law(&ev).unwrap(), sup_law(&num).unwrap());
            let (ta, tb) = (transition(&ev, false).unwrap(), transition(&num, false).unwrap());
            for &x in &[0.1, 1.0, 4.0, 12.0] {
                assert!((a.survival(x) - b.survival(x)).abs() < 1e-8, "survival x={x}");
                assert!((a.density(x) - b.density(x)).abs() < 1e-8, "density x={x}");
                for &z in &[0.5, 2.0] {
                    assert!((ta.survival(z, x) - tb.survival(z, x)).abs() < 1e-7, "T z={z} x={x}");
                    if (x - z).abs() > 0.2 {
                        assert!((ta.density(z, x) - tb.density(z, x)).abs() < 1e-7, "h z={z} x={x}");
                    }
                }
            }
        }
    }

    #[test]
    fn overshoot_transform() {
        let phi = 0.7;
        for &z in &[0.0f64, 0.3, 2.0] {
            for &s in &[0.0, 0.5, phi, 3.0] {
                // direct expectation over E ~ Exp(φ)
                let direct = integrate(|e| phi * (-phi * e).exp() * (-s * (z - e)).exp(), 0.0, z.max(1e-300), 1e-15, 1e-14).value
                    + (-phi * z).exp();
                assert!((overshoot_lst(phi, z, s) - direct).abs() < 1e-12, "z={z} s={s}");
            }
        }
    }

    #[test]
    fn sampler_large_start() {
        let ev = cpp();
        let sampler = StepSampler::new(&ev);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = 50.0 / ev.phi();
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| sampler.sample(z, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = z - 1.0 / ev.phi() + sup_law(&ev).unwrap().mean();
        assert!((mean - target).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn sup_mean_formula() {
        for ev in [bm(), cpp()] {
            let law = sup_law(&ev).unwrap();
            let m = integrate_to_inf(|x| law.survival(x), 0.0, 1.0, 1e-14, 1e-13).value;
            assert!((m - law.mean()).abs() < 1e-10);
        }
    }

    #[test]
    fn path_sampler_matches_sup_law() {
        // the path oracle against the closed-form survival, exact in law
        let ev = cpp();
        let law = sup_law(&ev).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut sups: Vec<f64> = (0..n).map(|_| simulate_extremes(ev.model(), 1.0, &mut rng).sup).collect();
        sups.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = crate::stats::ks_statistic(&sups, |x| law.cdf(x), |x| if x <= 0.0 { 0.0 } else { law.cdf(x) });
        assert!(ks < 1.63 / (n as f64).sqrt(), "ks={ks}");
    }

    #[test]
    fn irregular_model_rejected() {
        let m = LevyModel::new(LevyModelSpec::with_jumps(0.0, 2.0, 1.0, JumpDist::Deterministic { size: 1.0 })).unwrap();
        let ev = ScaleFunction::new(&m, 1.0).unwrap();
        assert!(matches!(sup_law(&ev), Err(Error::UnsupportedModel { .. })));
        assert!(transition(&ev, false).is_err());
        // sampling stays available through the path oracle
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(step_sample(&ev, 1.0, &mut rng) >= 0.0);
    }
}
