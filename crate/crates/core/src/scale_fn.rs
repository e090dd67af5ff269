//! The q-scale function `W(q)` with `∫ e^{−θy} W(y) dy = 1/(ψ(θ) − q)` for
//! `θ > Φ(q)`, its derivative, and `Z(x) = 1 + q∫_0^x W`.
//!
//! When `ψ(θ) = q` has finitely many roots `r_i` and `1/(ψ − q)` is rational,
//! `W(x) = Σ e^{r_i x}/ψ′(r_i)`. That covers the Brownian and the
//! compound-Poisson-exponential models. Everything else goes through
//! numerical inversion of the tilted transform `1/(ψ(s + Φ) − q)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::levy_model::{LevyModel, ModelFamily};
use crate::numerics::inversion::{InversionScheme, TALBOT_NODES};
use crate::numerics::quad::integrate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMethod {
    ClosedFormBrownian,
    ClosedFormCppExp,
    NumericInversion,
}

/// `Σ a_i e^{r_i x}`; `lead` indexes the term with `r_i = Φ(q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSum {
    pub coef: Vec<f64>,
    pub rate: Vec<f64>,
    pub lead: usize,
}

impl ExpSum {
    fn from_roots(model: &LevyModel, roots: &[f64], lead: usize) -> Self {
        let coef = roots.iter().map(|&r| 1.0 / model.psi_prime_unchecked(r)).collect();
        ExpSum {
            coef,
            rate: roots.to_vec(),
            lead,
        }
    }

    pub fn phi(&self) -> f64 {
        self.rate[self.lead]
    }

    /// The non-lead terms as `(a_i, r_i)` pairs.
    pub fn others(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let lead = self.lead;
        self.coef
            .iter()
            .zip(&self.rate)
            .enumerate()
            .filter(move |(i, _)| *i != lead)
            .map(|(_, (&a, &r))| (a, r))
    }

    pub fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.coef.iter().copied().zip(self.rate.iter().copied())
    }

    /// `e^{−Φx} Σ a_i e^{r_i x}`, free of overflow for large `x`.
    fn tilted(&self, x: f64) -> f64 {
        let phi = self.phi();
        self.terms().map(|(a, r)| a * ((r - phi) * x).exp()).sum()
    }

    fn derivative(&self, x: f64) -> f64 {
        self.terms().map(|(a, r)| a * r * (r * x).exp()).sum()
    }

    /// `Σ a_i (e^{r_i x} − 1)/r_i`, accurate for small `x`.
    fn integral(&self, x: f64) -> f64 {
        self.terms()
            .map(|(a, r)| {
                let u = r * x;
                if u.abs() < 1e-8 {
                    a * x * (1.0 + 0.5 * u)
                } else {
                    a * u.exp_m1() / r
                }
            })
            .sum()
    }
}

/// Evaluator for `W(q)`, `W(q)′` and `Z(q)` bound to one `(model, q)` pair.
#[derive(Debug, Clone)]
pub struct ScaleFunction {
    model: LevyModel,
    q: f64,
    phi: f64,
    method: ScaleMethod,
    scheme: InversionScheme,
    exp_sum: Option<ExpSum>,
    w0: f64,
    psi1: f64,
    psi2: f64,
}

impl ScaleFunction {
    /// Picks the closed form when the model admits one.
    pub fn new(model: &LevyModel, q: f64) -> Result<Self> {
        let method = match model.family() {
            ModelFamily::Brownian => ScaleMethod::ClosedFormBrownian,
            ModelFamily::CppExponential => ScaleMethod::ClosedFormCppExp,
            ModelFamily::General => ScaleMethod::NumericInversion,
        };
        Self::with_method(model, q, method)
    }

    pub fn with_method(model: &LevyModel, q: f64, method: ScaleMethod) -> Result<Self> {
        let phi = model.phi(q)?;
        let s = model.spec();
        let exp_sum = match method {
            ScaleMethod::ClosedFormBrownian => {
                if model.family() != ModelFamily::Brownian {
                    return Err(Error::UnsupportedModel {
                        operation: "scale_fn",
                        reason: "closed_form_brownian needs sigma > 0 and no jumps".into(),
                    });
                }
                let s2 = s.sigma * s.sigma;
                let delta = (s.drift * s.drift + 2.0 * q * s2).sqrt() / s2;
                let omega = s.drift / s2;
                Some(ExpSum::from_roots(model, &[phi, -omega - delta], 0))
            }
            ScaleMethod::ClosedFormCppExp => {
                let mu = match (model.family(), model.jumps()) {
                    (ModelFamily::CppExponential, Some(crate::levy_model::JumpDist::Exponential { rate })) => rate,
                    _ => {
                        return Err(Error::UnsupportedModel {
                            operation: "scale_fn",
                            reason: "closed_form_cpp_exp needs sigma = 0 and exponential jumps".into(),
                        })
                    }
                };
                // pθ² + (pμ − λ − q)θ − qμ = 0; product of roots is −qμ/p
                let q_minus = -q * mu / (s.drift * phi);
                Some(ExpSum::from_roots(model, &[phi, q_minus], 0))
            }
            ScaleMethod::NumericInversion => None,
        };
        let scheme = match model.jumps() {
            Some(j) if !matches!(j, crate::levy_model::JumpDist::Exponential { .. }) => InversionScheme::Euler,
            _ => InversionScheme::Talbot { nodes: TALBOT_NODES },
        };
        let w0 = if s.sigma > 0.0 { 0.0 } else { 1.0 / s.drift };
        let psi1 = model.psi_prime_unchecked(phi);
        let h = 1e-4 * phi.max(1e-3);
        let psi2 = (model.psi_prime_unchecked(phi + h) - model.psi_prime_unchecked(phi - h)) / (2.0 * h);
        Ok(ScaleFunction {
            model: *model,
            q,
            phi,
            method,
            scheme,
            exp_sum,
            w0,
            psi1,
            psi2,
        })
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn method(&self) -> ScaleMethod {
        self.method
    }

    pub fn scheme(&self) -> InversionScheme {
        self.scheme
    }

    pub fn exp_sum(&self) -> Option<&ExpSum> {
        self.exp_sum.as_ref()
    }

    /// `W(0)`: `1/c` for bounded variation, 0 otherwise.
    pub fn w0(&self) -> f64 {
        self.w0
    }

    /// `ψ′(Φ(q))`.
    pub fn psi_prime_phi(&self) -> f64 {
        self.psi1
    }

    /// `(s − Φ)/(ψ(s) − q)`, with the removable point `s = Φ` replaced by
    /// its second-order expansion.
    pub fn psi_ratio(&self, s: Complex64) -> Complex64 {
        let d = s - self.phi;
        if d.norm() < 1e-6 {
            1.0 / (self.psi1 + 0.5 * self.psi2 * d)
        } else {
            d / (self.model.psi_complex(s) - self.q)
        }
    }

    pub fn psi_ratio_real(&self, s: f64) -> f64 {
        let d = s - self.phi;
        if d.abs() < 1e-6 {
            1.0 / (self.psi1 + 0.5 * self.psi2 * d)
        } else {
            d / (self.model.psi_unchecked(s) - self.q)
        }
    }

    /// Inverts a transform with the evaluator's scheme; `t > 0`.
    pub fn invert<F: Fn(Complex64) -> Complex64>(&self, transform: F, t: f64) -> f64 {
        self.scheme.invert(transform, t)
    }

    pub fn w(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match &self.exp_sum {
            Some(e) if x == 0.0 => e.coef.iter().sum(),
            Some(e) => e.terms().map(|(a, r)| a * (r * x).exp()).sum(),
            None => (self.phi * x).exp() * self.w_tilted(x),
        }
    }

    /// `e^{−Φ(q)x} W(x)`, which tends to `1/ψ′(Φ(q))`.
    pub fn w_tilted(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if let Some(e) = &self.exp_sum {
            return e.tilted(x);
        }
        if x == 0.0 {
            return self.w0;
        }
        let (m, q, phi) = (self.model, self.q, self.phi);
        self.invert(|s| 1.0 / (m.psi_complex(s + phi) - q), x)
    }

    pub fn w_prime(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(domain("w_prime", x, "x > 0"));
        }
        if let Some(e) = &self.exp_sum {
            return Ok(e.derivative(x));
        }
        let (m, q, phi, w0) = (self.model, self.q, self.phi, self.w0);
        let tilted = self.invert(|s| (s + phi) / (m.psi_complex(s + phi) - q) - w0, x);
        Ok((phi * x).exp() * tilted)
    }

    pub fn z(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if let Some(e) = &self.exp_sum {
            return 1.0 + self.q * e.integral(x);
        }
        let (m, q, phi) = (self.model, self.q, self.phi);
        let tilted = self.invert(
            |s| {
                let t = s + phi;
                let p = m.psi_complex(t);
                p / (t * (p - q))
            },
            x,
        );
        (phi * x).exp() * tilted
    }

    /// `1/(ψ(θ) − q)`.
    pub fn transform(&self, theta: f64) -> f64 {
        1.0 / (self.model.psi_unchecked(theta) - self.q)
    }

    /// Relative residual of the defining transform identity at `θ`, with the
    /// integral computed by quadrature of `W` and an analytic tail beyond the
    /// cutoff from `W(y) ≈ e^{Φy}/ψ′(Φ)`.
    pub fn laplace_residual(&self, theta: f64) -> Result<f64> {
        if !(theta > self.phi) {
            return Err(domain("laplace_residual", theta, "theta > Phi(q)"));
        }
        let gap = theta - self.phi;
        let cutoff = 36.0 / gap;
        let integrand = |y: f64| (-gap * y).exp() * self.w_tilted(y);
        // break at the cutoff of the exponential scale so the rule sees the decay
        let mut total = 0.0;
        let mut a = 0.0;
        let step = (1.0 / gap).min(cutoff);
        // inversion output carries ~1e-11 relative noise, below which the
        // adaptive rule would only chase roundoff
        let tol = if self.exp_sum.is_some() { 1e-15 } else { 1e-11 * step / self.psi_prime_phi() };
        while a < cutoff {
            let b = (a + step).min(cutoff);
            total += integrate(integrand, a, b, tol, 1e-12).value;
            a = b;
        }
        total += (-gap * cutoff).exp() / (gap * self.psi_prime_phi());
        let exact = self.transform(theta);
        Ok(((total - exact) / exact).abs())
    }
}
