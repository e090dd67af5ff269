//! Tail of the stationary pre-adjustment workload `U`.
//!
//! In law `U = S + (Z − I)⁺` with `S ~ X̄(e_q)`, `I ~ Exp(Φ)` (the depth of
//! `−X̲(e_q)`) and `Z = F(U′) ~ π`, all independent. Light-tailed jumps
//! give an exponential tail at the adjustment coefficient `γ`, the positive
//! root of `ψ(−γ) = q`; convolution-equivalent jumps give a multiple of
//! `Π̄`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::embedded_chain::ChainSamples;
use crate::error::{Error, Result};
use crate::fluctuation::{sup_law, StepSampler};
use crate::levy_model::{JumpDist, LevyModel};
use crate::numerics::linspace;
use crate::scale_fn::ScaleFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    Cramer { rate: f64 },
    ConvolutionEquivalent { alpha: f64 },
}

/// Ingredients of an asymptote, kept for the run metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailInputs {
    pub phi: f64,
    pub kappa_q0: f64,
    pub m_q: f64,
    /// `E[e^{γ(Z − I)⁺}]` (Cramér) or `E[e^{α(Z − I)⁺}]`
    pub expectation: f64,
    pub expectation_se: f64,
    /// the strict-mode Cramér constant `P(I > Z)κ(q,0)/(Φ m)` with
    /// `m = ψ′(Φ)/(2Φ)`, for comparison
    pub strict_constant: Option<f64>,
    pub psi_alpha: Option<f64>,
}

/// `P(U > x) ~ C e^{−γx}` or `P(U > x) ~ C Π̄(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailAsymptote {
    pub regime: Regime,
    pub constant: f64,
    pub inputs: TailInputs,
}

impl TailAsymptote {
    /// The predicted survival at `x`; `levy_tail` is `Π̄`.
    pub fn predict(&self, model: &LevyModel, x: f64) -> f64 {
        match self.regime {
            Regime::Cramer { rate } => self.constant * (-rate * x).exp(),
            Regime::ConvolutionEquivalent { .. } => self.constant * model.levy_tail(x).unwrap_or(0.0),
        }
    }
}

/// `κ(q, β) = (q − ψ(β))/(Φ(q) − β)`, the upward ladder exponent through
/// the Wiener–Hopf factorization; `β` may be negative while `ψ(β)` is
/// finite.
pub fn kappa(model: &LevyModel, q: f64, beta: f64) -> Result<f64> {
    let phi = model.phi(q)?;
    let psi = model.psi_unchecked(beta);
    if !psi.is_finite() {
        return Err(crate::error::domain("kappa", beta, "beta with finite psi"));
    }
    Ok((q - psi) / (phi - beta))
}

/// The positive root of `ψ(−γ) = q`.
pub fn adjustment_coefficient(model: &LevyModel, q: f64) -> Result<f64> {
    let above = |g: f64| model.cumulant(g).is_none_or(|v| v >= q);
    let mut hi = 1.0;
    while !above(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::HeavyTail("no root of psi(-gamma) = q".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    // a root needs ψ(−γ) to reach q, not just the edge of the mgf domain
    match model.cumulant(lo) {
        Some(v) if lo > 0.0 && (v - q).abs() <= 1e-6 * q.max(1.0) => Ok(lo),
        _ => Err(Error::HeavyTail(format!(
            "jump law has no exponential moment reaching psi(-gamma) = q (stopped at gamma = {lo:.3e})"
        ))),
    }
}

/// `m = κ′(q, −γ) = −ψ′(−γ)/(Φ + γ)`.
pub fn m_q(model: &LevyModel, q: f64, gamma: f64) -> Result<f64> {
    let phi = model.phi(q)?;
    Ok(-model.psi_prime_unchecked(-gamma) / (phi + gamma))
}

/// `ψ′(Φ)/(2Φ)`: the derivative of `β ↦ (q − ψ(−β))/(Φ − β)` at
/// `β = −Φ`, which is the strict-mode choice of `m`.
pub fn m_q_strict(model: &LevyModel, q: f64) -> Result<f64> {
    let phi = model.phi(q)?;
    Ok(model.psi_prime_unchecked(phi) / (2.0 * phi))
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    crate::stats::batch_means(v, crate::stats::BATCHES)
}

// E[e^{a(z − I)⁺}] for I ~ Exp(Φ); finite for every a once z is fixed
fn tilted_overshoot(phi: f64, a: f64, z: f64) -> f64 {
    let head = (-phi * z).exp();
    head + phi / (phi + a) * ((a * z).exp() - head)
}

/// Cramér asymptote `P(U > x) ~ C e^{−γx}` with
/// `C = κ(q,0)/(γ m)·E[e^{γ(Z − I)⁺}]`.
pub fn cramer_asymptote(ev: &ScaleFunction, samples: &ChainSamples) -> Result<TailAsymptote> {
    let model = ev.model();
    if let Some(JumpDist::Deterministic { .. }) = model.jumps() {
        return Err(Error::UnsupportedModel {
            operation: "cramer_asymptote",
            reason: "lattice jump law".into(),
        });
    }
    let q = ev.q();
    let phi = ev.phi();
    let gamma = adjustment_coefficient(model, q)?;
    let m = m_q(model, q, gamma)?;
    let kappa0 = q / phi;
    let vals: Vec<f64> = samples.z.iter().map(|&z| tilted_overshoot(phi, gamma, z)).collect();
    let (e, se) = mean_se(&vals);
    let half = mean_se(&vals[..vals.len() / 2]).0;
    if !e.is_finite() || (half - e).abs() > 0.1 * e {
        return Err(Error::HeavyTail(format!(
            "E[exp(gamma (Z - I)+)] does not stabilize ({half:.4e} on half the samples, {e:.4e} on all)"
        )));
    }
    let p_above = samples.z.iter().map(|&z| (-phi * z).exp()).sum::<f64>() / samples.z.len() as f64;
    let strict = p_above * kappa0 / (phi * m_q_strict(model, q)?);
    Ok(TailAsymptote {
        regime: Regime::Cramer { rate: gamma },
        constant: kappa0 / (gamma * m) * e,
        inputs: TailInputs {
            phi,
            kappa_q0: kappa0,
            m_q: m,
            expectation: e,
            expectation_se: se,
            strict_constant: Some(strict),
            psi_alpha: None,
        },
    })
}

/// Convolution-equivalent asymptote `P(U > x) ~ K Π̄(x)` for `Π ∈ 𝒮^(α)`
/// (asserted by the caller) and `P(F(y) > x) ~ cΠ̄(x)`:
/// `K = c·q/(q − ψ(−α)) + q(Φ + α)/(Φ(q − ψ(−α))²)·E[e^{α(Z − I)⁺}]`,
/// which is `c + 1/q` at `α = 0`.
pub fn convolution_equiv_asymptote(ev: &ScaleFunction, alpha: f64, c: f64, samples: &ChainSamples) -> Result<TailAsymptote> {
    let model = ev.model();
    let q = ev.q();
    let phi = ev.phi();
    if !(alpha >= 0.0) || !(c >= 0.0) {
        return Err(Error::Precondition(format!("need alpha >= 0 and c >= 0 (got {alpha}, {c})")));
    }
    let psi_a = model.cumulant(alpha).unwrap_or(f64::INFINITY);
    if !(psi_a < q) {
        return Err(Error::Precondition(format!(
            "E[exp(alpha X(1))] = exp({psi_a}) must be below exp(q) = exp({q})"
        )));
    }
    let (e, se) = if alpha == 0.0 {
        (1.0, 0.0)
    } else {
        let vals: Vec<f64> = samples.z.iter().map(|&z| tilted_overshoot(phi, alpha, z)).collect();
        mean_se(&vals)
    };
    let gap = q - psi_a;
    let constant = c * q / gap + q * (phi + alpha) / (phi * gap * gap) * e;
    Ok(TailAsymptote {
        regime: Regime::ConvolutionEquivalent { alpha },
        constant,
        inputs: TailInputs {
            phi,
            kappa_q0: q / phi,
            m_q: f64::NAN,
            expectation: e,
            expectation_se: se,
            strict_constant: None,
            psi_alpha: Some(psi_a),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// slope of the log survival
    Light,
    /// survival divided by a reference tail
    Heavy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailPoint {
    pub x: f64,
    pub survival: f64,
    pub survival_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub window: (f64, f64),
    pub exceedances: usize,
    pub points: Vec<TailPoint>,
    /// fitted decay rate (light mode)
    pub rate: Option<f64>,
    pub rate_se: Option<f64>,
}

pub const DEFAULT_WINDOW: (f64, f64) = (0.99, 0.9999);
pub const MIN_EXCEEDANCES: usize = 500;
const FIT_POINTS: usize = 20;
const FIT_BATCHES: usize = 10;

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let i = ((sorted.len() as f64 * p).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[i]
}

// weighted least-squares slope
fn ls_slope(xs: &[f64], ys: &[f64], ws: &[f64]) -> f64 {
    let n: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / n;
    let my = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).zip(ws).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().zip(ws).map(|(x, w)| w * (x - mx).powi(2)).sum();
    sxy / sxx
}

// var(log p̂) ≈ (1 − p)/(np)
fn log_weight(p: f64) -> f64 {
    if p > 0.0 && p < 1.0 {
        p / (1.0 - p)
    } else {
        0.0
    }
}

fn survival_sorted(sorted: &[f64], x: f64) -> f64 {
    let above = sorted.len() - sorted.partition_point(|&v| v <= x);
    above as f64 / sorted.len() as f64
}

/// Empirical tail on a grid between the window quantiles. In light mode
/// the rate is the least-squares slope of `−log P̂(U > x)`, with a standard
/// error from refitting on contiguous batches.
pub fn empirical_tail_fit(samples: &[f64], window: (f64, f64), mode: FitMode) -> Result<TailFit> {
    let (lo, hi) = window;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(crate::error::domain("empirical_tail_fit", lo, "0 < lo < hi < 1"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (x_lo, x_hi) = (quantile(&sorted, lo), quantile(&sorted, hi));
    let exceedances = sorted.len() - sorted.partition_point(|&v| v <= x_lo);
    if exceedances < MIN_EXCEEDANCES {
        return Err(Error::TooFewExceedances {
            found: exceedances,
            needed: MIN_EXCEEDANCES,
        });
    }
    let xs = match mode {
        FitMode::Light => linspace(x_lo, x_hi, FIT_POINTS),
        FitMode::Heavy => crate::numerics::geomspace(x_lo.max(1e-12), x_hi, FIT_POINTS),
    };
    let n = sorted.len() as f64;
    let points: Vec<TailPoint> = xs
        .iter()
        .map(|&x| {
            let p = survival_sorted(&sorted, x);
            TailPoint {
                x,
                survival: p,
                survival_se: (p * (1.0 - p) / n).sqrt(),
            }
        })
        .collect();
    let (rate, rate_se) = match mode {
        FitMode::Heavy => (None, None),
        FitMode::Light => {
            let logs: Vec<f64> = points.iter().map(|p| p.survival.ln()).collect();
            let ws: Vec<f64> = points.iter().map(|p| log_weight(p.survival)).collect();
            let rate = -ls_slope(&xs, &logs, &ws);
            let size = samples.len() / FIT_BATCHES;
            let fits: Vec<f64> = (0..FIT_BATCHES)
                .map(|k| {
                    let mut b = samples[k * size..(k + 1) * size].to_vec();
                    b.sort_by(f64::total_cmp);
                    let p: Vec<f64> = xs.iter().map(|&x| survival_sorted(&b, x).max(1.0 / size as f64)).collect();
                    let l: Vec<f64> = p.iter().map(|v| v.ln()).collect();
                    let w: Vec<f64> = p.iter().map(|&v| log_weight(v)).collect();
                    -ls_slope(&xs, &l, &w)
                })
                .collect();
            let m = fits.iter().sum::<f64>() / FIT_BATCHES as f64;
            let var = fits.iter().map(|f| (f - m).powi(2)).sum::<f64>() / (FIT_BATCHES - 1) as f64;
            (Some(rate), Some((var / FIT_BATCHES as f64).sqrt()))
        }
    };
    Ok(TailFit {
        window,
        exceedances,
        points,
        rate,
        rate_se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub x: f64,
    pub lower: f64,
    pub empirical: f64,
    pub empirical_se: f64,
    pub upper: f64,
    pub violated: bool,
}

/// Checks `P(S > x)P(I > Z) ≤ P(U > x) ≤ P(S − I + Z > x) + P(S > x)P(I > Z)`
/// at each `x`, with `(S, I)` drawn independently of the `Z` samples.
pub fn tail_bounds_check(ev: &ScaleFunction, samples: &ChainSamples, xs: &[f64], seed: u64) -> Result<Vec<BoundRow>> {
    let sup = sup_law(ev)?;
    let phi = ev.phi();
    let sampler = StepSampler::new(ev);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = Exp::new(phi).expect("phi > 0");
    let shifted: Vec<f64> = samples
        .z
        .iter()
        .map(|&z| z + sampler.sample_sup(&mut rng) - depth.sample(&mut rng))
        .collect();
    let n = samples.u.len() as f64;
    let p_above = samples.z.iter().map(|&z| (-phi * z).exp()).sum::<f64>() / samples.z.len() as f64;
    Ok(xs
        .iter()
        .map(|&x| {
            let tail = sup.survival(x);
            let lower = tail * p_above;
            let upper = shifted.iter().filter(|&&v| v > x).count() as f64 / shifted.len() as f64 + lower;
            let p = samples.u.iter().filter(|&&u| u > x).count() as f64 / n;
            let se = (p * (1.0 - p) / n).sqrt();
            BoundRow {
                x,
                lower,
                empirical: p,
                empirical_se: se,
                upper,
                violated: p < lower - 3.0 * se || p > upper + 3.0 * se,
            }
        })
        .collect())
}
