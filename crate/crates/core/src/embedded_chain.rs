//! Adjustment functionals, the embedded chain `Z_n` (just after each
//! adjustment) and `U_n` (just before), and solvers for its stationary law.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluctuation::{overshoot_lst, StepSampler, TransitionLaw};
use crate::numerics::quad::{integrate, integrate_to_inf};
use crate::numerics::{geomspace, linspace};
use crate::scale_fn::ScaleFunction;

/// Law of the level `B` used by the constant-level and reflect-around-`B`
/// functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevelDist {
    Deterministic { value: f64 },
    Exponential { rate: f64 },
}

impl LevelDist {
    pub fn lst(&self, s: f64) -> f64 {
        match *self {
            LevelDist::Deterministic { value } => (-s * value).exp(),
            LevelDist::Exponential { rate } => rate / (rate + s),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            LevelDist::Deterministic { value } => f64::from(x >= value),
            LevelDist::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LevelDist::Deterministic { value } => value,
            LevelDist::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
        }
    }

    fn problems(&self, out: &mut Vec<String>) {
        match *self {
            LevelDist::Deterministic { value } if !(value.is_finite() && value >= 0.0) => {
                out.push(format!("functional.level.value must be >= 0 (got {value})"))
            }
            LevelDist::Exponential { rate } if !(rate.is_finite() && rate > 0.0) => {
                out.push(format!("functional.level.rate must be > 0 (got {rate})"))
            }
            _ => {}
        }
    }
}

/// The adjustment `F` applied at each review epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalSpec {
    /// `F(y) = 0`
    Clearing,
    /// `F(y) = B`
    ConstantLevel { level: LevelDist },
    /// `F(y) = (B − y)⁺`
    ReflectAroundB { level: LevelDist },
    /// `F(y) = δy`
    Proportional { delta: f64 },
}

impl FunctionalSpec {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            FunctionalSpec::ConstantLevel { level } | FunctionalSpec::ReflectAroundB { level } => level.problems(&mut out),
            FunctionalSpec::Proportional { delta } if !(*delta > 0.0 && *delta < 1.0) => {
                out.push(format!("functional.delta must lie in (0, 1) (got {delta})"))
            }
            _ => {}
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::UnsupportedFunctional {
                operation: "functional",
                variant: p.join("; "),
            })
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FunctionalSpec::Clearing => "clearing",
            FunctionalSpec::ConstantLevel { .. } => "constant_level",
            FunctionalSpec::ReflectAroundB { .. } => "reflect_around_b",
            FunctionalSpec::Proportional { .. } => "proportional",
        }
    }

    /// Whether `F(y) ≤ F₀` for an a.s. finite `F₀` independent of `y`.
    pub fn is_dominated(&self) -> bool {
        !matches!(self, FunctionalSpec::Proportional { .. })
    }

    /// `E[e^{−sF(y)}]`.
    pub fn lst_at(&self, y: f64, s: f64) -> f64 {
        match *self {
            FunctionalSpec::Clearing => 1.0,
            FunctionalSpec::ConstantLevel { level } => level.lst(s),
            FunctionalSpec::Proportional { delta } => (-s * delta * y).exp(),
            FunctionalSpec::ReflectAroundB { level } => match level {
                LevelDist::Deterministic { value } => (-s * (value - y).max(0.0)).exp(),
                // P(B ≤ y) + P(B > y)·β/(β + s) by memorylessness
                LevelDist::Exponential { rate } => {
                    let above = (-rate * y).exp();
                    1.0 - above + above * rate / (rate + s)
                }
            },
        }
    }
}

pub fn apply_functional<R: Rng + ?Sized>(f: &FunctionalSpec, y: f64, rng: &mut R) -> f64 {
    match *f {
        FunctionalSpec::Clearing => 0.0,
        FunctionalSpec::ConstantLevel { level } => level.sample(rng),
        FunctionalSpec::ReflectAroundB { level } => (level.sample(rng) - y).max(0.0),
        FunctionalSpec::Proportional { delta } => delta * y,
    }
}

/// The kernel `k(x, dy)`: law of `F(Y(e_q))` given `Y(0) = x`.
#[derive(Debug, Clone)]
pub struct KernelLaw<'a> {
    law: &'a TransitionLaw,
    f: FunctionalSpec,
    x: f64,
    // E_x[e^{−βY}] for the exponential reflect case
    reflect_weight: f64,
}

pub fn kernel_density<'a>(law: &'a TransitionLaw, f: &FunctionalSpec, x: f64) -> Result<KernelLaw<'a>> {
    f.validate()?;
    let reflect_weight = match f {
        FunctionalSpec::ReflectAroundB {
            level: LevelDist::Exponential { rate },
        } => law.lst(x, *rate),
        _ => 0.0,
    };
    Ok(KernelLaw {
        law,
        f: *f,
        x,
        reflect_weight,
    })
}

impl KernelLaw<'_> {
    /// Mass at zero.
    pub fn atom(&self) -> f64 {
        self.cdf(0.0)
    }

    /// Point masses away from zero, as `(location, mass)`.
    pub fn point_masses(&self) -> Vec<(f64, f64)> {
        match self.f {
            FunctionalSpec::ConstantLevel {
                level: LevelDist::Deterministic { value },
            } if value > 0.0 => vec![(value, 1.0)],
            FunctionalSpec::ReflectAroundB {
                level: LevelDist::Deterministic { value },
            } if value > 0.0 => vec![(value, self.law.atom(self.x))],
            _ => vec![],
        }
    }

    /// Density of the absolutely continuous part on `y > 0`.
    pub fn density(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        match self.f {
            FunctionalSpec::Clearing => 0.0,
            FunctionalSpec::ConstantLevel { level } => match level {
                LevelDist::Deterministic { .. } => 0.0,
                LevelDist::Exponential { rate } => rate * (-rate * y).exp(),
            },
            FunctionalSpec::Proportional { delta } => self.law.density(self.x, y / delta) / delta,
            FunctionalSpec::ReflectAroundB { level } => match level {
                LevelDist::Deterministic { value } => {
                    if y < value {
                        self.law.density(self.x, value - y)
                    } else {
                        0.0
                    }
                }
                LevelDist::Exponential { rate } => self.reflect_weight * rate * (-rate * y).exp(),
            },
        }
    }

    /// `P(F(Y) ≤ y)`.
    pub fn cdf(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        match self.f {
            FunctionalSpec::Clearing => 1.0,
            FunctionalSpec::ConstantLevel { level } => level.cdf(y),
            FunctionalSpec::Proportional { delta } => self.law.cdf(self.x, y / delta),
            FunctionalSpec::ReflectAroundB { level } => match level {
                LevelDist::Deterministic { value } => {
                    if y >= value {
                        1.0
                    } else {
                        self.law.survival(self.x, value - y)
                    }
                }
                LevelDist::Exponential { rate } => 1.0 - self.reflect_weight * (-rate * y).exp(),
            },
        }
    }

    /// `E_x[e^{−sF(Y)}]`.
    pub fn lst(&self, s: f64) -> f64 {
        let law = self.law;
        let x = self.x;
        match self.f {
            FunctionalSpec::Clearing => 1.0,
            FunctionalSpec::ConstantLevel { level } => level.lst(s),
            FunctionalSpec::Proportional { delta } => law.lst(x, delta * s),
            FunctionalSpec::ReflectAroundB { level } => match level {
                LevelDist::Exponential { rate } => 1.0 - self.reflect_weight + self.reflect_weight * rate / (rate + s),
                LevelDist::Deterministic { value } => {
                    if value == 0.0 {
                        return 1.0;
                    }
                    let inner = integrate(|y| (-s * (value - y)).exp() * law.density(x, y), 0.0, value.min(x.max(1e-300)), 1e-14, 1e-11).value
                        + if value > x {
                            integrate(|y| (-s * (value - y)).exp() * law.density(x, y), x, value, 1e-14, 1e-11).value
                        } else {
                            0.0
                        };
                    law.survival(x, value) + law.atom(x) * (-s * value).exp() + inner
                }
            },
        }
    }
}

/// Post-adjustment (`z`) and pre-adjustment (`u`) samples, aligned so that
/// `z[i] = F(u[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSamples {
    pub z: Vec<f64>,
    pub u: Vec<f64>,
}

/// Options for [`simulate_chain`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    pub draws: usize,
    pub burnin: usize,
    pub seed: u64,
    pub shards: usize,
}

fn require_positive_recurrent(ev: &ScaleFunction) -> Result<()> {
    if ev.model().is_null_recurrent() {
        Err(Error::NullRecurrent)
    } else {
        Ok(())
    }
}

/// Runs `shards` independent chains from `U_0 = 0`, each with its own
/// ChaCha stream `(seed, shard)` and its own burn-in, and concatenates them
/// in shard order.
pub fn simulate_chain(ev: &ScaleFunction, f: &FunctionalSpec, opts: &ChainOptions) -> Result<ChainSamples> {
    require_positive_recurrent(ev)?;
    f.validate()?;
    let shards = opts.shards.max(1);
    let sampler = StepSampler::new(ev);
    let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let n = opts.draws / shards + usize::from(k < opts.draws % shards);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(k as u64);
            let mut u = 0.0;
            for _ in 0..opts.burnin {
                let z = apply_functional(f, u, &mut rng);
                u = sampler.sample(z, &mut rng);
            }
            let (mut zs, mut us) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for _ in 0..n {
                let z = apply_functional(f, u, &mut rng);
                us.push(u);
                zs.push(z);
                u = sampler.sample(z, &mut rng);
            }
            (zs, us)
        })
        .collect();
    let mut out = ChainSamples {
        z: Vec::with_capacity(opts.draws),
        u: Vec::with_capacity(opts.draws),
    };
    for (z, u) in parts {
        out.z.extend(z);
        out.u.extend(u);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    MonteCarlo,
    GridPowerIteration,
    ClosedFormFixedPoint,
    Exact,
}

/// The part of a distribution on `(0, ∞)`, carrying mass `1 − atom`.
#[derive(Debug, Clone, PartialEq)]
pub enum PositivePart {
    None,
    /// density at quadrature nodes `x` with weights `weight`, plus point
    /// masses away from zero; `edges` bracket the nodes for binning
    Grid {
        x: Vec<f64>,
        weight: Vec<f64>,
        density: Vec<f64>,
        edges: Vec<f64>,
        points: Vec<(f64, f64)>,
    },
    /// positive draws, each of weight `(1 − atom)/len`
    Samples(Vec<f64>),
    Exponential { rate: f64 },
    PointMass { at: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub atom: f64,
    pub positive: PositivePart,
    pub provenance: Provenance,
    /// estimated mass lost beyond the truncation point of a grid solve
    pub truncation_mass: Option<f64>,
}

impl StationaryDistribution {
    pub fn point_mass(at: f64, provenance: Provenance) -> Self {
        if at == 0.0 {
            StationaryDistribution {
                atom: 1.0,
                positive: PositivePart::None,
                provenance,
                truncation_mass: None,
            }
        } else {
            StationaryDistribution {
                atom: 0.0,
                positive: PositivePart::PointMass { at },
                provenance,
                truncation_mass: None,
            }
        }
    }

    pub fn from_samples(samples: &[f64]) -> Self {
        let positive: Vec<f64> = samples.iter().copied().filter(|&v| v > 0.0).collect();
        let atom = 1.0 - positive.len() as f64 / samples.len() as f64;
        StationaryDistribution {
            atom,
            positive: PositivePart::Samples(positive),
            provenance: Provenance::MonteCarlo,
            truncation_mass: None,
        }
    }

    /// The exact law of `B`, which is stationary for the constant-level
    /// functional.
    pub fn level_law(level: &LevelDist) -> Self {
        match *level {
            LevelDist::Deterministic { value } => Self::point_mass(value, Provenance::Exact),
            LevelDist::Exponential { rate } => StationaryDistribution {
                atom: 0.0,
                positive: PositivePart::Exponential { rate },
                provenance: Provenance::Exact,
                truncation_mass: None,
            },
        }
    }

    /// `∫ g dπ`, the atom counted once.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let rest = 1.0 - self.atom;
        let positive = match &self.positive {
            PositivePart::None => 0.0,
            PositivePart::Grid {
                x,
                weight,
                density,
                points,
                ..
            } => {
                x.iter().zip(weight).zip(density).map(|((&xi, &w), &p)| w * p * g(xi)).sum::<f64>()
                    + points.iter().map(|&(at, m)| m * g(at)).sum::<f64>()
            }
            PositivePart::Samples(v) => {
                if v.is_empty() {
                    0.0
                } else {
                    rest * v.iter().map(|&xi| g(xi)).sum::<f64>() / v.len() as f64
                }
            }
            PositivePart::Exponential { rate } => {
                rest * integrate_to_inf(|x| rate * (-rate * x).exp() * g(x), 0.0, 1.0 / rate, 1e-13, 1e-10).value
            }
            PositivePart::PointMass { at } => rest * g(*at),
        };
        self.atom * g(0.0) + positive
    }

    /// `E[e^{−sZ}]`, closed form where available.
    pub fn lst(&self, s: f64) -> f64 {
        match &self.positive {
            PositivePart::Exponential { rate } => self.atom + (1.0 - self.atom) * rate / (rate + s),
            _ => self.integrate(|x| (-s * x).exp()),
        }
    }

    /// Mass of `(a, b]` with `0 ≤ a < b`; a grid node's mass is spread
    /// uniformly over its bracket.
    pub fn mass_in(&self, a: f64, b: f64) -> f64 {
        let rest = 1.0 - self.atom;
        match &self.positive {
            PositivePart::None => 0.0,
            PositivePart::Grid {
                weight,
                density,
                edges,
                points,
                ..
            } => {
                let cells: f64 = (0..weight.len())
                    .map(|j| {
                        let (lo, hi) = (edges[j], edges[j + 1]);
                        let overlap = (hi.min(b) - lo.max(a)).max(0.0);
                        weight[j] * density[j] * overlap / (hi - lo)
                    })
                    .sum();
                cells + points.iter().filter(|p| p.0 > a && p.0 <= b).map(|p| p.1).sum::<f64>()
            }
            PositivePart::Samples(v) => rest * v.iter().filter(|&&x| x > a && x <= b).count() as f64 / v.len().max(1) as f64,
            PositivePart::Exponential { rate } => rest * ((-rate * a).exp() - (-rate * b).exp()),
            PositivePart::PointMass { at } => {
                if *at > a && *at <= b {
                    rest
                } else {
                    0.0
                }
            }
        }
    }

    /// Total-variation distance after binning both laws on `edges`
    /// (the atom is its own cell, mass beyond the last edge another).
    pub fn tv_distance(&self, other: &Self, edges: &[f64]) -> f64 {
        let mut d = (self.atom - other.atom).abs();
        let mut seen_a = self.atom;
        let mut seen_b = other.atom;
        for w in edges.windows(2) {
            let (ma, mb) = (self.mass_in(w[0], w[1]), other.mass_in(w[0], w[1]));
            d += (ma - mb).abs();
            seen_a += ma;
            seen_b += mb;
        }
        d += ((1.0 - seen_a) - (1.0 - seen_b)).abs();
        0.5 * d
    }
}

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// Composite 4-point Gauss–Legendre rule with about `n` nodes on
/// `(0, x_max)`, with a panel edge at `brk` when it lies inside:
/// `(nodes, weights)`.
pub fn gauss_panels(x_max: f64, n: usize, brk: Option<f64>) -> (Vec<f64>, Vec<f64>) {
    let panels = n.div_ceil(4).max(1);
    let mut ends = vec![0.0];
    match brk.filter(|&b| b > 0.0 && b < x_max) {
        Some(b) => {
            let left = ((b / x_max * panels as f64).round() as usize).clamp(1, panels.max(2) - 1);
            ends.extend((1..=left).map(|k| b * k as f64 / left as f64));
            let right = panels.max(2) - left;
            ends.extend((1..=right).map(|k| b + (x_max - b) * k as f64 / right as f64));
        }
        None => ends.extend((1..=panels).map(|k| x_max * k as f64 / panels as f64)),
    }
    let mut x = Vec::with_capacity(4 * panels);
    let mut w = Vec::with_capacity(4 * panels);
    for e in ends.windows(2) {
        let (mid, half) = (0.5 * (e[0] + e[1]), 0.5 * (e[1] - e[0]));
        for &(t, wt) in &GAUSS4 {
            x.push(mid + half * t);
            w.push(half * wt);
        }
    }
    (x, w)
}

/// Nyström discretization of the balance equation: the positive part of
/// `π` is a density at Gauss–Legendre nodes on `(0, x_max)`, while the
/// atom and any kernel point mass are states of their own. Power iteration
/// runs until successive iterates differ by less than 1e-12 in total
/// variation. Fails with a truncation error when the kernel mass beyond
/// `x_max`, averaged over `π`, exceeds 1e-8.
pub fn stationary_grid(law: &TransitionLaw, f: &FunctionalSpec, x_max: f64, n_grid: usize) -> Result<StationaryDistribution> {
    require_positive_recurrent(law.evaluator())?;
    f.validate()?;
    if !(x_max > 0.0 && x_max.is_finite()) || n_grid == 0 {
        return Err(crate::error::domain("stationary_grid", x_max, "x_max > 0 and n_grid > 0"));
    }
    if let FunctionalSpec::Clearing = f {
        return Ok(StationaryDistribution {
            truncation_mass: Some(0.0),
            ..StationaryDistribution::point_mass(0.0, Provenance::GridPowerIteration)
        });
    }
    let point: Option<f64> = kernel_density(law, f, 0.0)?.point_masses().first().map(|p| p.0);
    let (nodes, weights) = gauss_panels(x_max, n_grid, point);
    let lead = 1 + usize::from(point.is_some());
    let states: Vec<f64> = std::iter::once(0.0).chain(point).chain(nodes.iter().copied()).collect();
    let n = states.len();

    let rows: Vec<(Vec<f64>, f64)> = states
        .par_iter()
        .map(|&x| {
            let k = kernel_density(law, f, x).expect("validated");
            let mut row = Vec::with_capacity(n);
            row.push(k.atom());
            if point.is_some() {
                row.push(k.point_masses().first().map_or(0.0, |p| p.1));
            }
            row.extend(nodes.iter().zip(&weights).map(|(&y, &w)| w * k.density(y)));
            (row, (1.0 - k.cdf(x_max)).max(0.0))
        })
        .collect();

    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < 100_000 {
        iterations += 1;
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, (row, _)) in rows.iter().enumerate() {
            let w = pi[i];
            if w == 0.0 {
                continue;
            }
            for (nj, &k) in next.iter_mut().zip(row) {
                *nj += w * k;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        change = 0.5 * pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum::<f64>();
        std::mem::swap(&mut pi, &mut next);
        if change < 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "stationary_grid power iteration",
            iterations,
            residual: change,
        });
    }
    let lost: f64 = pi.iter().zip(&rows).map(|(p, (_, l))| p * l).sum();
    if lost > 1e-8 {
        return Err(Error::Truncation {
            x_max,
            mass: lost,
            limit: 1e-8,
        });
    }
    let mut edges = vec![0.0];
    edges.extend(nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    edges.push(x_max);
    let density = pi[lead..].iter().zip(&weights).map(|(m, w)| m / w).collect();
    Ok(StationaryDistribution {
        atom: pi[0],
        positive: PositivePart::Grid {
            x: nodes,
            weight: weights,
            density,
            edges,
            points: point.map(|at| vec![(at, pi[1])]).unwrap_or_default(),
        },
        provenance: Provenance::GridPowerIteration,
        truncation_mass: Some(lost),
    })
}

/// Result of the reflect-around-`B` fixed point with `B ~ Exp(β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub pi_zero: f64,
    pub pi: StationaryDistribution,
    /// `∫π(dx) P_x(Y(e_q) > B)` evaluated by quadrature at the solution;
    /// equals `pi_zero` when the solution is consistent
    pub pizero_integral: f64,
}

/// `π = π(0)δ₀ + (1 − π(0))Exp(β)` with `π(0) = 1 − E[e^{−βU}]`, which is
/// linear in `π(0)`:
/// `E[e^{−βU}] = L(β)(π(0) + (1 − π(0))g)`, `g = (Φ + 2β)/(2(Φ + β))`,
/// where `L` is the transform of `X̄(e_q)` and `g = E[e^{−β(Z − E)⁺}]`
/// for `Z ~ Exp(β)`, `E ~ Exp(Φ)`.
pub fn pi_zero_fixed_point(law: &TransitionLaw, beta: f64) -> Result<FixedPoint> {
    let ev = law.evaluator();
    require_positive_recurrent(ev)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(crate::error::domain("pi_zero_fixed_point", beta, "beta > 0"));
    }
    let phi = ev.phi();
    let l = law.sup_law().lst(beta);
    let g = (phi + 2.0 * beta) / (2.0 * (phi + beta));
    let pi_zero = (1.0 - l * g) / (1.0 + l - l * g);
    let pi = StationaryDistribution {
        atom: pi_zero,
        positive: PositivePart::Exponential { rate: beta },
        provenance: Provenance::ClosedFormFixedPoint,
        truncation_mass: None,
    };
    // P_x(Y > B) = ∫ β e^{−βt} P_x(Y > t) dt
    let exceed = |x: f64| {
        let split = x.max(1e-300);
        integrate(|t| beta * (-beta * t).exp() * law.survival(x, t), 0.0, split, 1e-14, 1e-11).value
            + integrate_to_inf(|t| beta * (-beta * t).exp() * law.survival(x, t), split, 1.0 / beta, 1e-14, 1e-11).value
    };
    let pizero_integral = pi.integrate(exceed);
    Ok(FixedPoint {
        pi_zero,
        pi,
        pizero_integral,
    })
}

/// Closed form of `P_x(Y(e_q) > B)` for `B ~ Exp(β)`, used as a check on
/// the quadrature in [`FixedPoint::pizero_integral`].
pub fn exceed_exponential_level(law: &TransitionLaw, x: f64, beta: f64) -> f64 {
    1.0 - law.lst(x, beta)
}

/// The default test family for balance residuals: `e^{−sy}` for 20
/// log-spaced `s` in `[0.05, 20]`.
pub fn default_s_grid() -> Vec<f64> {
    geomspace(0.05, 20.0, 20)
}

/// `max_s |∫e^{−sy}π(dy) − ∫π(dx) E_x[e^{−sF(Y(e_q))}]|`.
pub fn balance_residual(law: &TransitionLaw, f: &FunctionalSpec, pi: &StationaryDistribution, s_grid: &[f64]) -> Result<f64> {
    f.validate()?;
    let mut worst: f64 = 0.0;
    for &s in s_grid {
        let lhs = pi.lst(s);
        let rhs = pi.integrate(|x| kernel_density(law, f, x).expect("validated").lst(s));
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Pushes every positive cell of a distribution by `eps` of its mass
/// towards the atom; used to probe residual sensitivity.
pub fn perturb_towards_atom(pi: &StationaryDistribution, eps: f64) -> StationaryDistribution {
    StationaryDistribution {
        atom: pi.atom + eps * (1.0 - pi.atom),
        positive: match &pi.positive {
            PositivePart::Grid {
                x,
                weight,
                density,
                edges,
                points,
            } => PositivePart::Grid {
                x: x.clone(),
                weight: weight.clone(),
                density: density.iter().map(|p| p * (1.0 - eps)).collect(),
                edges: edges.clone(),
                points: points.iter().map(|&(at, m)| (at, m * (1.0 - eps))).collect(),
            },
            other => other.clone(),
        },
        ..pi.clone()
    }
}

/// Mean of `g` over a chain started from `x0` after `epochs` steps,
/// estimated from `paths` independent runs; used for coupling checks.
pub fn chain_marginal<G: Fn(f64) -> f64 + Sync>(ev: &ScaleFunction, f: &FunctionalSpec, x0: f64, epochs: usize, paths: usize, seed: u64, g: G) -> f64 {
    let sampler = StepSampler::new(ev);
    let total: f64 = (0..paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut z = x0;
            for _ in 0..epochs {
                let u = sampler.sample(z, &mut rng);
                z = apply_functional(f, u, &mut rng);
            }
            g(z)
        })
        .sum();
    total / paths as f64
}

/// `E[e^{−s(z − E)⁺}]` re-exported for callers assembling transforms.
pub fn overshoot(phi: f64, z: f64, s: f64) -> f64 {
    overshoot_lst(phi, z, s)
}

/// Uniform grid on `[a, b]` used by the CLI and the solvers.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a, b, n)
}
