//! Subcommand bodies. Each returns an optional CSV table and a JSON block of
//! results; the driver in `cli` writes them next to the run metadata.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::config::{RunConfig, StationaryMethod};
use super::CliError;
use crate::embedded_chain::{
    balance_residual, default_s_grid, pi_zero_fixed_point, simulate_chain, stationary_grid, ChainOptions, ChainSamples, FunctionalSpec,
    LevelDist, PositivePart, Provenance, StationaryDistribution,
};
use crate::fluctuation::{transition, StepSampler, TransitionLaw};
use crate::levy_model::{LevyModel, ModelFamily};
use crate::numerics::linspace;
use crate::scale_fn::ScaleFunction;
use crate::stats::{batch_means, BATCHES};
use crate::steady_state::{
    key_equation_residual, lst_constant_level, lst_cpp_reflect, lst_proportional, steady_functional, steady_lst,
};
use crate::tail_asymptotics::{
    convolution_equiv_asymptote, cramer_asymptote, empirical_tail_fit, FitMode, Regime, DEFAULT_WINDOW,
};

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    /// Header row, then one line per row with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub struct Output {
    pub table: Option<Table>,
    pub results: Value,
}

/// Model, evaluator and transition law built once per run.
pub struct Context {
    pub cfg: RunConfig,
    pub law: TransitionLaw,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self, CliError> {
        let model = LevyModel::new(cfg.model)?;
        let ev = match cfg.solver.scale_method {
            Some(m) => ScaleFunction::with_method(&model, cfg.q, m)?,
            None => ScaleFunction::new(&model, cfg.q)?,
        };
        let law = transition(&ev, cfg.solver.strict_paper)?;
        Ok(Context { cfg, law })
    }

    pub fn ev(&self) -> &ScaleFunction {
        self.law.evaluator()
    }

    fn chain(&self) -> Result<ChainSamples, CliError> {
        let s = &self.cfg.simulation;
        let opts = ChainOptions {
            draws: s.draws,
            burnin: s.burnin,
            seed: self.cfg.seed()?,
            shards: s.shards,
        };
        Ok(simulate_chain(self.ev(), &self.cfg.functional, &opts)?)
    }
}

/// Parses `"a:b:n"` into `n` evenly spaced points.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("--grid expects a:b:n, got {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !(b >= a) {
        return Err(bad());
    }
    Ok(linspace(a, b, n))
}

fn level_quantile(level: &LevelDist, tail: f64) -> f64 {
    match *level {
        LevelDist::Deterministic { value } => value,
        LevelDist::Exponential { rate } => -tail.ln() / rate,
    }
}

/// A truncation point beyond which the kernel puts less than about 1e-10
/// of mass: the `1 − 1e-10` quantile of `X̄(e_q)` plus that of the level,
/// stretched by `1/(1 − δ)` for the proportional functional.
pub fn default_x_max(ctx: &Context) -> f64 {
    let base = ctx.law.sup_law().survival_quantile(1e-10);
    let x = match ctx.cfg.functional {
        FunctionalSpec::Clearing => base,
        FunctionalSpec::ConstantLevel { level } | FunctionalSpec::ReflectAroundB { level } => base + level_quantile(&level, 1e-10),
        FunctionalSpec::Proportional { delta } => base / (1.0 - delta),
    };
    1.2 * x.max(1.0)
}

pub fn model_info(ctx: &Context) -> Result<Output, CliError> {
    let ev = ctx.ev();
    let model = ev.model();
    let sup = ctx.law.sup_law();
    let gamma = crate::tail_asymptotics::adjustment_coefficient(model, ev.q()).ok();
    Ok(Output {
        table: None,
        results: json!({
            "family": format!("{:?}", model.family()),
            "psi_prime_0": model.mean_slope(),
            "null_recurrent": model.is_null_recurrent(),
            "bounded_variation": model.has_bounded_variation(),
            "regular": model.is_regular(),
            "phi": ev.phi(),
            "w0": ev.w0(),
            "scale_method": ev.method(),
            "sup_atom": sup.atom(),
            "sup_mean": sup.mean(),
            "adjustment_coefficient": gamma,
        }),
    })
}

pub fn scale(ctx: &Context, grid: Option<Vec<f64>>) -> Result<Output, CliError> {
    let ev = ctx.ev();
    let xs = grid.unwrap_or_else(|| linspace(0.0, 10.0, 101));
    let mut t = Table::new(&["x", "W", "Wprime", "Z"]);
    for &x in &xs {
        let wp = if x > 0.0 { ev.w_prime(x)? } else { f64::NAN };
        t.rows.push(vec![x, ev.w(x), wp, ev.z(x)]);
    }
    Ok(Output {
        table: Some(t),
        results: json!({"phi": ev.phi(), "w0": ev.w0(), "method": ev.method()}),
    })
}

pub fn transition_cmd(ctx: &Context, grid: Option<Vec<f64>>) -> Result<Output, CliError> {
    let x = ctx.cfg.solver.start;
    let ys = grid.unwrap_or_else(|| linspace(0.0, 10.0, 101));
    let mut t = Table::new(&["y", "density", "cdf"]);
    for &y in &ys {
        t.rows.push(vec![y, ctx.law.density(x, y), ctx.law.cdf(x, y)]);
    }
    Ok(Output {
        table: Some(t),
        results: json!({"start": x, "atom": ctx.law.atom(x), "strict_paper": ctx.law.strict_paper()}),
    })
}

fn default_method(f: &FunctionalSpec) -> StationaryMethod {
    match f {
        FunctionalSpec::ReflectAroundB {
            level: LevelDist::Exponential { .. },
        } => StationaryMethod::FixedPoint,
        _ => StationaryMethod::Grid,
    }
}

/// The stationary post-adjustment law by the requested method, with
/// metadata describing how it was obtained.
pub fn stationary_law(ctx: &Context, method: Option<StationaryMethod>) -> Result<(StationaryDistribution, Value), CliError> {
    let f = ctx.cfg.functional;
    let method = method.or(ctx.cfg.solver.method).unwrap_or_else(|| default_method(&f));
    match method {
        StationaryMethod::Mc => {
            let s = ctx.chain()?;
            let pi = StationaryDistribution::from_samples(&s.z);
            Ok((pi, json!({"solver": "mc", "seed": ctx.cfg.simulation.seed, "draws": s.z.len()})))
        }
        StationaryMethod::Grid => {
            let x_max = ctx.cfg.solver.x_max.unwrap_or_else(|| default_x_max(ctx));
            let pi = stationary_grid(&ctx.law, &f, x_max, ctx.cfg.solver.n_grid)?;
            let meta = json!({
                "solver": "grid",
                "x_max": x_max,
                "n_grid": ctx.cfg.solver.n_grid,
                "power_iteration_tolerance": 1e-12,
                "truncation_mass": pi.truncation_mass,
                "truncation_limit": 1e-8,
            });
            Ok((pi, meta))
        }
        StationaryMethod::FixedPoint => match f {
            FunctionalSpec::ReflectAroundB {
                level: LevelDist::Exponential { rate },
            } => {
                let fp = pi_zero_fixed_point(&ctx.law, rate)?;
                let meta = json!({"solver": "fixed_point", "pi_zero": fp.pi_zero, "pizero_integral": fp.pizero_integral});
                Ok((fp.pi, meta))
            }
            FunctionalSpec::Clearing => Ok((StationaryDistribution::point_mass(0.0, Provenance::Exact), json!({"solver": "exact"}))),
            FunctionalSpec::ConstantLevel { level } => Ok((StationaryDistribution::level_law(&level), json!({"solver": "exact"}))),
            _ => Err(crate::error::Error::UnsupportedFunctional {
                operation: "fixed-point stationary solver",
                variant: f.name().into(),
            }
            .into()),
        },
    }
}

pub fn stationary(ctx: &Context, method: Option<StationaryMethod>, grid: Option<Vec<f64>>) -> Result<Output, CliError> {
    let (pi, mut meta) = stationary_law(ctx, method)?;
    let mut t = Table::new(&["x", "mass", "density"]);
    t.rows.push(vec![0.0, pi.atom, f64::NAN]);
    match &pi.positive {
        PositivePart::Grid {
            x, weight, density, points, ..
        } if grid.is_none() => {
            for ((&xi, &w), &p) in x.iter().zip(weight).zip(density) {
                t.rows.push(vec![xi, w * p, p]);
            }
            for &(at, m) in points {
                t.rows.push(vec![at, m, f64::NAN]);
            }
        }
        _ => {
            let edges = grid.unwrap_or_else(|| {
                let hi = ctx.cfg.solver.x_max.unwrap_or_else(|| default_x_max(ctx));
                linspace(0.0, hi, 201)
            });
            for w in edges.windows(2) {
                let m = pi.mass_in(w[0], w[1]);
                t.rows.push(vec![w[1], m, m / (w[1] - w[0])]);
            }
        }
    }
    let residual = match pi.positive {
        PositivePart::Samples(_) => None,
        _ => Some(balance_residual(&ctx.law, &ctx.cfg.functional, &pi, &default_s_grid())?),
    };
    meta["atom"] = json!(pi.atom);
    meta["balance_residual"] = json!(residual);
    Ok(Output {
        table: Some(t),
        results: meta,
    })
}

fn mc_lst(u: &[f64], s: f64) -> (f64, f64) {
    let v: Vec<f64> = u.iter().map(|&x| (-s * x).exp()).collect();
    batch_means(&v, BATCHES)
}

/// The analytic transform of `V(∞)` for the configured functional.
pub fn analytic_lst(ctx: &Context, s: f64) -> Result<f64, CliError> {
    let ev = ctx.ev();
    let strict = ctx.cfg.solver.strict_paper;
    Ok(match ctx.cfg.functional {
        FunctionalSpec::Clearing => lst_constant_level(ev, &LevelDist::Deterministic { value: 0.0 }, s)?,
        FunctionalSpec::ConstantLevel { level } => lst_constant_level(ev, &level, s)?,
        FunctionalSpec::ReflectAroundB {
            level: LevelDist::Exponential { rate },
        } if ev.model().family() == ModelFamily::CppExponential => lst_cpp_reflect(&ctx.law, rate, s, strict)?,
        FunctionalSpec::Proportional { delta } => lst_proportional(ev, delta, s)?.value,
        FunctionalSpec::ReflectAroundB { .. } => {
            let (pi, _) = stationary_law(ctx, None)?;
            steady_lst(&ctx.law, &pi, s)
        }
    })
}

pub fn lst(ctx: &Context, grid: Option<Vec<f64>>) -> Result<Output, CliError> {
    let ss = grid.unwrap_or_else(|| linspace(0.5, 5.0, 10));
    let chain = ctx.chain()?;
    let mut t = Table::new(&["s", "analytic", "mc", "mc_se"]);
    let mut worst: f64 = 0.0;
    let mut keys = Vec::new();
    for &s in &ss {
        let a = analytic_lst(ctx, s)?;
        let (m, se) = mc_lst(&chain.u, s);
        worst = worst.max((a - m).abs() / se);
        t.rows.push(vec![s, a, m, se]);
        let k = key_equation_residual(ctx.ev(), &chain, s)?;
        keys.push(json!({"s": s, "residual": k.residual, "se": k.se}));
    }
    Ok(Output {
        table: Some(t),
        results: json!({
            "max_abs_z": worst,
            "draws": chain.u.len(),
            "seed": ctx.cfg.simulation.seed,
            "key_equation": keys,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TestFamily {
    /// `e^{−θy}`
    Exp,
    /// `1{y ≤ θ}`
    Indicator,
    /// `y^θ`
    Moment,
}

pub fn steady(ctx: &Context, family: TestFamily, method: Option<StationaryMethod>, grid: Option<Vec<f64>>) -> Result<Output, CliError> {
    let (pi, meta) = stationary_law(ctx, method)?;
    let params = grid.unwrap_or_else(|| match family {
        TestFamily::Exp => linspace(0.5, 5.0, 10),
        TestFamily::Indicator => linspace(0.0, 10.0, 21),
        TestFamily::Moment => vec![1.0, 2.0],
    });
    let mut t = Table::new(&["param", "value"]);
    for &p in &params {
        let v = match family {
            TestFamily::Exp => steady_functional(&ctx.law, &pi, |y| (-p * y).exp())?,
            TestFamily::Indicator => steady_functional(&ctx.law, &pi, |y| f64::from(y <= p))?,
            TestFamily::Moment => steady_functional(&ctx.law, &pi, |y| y.powf(p))?,
        };
        t.rows.push(vec![p, v]);
    }
    Ok(Output {
        table: Some(t),
        results: json!({"family": format!("{family:?}").to_lowercase(), "stationary": meta}),
    })
}

pub fn simulate(ctx: &Context) -> Result<Output, CliError> {
    let chain = ctx.chain()?;
    let mut t = Table::new(&["n", "z", "u"]);
    for (i, (&z, &u)) in chain.z.iter().zip(&chain.u).enumerate() {
        t.rows.push(vec![i as f64, z, u]);
    }
    let (mu, se) = batch_means(&chain.u, BATCHES);
    let zero = chain.z.iter().filter(|&&z| z == 0.0).count() as f64 / chain.z.len() as f64;
    Ok(Output {
        table: Some(t),
        results: json!({
            "draws": chain.u.len(),
            "seed": ctx.cfg.simulation.seed,
            "shards": ctx.cfg.simulation.shards,
            "mean_u": mu,
            "mean_u_se": se,
            "z_atom_frequency": zero,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TailRegime {
    Cramer,
    ConvolutionEquivalent,
}

pub fn tail(ctx: &Context, regime: TailRegime, alpha: f64, c: f64) -> Result<Output, CliError> {
    let chain = ctx.chain()?;
    let model = ctx.ev().model();
    let (asym, mode) = match regime {
        TailRegime::Cramer => (cramer_asymptote(ctx.ev(), &chain)?, FitMode::Light),
        TailRegime::ConvolutionEquivalent => (convolution_equiv_asymptote(ctx.ev(), alpha, c, &chain)?, FitMode::Heavy),
    };
    let fit = empirical_tail_fit(&chain.u, DEFAULT_WINDOW, mode)?;
    let mut t = Table::new(&["x", "empirical", "se", "predicted", "ratio", "ci_lo", "ci_hi"]);
    for p in &fit.points {
        let pred = asym.predict(model, p.x);
        let r = p.survival / pred;
        let half = 1.96 * p.survival_se / pred;
        t.rows.push(vec![p.x, p.survival, p.survival_se, pred, r, r - half, r + half]);
    }
    let rate = match asym.regime {
        Regime::Cramer { rate } => Some(rate),
        Regime::ConvolutionEquivalent { .. } => None,
    };
    Ok(Output {
        table: Some(t),
        results: json!({
            "asymptote": asym,
            "rate": rate,
            "phi": ctx.ev().phi(),
            "fit_rate": fit.rate,
            "fit_rate_se": fit.rate_se,
            "window": fit.window,
            "exceedances": fit.exceedances,
            "seed": ctx.cfg.simulation.seed,
        }),
    })
}

pub fn sample_step(ctx: &Context) -> Result<Output, CliError> {
    let x = ctx.cfg.solver.start;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed()?);
    let sampler = StepSampler::new(ctx.ev());
    let mut t = Table::new(&["y"]);
    let draws: Vec<f64> = (0..ctx.cfg.simulation.draws).map(|_| sampler.sample(x, &mut rng)).collect();
    let (mu, se) = batch_means(&draws, BATCHES);
    let zero = draws.iter().filter(|&&y| y == 0.0).count() as f64 / draws.len() as f64;
    t.rows = draws.into_iter().map(|y| vec![y]).collect();
    Ok(Output {
        table: Some(t),
        results: json!({
            "start": x,
            "mean": mu,
            "mean_se": se,
            "atom_frequency": zero,
            "atom": ctx.law.atom(x),
            "seed": ctx.cfg.simulation.seed,
        }),
    })
}
