use levy_reset::embedded_chain::{
    balance_residual, default_s_grid, kernel_density, pi_zero_fixed_point, stationary_grid, FunctionalSpec, LevelDist,
};
use levy_reset::fluctuation::{resolvent, transition, StepSampler};
use levy_reset::levy_model::{JumpDist, LevyModel, LevyModelSpec};
use levy_reset::numerics::quad::{integrate, integrate_to_inf};
use levy_reset::scale_fn::ScaleFunction;
use levy_reset::steady_state::{lst_constant_level, steady_functional, steady_lst};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model() -> impl Strategy<Value = LevyModelSpec> {
    (0usize..3, 0.5f64..2.0, 0.5f64..2.0, 0.5f64..3.0, 1.2f64..3.0).prop_map(|(kind, sigma, lambda, mu, load)| {
        let drift = lambda / mu * load;
        match kind {
            0 => LevyModelSpec::brownian(sigma, drift),
            1 => LevyModelSpec::cpp_exponential(drift, lambda, mu),
            _ => LevyModelSpec::with_jumps(sigma, drift, lambda, JumpDist::Exponential { rate: mu }),
        }
    })
}

fn closed_form() -> impl Strategy<Value = LevyModelSpec> {
    (any::<bool>(), 0.5f64..2.0, 0.5f64..2.0, 0.5f64..3.0, 1.2f64..3.0).prop_map(|(bm, sigma, lambda, mu, load)| {
        if bm {
            LevyModelSpec::brownian(sigma, lambda)
        } else {
            LevyModelSpec::cpp_exponential(lambda / mu * load, lambda, mu)
        }
    })
}

fn ev(spec: LevyModelSpec, q: f64) -> ScaleFunction {
    ScaleFunction::new(&LevyModel::new(spec).unwrap(), q).unwrap()
}

fn cpp() -> ScaleFunction {
    ev(LevyModelSpec::cpp_exponential(2.0, 1.0, 1.0), 1.0)
}

// ∫_{[(x−y)⁺, x]} e^{−Φz} W(y − x + dz) − Φ e^{−Φz} W(y − x + z) dz
fn resolvent_measure_form(e: &ScaleFunction, x: f64, y: f64) -> f64 {
    let phi = e.phi();
    let lo = (x - y).max(0.0);
    // W′ − ΦW term by term: the Φ term drops out instead of cancelling
    let terms: Vec<(f64, f64)> = e.exp_sum().unwrap().terms().collect();
    let body = integrate(
        |z| {
            let a = y - x + z;
            terms.iter().map(|&(c, r)| c * (r - phi) * (r * a - phi * z).exp()).sum::<f64>()
        },
        lo,
        x,
        1e-13,
        1e-12,
    )
    .value;
    let atom = if y < x { e.w0() * (-phi * lo).exp() } else { 0.0 };
    body + atom
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn resolvent_matches_measure_form(spec in closed_form(), q in 0.2f64..3.0, x in 0.1f64..4.0, y in 0.05f64..6.0) {
        let e = ev(spec, q);
        let a = resolvent(&e, x, y);
        let b = resolvent_measure_form(&e, x, y);
        prop_assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()), "{a} vs {b}");
        prop_assert!(a >= -1e-12);
    }

    #[test]
    fn transition_is_a_probability_law(spec in closed_form(), q in 0.2f64..3.0, x in 0.0f64..4.0) {
        let law = transition(&ev(spec, q), false).unwrap();
        let phi = law.evaluator().phi();
        let mass = integrate(|y| law.density(x, y), 0.0, x.max(1e-12), 1e-13, 1e-12).value
            + integrate_to_inf(|y| law.density(x, y), x, 1.0 / phi, 1e-13, 1e-12).value
            + law.atom(x);
        prop_assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
        let mut prev = law.cdf(x, 0.0);
        for k in 1..40 {
            let c = law.cdf(x, 0.25 * k as f64);
            prop_assert!(c >= prev - 1e-12);
            prev = c;
        }
    }

    #[test]
    fn transition_lst_is_the_product_form(spec in model(), q in 0.2f64..3.0, x in 0.0f64..3.0, s in 0.1f64..5.0) {
        let law = transition(&ev(spec, q), false).unwrap();
        let phi = law.evaluator().phi();
        // the density jumps at y = x for bounded-variation models
        let g = |y: f64| (-s * y).exp() * law.density(x, y);
        let by_density = integrate(g, 0.0, x.max(1e-12), 1e-13, 1e-12).value
            + integrate_to_inf(g, x, 1.0 / (s + phi), 1e-13, 1e-12).value
            + law.atom(x);
        prop_assert!((law.lst(x, s) - by_density).abs() < 1e-8, "{} vs {by_density}", law.lst(x, s));
    }

    #[test]
    fn constant_level_kernel_integrates_to_one(spec in closed_form(), q in 0.2f64..3.0, x in 0.0f64..3.0, b in 0.1f64..3.0) {
        let law = transition(&ev(spec, q), false).unwrap();
        let f = FunctionalSpec::ReflectAroundB { level: LevelDist::Deterministic { value: b } };
        let k = kernel_density(&law, &f, x).unwrap();
        let masses: f64 = k.point_masses().iter().map(|p| p.1).sum();
        // h(x, b − y) jumps at y = b − x
        let cut = (b - x).clamp(0.0, b);
        let cont = integrate(|y| k.density(y), 0.0, cut, 1e-13, 1e-12).value
            + integrate(|y| k.density(y), cut, b, 1e-13, 1e-12).value;
        prop_assert!((k.atom() + masses + cont - 1.0).abs() < 1e-9, "total {}", k.atom() + masses + cont);
    }
}

#[test]
fn steady_transform_two_routes_agree() {
    let e = cpp();
    let law = transition(&e, false).unwrap();
    let fp = pi_zero_fixed_point(&law, 1.0).unwrap();
    let grid = stationary_grid(&law, &FunctionalSpec::Proportional { delta: 0.5 }, 40.0, 2000).unwrap();
    for pi in [&fp.pi, &grid] {
        for s in [0.3, 1.0, 3.0] {
            let a = steady_functional(&law, pi, |y| (-s * y).exp()).unwrap();
            let b = steady_lst(&law, pi, s);
            assert!((a - b).abs() < 1e-7, "s={s}: {a} vs {b}");
        }
    }
}

#[test]
fn constant_level_transform_from_the_level_law() {
    let e = cpp();
    let law = transition(&e, false).unwrap();
    for level in [LevelDist::Deterministic { value: 2.0 }, LevelDist::Exponential { rate: 1.0 }] {
        let pi = levy_reset::embedded_chain::StationaryDistribution::level_law(&level);
        let f = FunctionalSpec::ConstantLevel { level };
        assert!(balance_residual(&law, &f, &pi, &default_s_grid()).unwrap() < 1e-12);
        for s in [0.5, e.phi(), 4.0] {
            let a = lst_constant_level(&e, &level, s).unwrap();
            let b = steady_lst(&law, &pi, s);
            assert!((a - b).abs() < 1e-9, "s={s}: {a} vs {b}");
        }
    }
}

#[test]
fn sampler_mean_matches_transition_law() {
    let e = ev(LevyModelSpec::with_jumps(0.7, 2.0, 1.0, JumpDist::Exponential { rate: 1.5 }), 0.8);
    let law = transition(&e, false).unwrap();
    let sampler = StepSampler::new(&e);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = 1.5;
    let n = 200_000;
    let draws: Vec<f64> = (0..n).map(|_| sampler.sample(x, &mut rng)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let exact = integrate_to_inf(|y| law.survival(x, y), 0.0, 1.0, 1e-10, 1e-9).value;
    assert!((mean - exact).abs() < 4.0 * sd / (n as f64).sqrt(), "{mean} vs {exact}");
}
