//! Cross-module invariants checked on randomised inputs.

use std::f64::consts::PI;

use kslab::burgers::{characteristic_eval, shock_time, BurgersProblem, Profile};
use kslab::diagnostics::loghls_deficit;
use kslab::entropy_toolkit::{ckp_deficit, random_mixture, relative_entropy, Density1D};
use kslab::fields::{cumulative_from_density, QuantileDensity, RadialDensity, RadialGrid};
use kslab::harness::fmt_f64;
use kslab::jko1d::{displacement_interpolate, isotonic_projection, w2};
use kslab::ks_radial::{run, SolverConfig};
use kslab::particles::{em_step, ParticleParams, ParticleState, RngSeed};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quantiles(seed: u64, k: usize) -> QuantileDensity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_mixture(&mut rng, -6.0, 6.0, 1200).unwrap().to_quantiles(k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn radial_runs_conserve_mass_and_monotonicity(factor in 0.1f64..1.4, width in 0.3f64..1.5, centre in 0.0f64..2.0) {
        let grid = RadialGrid::new(256, 8.0).unwrap();
        let rho = RadialDensity::from_fn(grid, |r| (-((r - centre) / width).powi(2)).exp()).unwrap();
        let scale = factor * 8.0 * PI / rho.mass();
        let rho = RadialDensity::new(grid, rho.values().iter().map(|v| v * scale).collect()).unwrap();
        let m0 = cumulative_from_density(&rho);
        let traj = run(&m0, &SolverConfig { t_end: 0.05, record_interval: 0.01, blowup_sup_threshold: 1e4, ..Default::default() }).unwrap();
        for m in &traj.states {
            prop_assert_eq!(m.total(), m0.total());
            prop_assert!(m.is_nondecreasing());
        }
    }

    #[test]
    fn w2_is_a_metric_on_quantiles(a in 0u64..1000, b in 0u64..1000, c in 0u64..1000) {
        let (qa, qb, qc) = (quantiles(a, 128), quantiles(b, 128), quantiles(c, 128));
        let ab = w2(&qa, &qb).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - w2(&qb, &qa).unwrap()).abs() < 1e-14);
        prop_assert!(ab <= w2(&qa, &qc).unwrap() + w2(&qc, &qb).unwrap() + 1e-12);
        prop_assert_eq!(w2(&qa, &qa).unwrap(), 0.0);
    }

    #[test]
    fn displacement_interpolation_is_a_constant_speed_geodesic(a in 0u64..1000, b in 0u64..1000, t in 0.0f64..1.0) {
        let (qa, qb) = (quantiles(a, 96), quantiles(b.wrapping_add(7), 96));
        let d = w2(&qa, &qb).unwrap();
        let mid = displacement_interpolate(&qa, &qb, t).unwrap();
        prop_assert!((w2(&qa, &mid).unwrap() - t * d).abs() <= 1e-12 * (1.0 + d));
        prop_assert!((w2(&mid, &qb).unwrap() - (1.0 - t) * d).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn isotonic_projection_is_idempotent_and_separated(xs in prop::collection::vec(-5.0f64..5.0, 2..60), gap in 0.0f64..0.05) {
        let p = isotonic_projection(&xs, gap);
        prop_assert!(p.windows(2).all(|w| w[1] - w[0] >= gap * (1.0 - 1e-12) - 1e-12));
        let again = isotonic_projection(&p, gap);
        for (x, y) in p.iter().zip(&again) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        // the projection preserves the sum when gap = 0
        if gap == 0.0 {
            prop_assert!((p.iter().sum::<f64>() - xs.iter().sum::<f64>()).abs() < 1e-9);
        }
    }

    #[test]
    fn ckp_and_relative_entropy_are_nonnegative(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_mixture(&mut rng, -5.0, 5.0, 500).unwrap();
        let b = random_mixture(&mut rng, -5.0, 5.0, 500).unwrap();
        prop_assert!(relative_entropy(&a, &b).unwrap() >= -1e-12);
        prop_assert!(ckp_deficit(&a, &b).unwrap() >= -1e-12);
        let same = Density1D::new(-5.0, 5.0, a.values().to_vec()).unwrap();
        prop_assert!(relative_entropy(&a, &same).unwrap().abs() < 1e-14);
    }

    #[test]
    fn loghls_deficit_is_dilation_invariant(width in 0.5f64..1.5, lambda in 0.7f64..1.4) {
        // f_λ(r) = λ⁻² f(r/λ) keeps the mass and shifts both sides of the
        // inequality by the same amount
        let grid = RadialGrid::new(8000, 30.0).unwrap();
        let f = |r: f64| (-(r / width).powi(2)).exp();
        let base = RadialDensity::from_fn(grid, f).unwrap();
        let scaled = RadialDensity::scaled_from_fn(grid, lambda, f).unwrap();
        let (d0, d1) = (loghls_deficit(&base).unwrap(), loghls_deficit(&scaled).unwrap());
        prop_assert!((d0 - d1).abs() < 1e-4 * base.mass(), "{} vs {}", d0, d1);
    }

    #[test]
    fn sine_shock_time_scales_inversely(amplitude in 0.2f64..5.0) {
        let p = BurgersProblem::new(Profile::NegativeSine { amplitude }, -PI, PI).unwrap();
        let s = shock_time(&p);
        prop_assert!((s.time * amplitude - 1.0).abs() < 1e-9);
        // before the shock u is constant along characteristics
        let t = 0.5 * s.time;
        for z in [-2.0, -0.3, 0.4, 1.9] {
            let u = characteristic_eval(&p, z + t * p.profile().value(z), t).unwrap();
            prop_assert!((u - p.profile().value(z)).abs() < 1e-9);
        }
    }

    #[test]
    fn seventeen_digit_output_round_trips(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }
}

#[test]
fn particle_steps_do_not_depend_on_thread_count() {
    let params = ParticleParams { chi: 1.0, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    use rand::Rng;
    let mut pts = |n: usize| -> Vec<[f64; 2]> { (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect() };
    let state = ParticleState::new(pts(2000), pts(2000), params).unwrap();
    let step = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut s = state.clone();
            for k in 0..5 {
                s = em_step(&s, 0.01, RngSeed(99), k).unwrap();
            }
            s
        })
    };
    let (one, many) = (step(1), step(4));
    assert_eq!(one.u, many.u);
    assert_eq!(one.v, many.v);
}
