use proptest::prelude::*;

use rsddej::analysis::stats::{ks_statistic_sorted, MeanAccumulator};
use rsddej::analysis::{moment_experiment, solve_lambda_star};
use rsddej::model::LinearDiffusion;
use rsddej::reflection::{running_sup_regulator, stepwise_projection};
use rsddej::{
    build_linear_model, simulate_path, validate_dissipativity, InitialSegment, LinearModelParams, MarkDistribution,
    MarkMeasure, SimConfig,
};

#[derive(Debug, Clone)]
struct Case {
    dim: usize,
    decay: f64,
    delay_gain: f64,
    jump_state: f64,
    jump_delay: f64,
    diffusion: (f64, f64, f64),
    rate: f64,
    lag: usize,
    start: Vec<f64>,
    seed: u64,
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..=3).prop_flat_map(|dim| {
        (
            0.5f64..4.0,
            0.0f64..1.0,
            -1.5f64..0.5,
            -1.0f64..1.0,
            (0.0f64..1.0, -1.0f64..1.0, -0.5f64..0.5),
            0.0f64..5.0,
            1usize..8,
            prop::collection::vec(0.0f64..2.0, dim),
            any::<u64>(),
        )
            .prop_map(
                move |(decay, delay_gain, jump_state, jump_delay, diffusion, rate, lag, start, seed)| Case {
                    dim,
                    decay,
                    delay_gain,
                    jump_state,
                    jump_delay,
                    diffusion,
                    rate,
                    lag,
                    start,
                    seed,
                },
            )
    })
}

fn simulate(c: &Case) -> rsddej::PathRecord {
    let step = 1.0 / 32.0;
    let delay = c.lag as f64 * step;
    let marks = if c.rate > 0.0 {
        MarkMeasure::new(
            c.rate,
            MarkDistribution::UniformBox {
                lower: vec![-2.0; c.dim],
                upper: vec![1.0; c.dim],
            },
        )
        .unwrap()
    } else {
        MarkMeasure::none(c.dim)
    };
    let mut p = LinearModelParams::deterministic(c.dim, c.decay, c.delay_gain, delay).with_marks(&marks);
    p.jump_state_gain = c.jump_state.into();
    p.jump_delay_gain = c.jump_delay.into();
    p.diffusion = LinearDiffusion {
        base: c.diffusion.0,
        state: c.diffusion.1,
        delay: c.diffusion.2,
    };
    let model = build_linear_model(p).unwrap();
    let cfg = SimConfig::new(delay, step, 4.0).with_seed(c.seed);
    simulate_path(
        &cfg,
        &model,
        &marks,
        &InitialSegment::constant(c.start.clone()),
        cfg.stream(0),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn paths_stay_in_orthant_with_monotone_regulator(c in case()) {
        let path = simulate(&c);
        prop_assert!(path.x.iter().all(|v| *v >= 0.0));
        prop_assert!(path.row(&path.k, 0).iter().all(|v| *v == 0.0));
        for n in 1..=path.steps() {
            for i in 0..path.dim {
                prop_assert!(path.row(&path.k, n)[i] >= path.row(&path.k, n - 1)[i]);
                prop_assert!(path.row(&path.k_cont, n)[i] >= path.row(&path.k_cont, n - 1)[i]);
            }
        }
    }

    #[test]
    fn free_process_plus_regulator_is_state(c in case()) {
        let path = simulate(&c);
        for ((g, k), x) in path.gamma.iter().zip(&path.k).zip(&path.x) {
            prop_assert!((g + k - x).abs() <= 1e-9 * (1.0 + x.abs() + k.abs()));
        }
    }

    #[test]
    fn jump_overshoot_is_credited(c in case()) {
        let path = simulate(&c);
        for ev in &path.jumps {
            for i in 0..path.dim {
                prop_assert_eq!(ev.dk[i], (-(ev.x_left[i] + ev.jump[i])).max(0.0));
            }
        }
    }

    #[test]
    fn same_seed_same_path(c in case()) {
        prop_assert_eq!(simulate(&c), simulate(&c));
    }

    #[test]
    fn skorokhod_routes_agree(start in 0.0f64..2.0, steps in prop::collection::vec(-1.0f64..1.0, 1..400)) {
        let mut gamma = vec![start];
        for s in &steps {
            gamma.push(gamma.last().unwrap() + s);
        }
        let (x, k) = stepwise_projection(&gamma, 1);
        let k_sup = running_sup_regulator(&gamma, 1);
        for n in 0..gamma.len() {
            prop_assert!((k[n] - k_sup[n]).abs() < 1e-12);
            prop_assert!((x[n] - gamma[n] - k_sup[n]).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_star_is_bracketed_root(a1 in 0.1f64..20.0, frac in 0.0f64..0.99, delay in 0.0f64..10.0) {
        let a2 = a1 * frac;
        let l = solve_lambda_star(a1, a2, delay).unwrap();
        prop_assert!(l.value > 0.0 && l.value <= a1 - a2 + 1e-12);
        prop_assert!((l.value - a1 + a2 * (l.value * delay).exp()).abs() < 1e-11);
    }

    #[test]
    fn ks_statistic_is_symmetric_and_bounded(
        mut a in prop::collection::vec(-5.0f64..5.0, 1..100),
        mut b in prop::collection::vec(-5.0f64..5.0, 1..100),
    ) {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let d = ks_statistic_sorted(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, ks_statistic_sorted(&b, &a));
        prop_assert_eq!(ks_statistic_sorted(&a, &a), 0.0);
    }

    #[test]
    fn accumulator_merge_matches_sequential(xs in prop::collection::vec(-10.0f64..10.0, 2..200), cut in 1usize..199) {
        let cut = cut.min(xs.len() - 1);
        let mut all = MeanAccumulator::default();
        xs.iter().for_each(|v| all.push(*v));
        let (mut left, mut right) = (MeanAccumulator::default(), MeanAccumulator::default());
        xs[..cut].iter().for_each(|v| left.push(*v));
        xs[cut..].iter().for_each(|v| right.push(*v));
        left.merge(&right);
        prop_assert_eq!(left.count(), all.count());
        prop_assert!((left.mean() - all.mean()).abs() < 1e-12);
        prop_assert!((left.variance() - all.variance()).abs() < 1e-9);
    }
}

#[test]
fn moment_estimates_ignore_thread_count() {
    let marks = MarkMeasure::new(0.5, MarkDistribution::Constant(vec![-1.0])).unwrap();
    let mut p = LinearModelParams::deterministic(1, 3.0, 1.0, 1.0).with_marks(&marks);
    p.jump_state_gain = 0.5.into();
    p.diffusion.state = 0.5;
    let report = validate_dissipativity(&p);
    let model = build_linear_model(p).unwrap();
    let cfg = SimConfig::new(1.0, 0.0625, 3.0).with_paths(100).with_seed(4);
    let xi = InitialSegment::constant(vec![1.0]);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| moment_experiment(&cfg, &model, &marks, &xi, &report, 4).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}
