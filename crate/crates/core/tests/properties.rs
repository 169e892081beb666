use proptest::prelude::*;
use rand::Rng;
use rayon::prelude::*;

use rhirl::cost::{CostParams, StateCost};
use rhirl::demos::{generate_demos, DemoSet};
use rhirl::dynamics::{sample_control_sequence, step, ControlSequence, ControlVec, NoiseSpec};
use rhirl::envs::{make_double_integrator, make_env, ENV_NAMES};
use rhirl::eval::{return_ratio, shared_edges, MarginalEstimate};
use rhirl::mppi::{compute_weights, ControllerConfig, RolloutBatch};
use rhirl::rng::RngStream;
use rhirl::trainer::extract_windows;

fn batch_of(costs: Vec<f64>, terms: Vec<f64>) -> RolloutBatch {
    let m = costs.len();
    RolloutBatch {
        sequences: vec![ControlSequence::zeros(1, 1); m],
        trajectories: vec![Vec::new(); m],
        state_costs: costs,
        control_terms: terms,
        weights: Vec::new(),
        s_min: f64::NAN,
        env_steps: 0,
    }
}

fn small_demos() -> &'static DemoSet {
    static DEMOS: std::sync::OnceLock<DemoSet> = std::sync::OnceLock::new();
    DEMOS.get_or_init(|| {
        let env = make_double_integrator().with_horizon(15);
        let mut ctrl = ControllerConfig::double_integrator();
        ctrl.samples = 8;
        ctrl.horizon = 5;
        generate_demos(&env, 0.0, 3, &ctrl, 4, f64::NEG_INFINITY).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_sequences_are_finite_and_inside_the_box(
        env_idx in 0usize..3,
        k in 1usize..30,
        beta in 1e-3f64..50.0,
        explore in 0.0f64..=1.0,
        nominal_scale in 0.0f64..20.0,
        seed in any::<u64>(),
    ) {
        let env = make_env(ENV_NAMES[env_idx]).unwrap();
        let m = env.model.control_dim();
        let bounds = env.model.control_box();
        let mut rng = RngStream::new(seed, 1).rng();
        let flat: Vec<f64> = (0..k * m).map(|_| rng.gen_range(-1.0..1.0) * nominal_scale).collect();
        let nominal = ControlSequence::from_flat(m, flat).unwrap();
        let factor = NoiseSpec::beta(beta).unwrap().factor(m).unwrap();
        let seq = sample_control_sequence(&nominal, &factor, explore, bounds, &mut rng).unwrap();
        prop_assert_eq!(seq.horizon(), k);
        prop_assert!(seq.is_finite());
        for row in seq.iter() {
            prop_assert!(bounds.contains(row));
        }
    }

    #[test]
    fn stepping_is_pure_and_finite(env_idx in 0usize..3, seed in any::<u64>()) {
        let env = make_env(ENV_NAMES[env_idx]).unwrap();
        let mut rng = RngStream::new(seed, 2).rng();
        let x = env.sample_initial(&mut rng);
        let v = ControlVec(env.model.control_box().center());
        let a = step(env.model.as_ref(), &x, &v).unwrap();
        let b = step(env.model.as_ref(), &x, &v).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.dim(), env.spec.state_dim);
        prop_assert!(a.as_slice().iter().all(|s| s.is_finite()));
    }

    #[test]
    fn streams_do_not_depend_on_scheduling(seed in any::<u64>(), n in 1usize..64) {
        let draw = |j: usize| -> Vec<u64> {
            let mut rng = RngStream::derive(seed, &[3, j as u64]).rng();
            (0..4).map(|_| rng.gen()).collect()
        };
        let sequential: Vec<_> = (0..n).map(draw).collect();
        let parallel: Vec<_> = (0..n).into_par_iter().rev().map(draw).collect::<Vec<_>>().into_iter().rev().collect();
        prop_assert_eq!(sequential, parallel);
    }

    #[test]
    fn ground_truth_costs_are_bounded_below(env_idx in 0usize..3, seed in any::<u64>(), scale in 0.0f64..100.0) {
        let env = make_env(ENV_NAMES[env_idx]).unwrap();
        let mut rng = RngStream::new(seed, 3).rng();
        let x0 = env.sample_initial(&mut rng);
        let x: Vec<f64> = x0.as_slice().iter().map(|v| v * (1.0 + scale * rng.gen::<f64>())).collect();
        prop_assert!(env.cost.state_cost(&x) >= 0.0);
    }

    #[test]
    fn cost_gradient_is_finite_with_consistent_layout(
        input in 1usize..5,
        h1 in 1usize..12,
        h2 in 1usize..12,
        seed in any::<u64>(),
        x in prop::collection::vec(-50.0f64..50.0, 5),
    ) {
        let params = CostParams::init_uniform(input, &[h1, h2], RngStream::new(seed, 4));
        let shapes = params.shapes().to_vec();
        let expected: usize = shapes.iter().map(|s| s.rows * s.cols + s.rows).sum();
        prop_assert_eq!(params.len(), expected);
        let rebuilt = CostParams::from_flat(shapes, params.as_flat().to_vec()).unwrap();
        prop_assert_eq!(&rebuilt, &params);
        let eval = params.g_backward(&x[..input]).unwrap();
        prop_assert!(eval.value.is_finite());
        prop_assert_eq!(eval.value, params.g(&x[..input]).unwrap());
        prop_assert!(eval.grad.iter().all(|g| g.is_finite()));
        prop_assert_eq!(eval.grad.len(), params.len());
    }

    #[test]
    fn weights_are_a_distribution(
        costs in prop::collection::vec(-1e6f64..1e6, 1..40),
        lambda in 1e-3f64..100.0,
        term_scale in 0.0f64..10.0,
    ) {
        let terms: Vec<f64> = costs.iter().enumerate().map(|(i, _)| term_scale * ((i as f64).sin())).collect();
        let mut batch = batch_of(costs.clone(), terms);
        compute_weights(&mut batch, lambda).unwrap();
        prop_assert_eq!(batch.weights.len(), costs.len());
        prop_assert!(batch.weights.iter().all(|w| *w >= 0.0));
        let sum: f64 = rhirl::cost::compensated_sum(batch.weights.iter().copied());
        prop_assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn controller_validation_follows_its_contract(
        k in 0usize..40,
        m in 0usize..10,
        lambda in -1.0f64..1.0,
    ) {
        let mut cfg = ControllerConfig::pendulum();
        cfg.horizon = k;
        cfg.samples = m;
        cfg.lambda = lambda;
        cfg.smoothing = rhirl::smoothing::Smoothing::None;
        prop_assert_eq!(cfg.validate().is_ok(), k >= 1 && m >= 2 && lambda > 0.0);
    }

    #[test]
    fn windows_start_at_t_and_are_at_most_k_plus_one(t in 0usize..15, k in 1usize..25, n in 1usize..8, seed in any::<u64>()) {
        let demos = small_demos();
        let mut rng = RngStream::new(seed, 5).rng();
        let batch = extract_windows(demos, t, k, n, &mut rng).unwrap();
        prop_assert_eq!(batch.windows.len(), n);
        for w in &batch.windows {
            prop_assert_eq!(w.len(), (k + 1).min(15 - t));
            prop_assert!(demos.trajectories.iter().any(|d| d.state(t) == w.state(0)));
        }
    }

    #[test]
    fn ratio_is_clipped_and_monotone(expert in -1e4f64..1e4, a in -1e5f64..1e5, b in -1e5f64..1e5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (rl, rh) = (return_ratio(lo, expert), return_ratio(hi, expert));
        prop_assert!(rl >= 0.0 && rh >= 0.0);
        prop_assert!(rl <= rh);
    }

    #[test]
    fn histogram_masses_sum_to_one(
        pts in prop::collection::vec((-10.0f64..10.0, -3.0f64..3.0), 1..400),
        bins in 1usize..12,
    ) {
        let xs: Vec<Vec<f64>> = pts.iter().map(|(a, b)| vec![*a, *b]).collect();
        let edges = shared_edges(&[&xs], &[0, 1], bins).unwrap();
        let h = MarginalEstimate::from_samples(&xs, &[0, 1], edges).unwrap();
        prop_assert!((h.masses.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert_eq!(h.samples, xs.len());
    }
}

#[test]
fn demos_hold_states_of_length_t() {
    let demos = small_demos();
    for d in &demos.trajectories {
        assert_eq!(d.len(), 15);
        assert_eq!(d.dim(), 2);
    }
    let round = DemoSet::from_bytes(&demos.to_bytes().unwrap()).unwrap();
    assert_eq!(&round, demos);
}
