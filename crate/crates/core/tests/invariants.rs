use proptest::prelude::*;
use serde_json::json;

use r2r_core::controllers::{build_controller, ControllerConfig, ControllerKind};
use r2r_core::estimation::RatioMoments;
use r2r_core::harness::{mse, run_experiment, total_cost, ExperimentConfig};
use r2r_core::process_models::{simulate_path, ProcessConfig};
use r2r_core::rng::derive_seed;
use r2r_core::theory::RatioDistribution;

fn process(value: serde_json::Value) -> ProcessConfig {
    serde_json::from_value(value).expect("valid process config")
}

fn families() -> Vec<(ProcessConfig, Vec<f64>)> {
    vec![
        (
            process(json!({
                "family": "linear_cmp",
                "a": [-138.21, -627.32],
                "b": [[5.018, -0.665, 16.34, 0.845], [13.67, 19.95, 27.52, 5.25]],
                "delta": [-17.0, -1.5],
                "lambda": [[665.64, 0.0], [0.0, 5.29]],
                "y0": [1700.0, 150.0]
            })),
            vec![1700.0, 150.0],
        ),
        (
            process(
                json!({"family": "arima", "a": 91.7, "b": -1.8, "phi": 0.6, "theta": 0.5, "sigma": 1.0}),
            ),
            vec![90.0],
        ),
        (
            process(json!({"family": "wiener", "y0": 90.0, "v": 0.5, "sigma": 3.2})),
            vec![90.0],
        ),
        (
            process(
                json!({"family": "gamma", "alpha": 0.36, "beta": 0.64, "gamma_beta_is_rate": false, "y0": 90.0}),
            ),
            vec![90.0],
        ),
    ]
}

fn ewma_experiment(replications: usize, seed: u64) -> ExperimentConfig {
    serde_json::from_value(json!({
        "process": {"family": "arima", "a": 91.7, "b": -1.8, "phi": 0.6, "theta": 0.5, "sigma": 1.0, "horizon": 30},
        "controller": "ewma",
        "n_learning_paths": 3,
        "replications": replications,
        "master_seed": seed,
        "y_star": [90.0]
    }))
    .unwrap()
}

#[test]
fn every_family_simulates_its_full_horizon() {
    for (cfg, y_star) in families() {
        let mut model = cfg.build().unwrap();
        let mut policy = build_controller(
            ControllerKind::Ewma,
            &ControllerConfig::default(),
            &cfg,
            &y_star,
            1,
            0,
        )
        .unwrap();
        let path = simulate_path(model.as_mut(), policy.as_mut(), 11).unwrap();
        assert_eq!(path.horizon(), cfg.horizon(), "{}", cfg.family());
        for (t, p) in path.periods.iter().enumerate() {
            assert_eq!(p.t, t + 1);
            assert_eq!(p.y.len(), y_star.len());
            assert!(p.y.iter().chain(p.u.iter()).all(|v| v.is_finite()));
        }
    }
}

#[test]
fn oracle_beats_no_control_on_drifting_processes() {
    for (cfg, y_star) in families() {
        let mean_mse = |kind| {
            let mut model = cfg.build().unwrap();
            let mut policy =
                build_controller(kind, &ControllerConfig::default(), &cfg, &y_star, 1, 0).unwrap();
            (0..40u64)
                .map(|s| {
                    let path = simulate_path(model.as_mut(), policy.as_mut(), s).unwrap();
                    mse(&path, &y_star).unwrap()
                })
                .sum::<f64>()
                / 40.0
        };
        let (oracle, none) = (
            mean_mse(ControllerKind::Oracle),
            mean_mse(ControllerKind::NoControl),
        );
        assert!(
            oracle < none,
            "{}: oracle {oracle} vs no control {none}",
            cfg.family()
        );
    }
}

#[test]
fn replications_do_not_depend_on_how_many_run() {
    let one = run_experiment(&ewma_experiment(1, 42)).unwrap();
    let five = run_experiment(&ewma_experiment(5, 42)).unwrap();
    assert_eq!(one.replications[0], five.replications[0]);
    assert_ne!(
        five.replications[0].path_costs,
        five.replications[1].path_costs
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn paths_are_a_pure_function_of_the_seed(seed in any::<u64>(), family in 0usize..4) {
        let (cfg, y_star) = families().swap_remove(family);
        let run = || {
            let mut model = cfg.build().unwrap();
            let mut policy = build_controller(
                ControllerKind::NoControl, &ControllerConfig::default(), &cfg, &y_star, 1, 0,
            ).unwrap();
            simulate_path(model.as_mut(), policy.as_mut(), seed).unwrap()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn cost_is_horizon_times_mse(seed in any::<u64>(), family in 0usize..4) {
        let (cfg, y_star) = families().swap_remove(family);
        let mut model = cfg.build().unwrap();
        let mut policy = build_controller(
            ControllerKind::Ewma, &ControllerConfig::default(), &cfg, &y_star, 1, 0,
        ).unwrap();
        let path = simulate_path(model.as_mut(), policy.as_mut(), seed).unwrap();
        let cost = total_cost(&path, &y_star).unwrap();
        let m = mse(&path, &y_star).unwrap();
        prop_assert!(cost >= 0.0);
        prop_assert!((cost - m * path.horizon() as f64).abs() <= 1e-9 * cost.max(1.0));
    }

    #[test]
    fn derived_seeds_separate_indices_and_tags(master in any::<u64>(), i in 0u64..1000) {
        prop_assert_ne!(derive_seed(master, i, "replication"), derive_seed(master, i + 1, "replication"));
        prop_assert_ne!(derive_seed(master, i, "replication"), derive_seed(master, i, "evaluation"));
        prop_assert_eq!(derive_seed(master, i, "ks"), derive_seed(master, i, "ks"));
    }

    #[test]
    fn ratio_cdf_is_a_distribution_function(
        mu1 in -5.0f64..5.0,
        mu2 in prop_oneof![-5.0f64..-0.2, 0.2f64..5.0],
        sigma1 in 0.2f64..3.0,
        sigma2 in 0.2f64..3.0,
        rho in -0.9f64..0.9,
    ) {
        let m = RatioMoments::new(mu1, mu2, sigma1, sigma2, rho * sigma1 * sigma2).unwrap();
        let dist = RatioDistribution::new(m).unwrap();
        let mut prev = 0.0;
        for k in -40..=40 {
            let u = k as f64 * 0.5;
            let f = dist.cdf(u);
            prop_assert!((0.0..=1.0).contains(&f), "F({}) = {}", u, f);
            prop_assert!(f >= prev - 1e-9, "F not monotone at {}: {} < {}", u, f, prev);
            prop_assert!(dist.pdf(u) >= 0.0);
            prev = f;
        }
    }
}
