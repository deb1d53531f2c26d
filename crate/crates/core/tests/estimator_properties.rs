use fbm_mde::distances::DistanceKind;
use fbm_mde::drift::ModelSpec;
use fbm_mde::estimator::{
    contrast, grid_estimate, sgd_estimate, Contrast, Diagnostics, EstimateResult, GridSpec, SgdConfig,
};
use fbm_mde::experiment::ExperimentConfig;
use fbm_mde::fbm::{FgnSampler, HurstParameter};
use fbm_mde::simulate::{euler_constant, ObservationSet};
use proptest::prelude::*;

fn small(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        n_obs: 5000,
        n_scheme: 5000,
        distance: DistanceKind::Wasserstein { p: 2.0 },
        grid: GridSpec::spacing(0.25),
        seed,
        ..ExperimentConfig::default()
    }
}

fn diagnostics() -> Diagnostics {
    let cfg = small(0);
    let obs = cfg.observations().unwrap();
    grid_estimate(&obs, &ContrastOnePoint::config(&cfg))
        .unwrap()
        .diagnostics
}

struct ContrastOnePoint;

impl ContrastOnePoint {
    fn config(cfg: &ExperimentConfig) -> fbm_mde::estimator::ContrastConfig {
        let mut cc = cfg.contrast_config().unwrap();
        cc.grid = GridSpec::Explicit {
            points: vec![vec![2.0]],
        };
        cc
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn argmin_ignores_positive_scaling(values in prop::collection::vec(0.0f64..10.0, 1..40), c in 1e-3f64..1e3) {
        let grid: Vec<Vec<f64>> = (0..values.len()).map(|i| vec![i as f64]).collect();
        let d = diagnostics_cached();
        let a = EstimateResult::from_values(grid.clone(), values.clone(), d.clone());
        let b = EstimateResult::from_values(grid, values.iter().map(|v| v * c).collect(), d);
        prop_assert_eq!(a.argmin_index, b.argmin_index);
    }
}

fn diagnostics_cached() -> Diagnostics {
    use std::sync::OnceLock;
    static D: OnceLock<Diagnostics> = OnceLock::new();
    D.get_or_init(diagnostics).clone()
}

#[test]
fn single_point_grid_returns_it() {
    let cfg = small(1);
    let obs = cfg.observations().unwrap();
    let r = grid_estimate(&obs, &ContrastOnePoint::config(&cfg)).unwrap();
    assert_eq!(r.theta_hat, vec![2.0]);
    assert_eq!(r.contrast_values.len(), 1);
}

#[test]
fn duplicated_grid_points_do_not_move_the_estimate() {
    let cfg = small(2);
    let obs = cfg.observations().unwrap();
    let mut cc = cfg.contrast_config().unwrap();
    let base = grid_estimate(&obs, &cc).unwrap();
    let mut points = base.grid.clone();
    points.extend(base.grid.iter().step_by(3).cloned());
    points.insert(0, base.theta_hat.clone());
    cc.grid = GridSpec::Explicit { points };
    assert_eq!(grid_estimate(&obs, &cc).unwrap().theta_hat, base.theta_hat);
}

#[test]
fn estimates_are_reproducible() {
    let cfg = small(3);
    let cc = cfg.contrast_config().unwrap();
    let a = grid_estimate(&cfg.observations().unwrap(), &cc).unwrap();
    let b = grid_estimate(&cfg.observations().unwrap(), &cc).unwrap();
    assert_eq!(a.theta_hat, b.theta_hat);
    assert_eq!(a.contrast_values, b.contrast_values);
}

#[test]
fn observation_order_is_irrelevant() {
    let cfg = ExperimentConfig {
        z0: Some(vec![0.0]),
        ..small(4)
    };
    let obs = cfg.observations().unwrap();
    let mut shuffled = obs.clone();
    shuffled.values.reverse();
    let cc = cfg.contrast_config().unwrap();
    for theta in [1.0, 2.0, 3.5] {
        let a = contrast(&obs, &[theta], &cc).unwrap();
        let b = contrast(&shuffled, &[theta], &cc).unwrap();
        assert!((a - b).abs() <= 1e-12 * (1.0 + a), "{a} vs {b}");
    }
}

#[test]
fn ou_contrast_dips_at_the_truth() {
    let cfg = ExperimentConfig {
        distance: DistanceKind::Wasserstein { p: 2.0 },
        ..ExperimentConfig::default()
    };
    let obs = cfg.observations().unwrap();
    let c = Contrast::new(&obs, &cfg.contrast_config().unwrap()).unwrap();
    let (f1, f2, f3) = (
        c.eval(&[1.0]).unwrap(),
        c.eval(&[2.0]).unwrap(),
        c.eval(&[3.0]).unwrap(),
    );
    assert!(f2 < f1 && f2 < f3, "F(1)={f1} F(2)={f2} F(3)={f3}");
}

// Lipschitz constant of θ ↦ F(θ) on one frozen noise path, at two grid resolutions
#[test]
fn contrast_is_lipschitz_on_frozen_noise() {
    let cfg = small(5);
    let obs = cfg.observations().unwrap();
    let c = Contrast::new(&obs, &cfg.contrast_config().unwrap()).unwrap();
    let slope = |h: f64| {
        let grid: Vec<f64> = (0..).map(|k| 0.5 + k as f64 * h).take_while(|t| *t <= 4.0).collect();
        let vals: Vec<f64> = grid.iter().map(|t| c.eval(&[*t]).unwrap()).collect();
        vals.windows(2).map(|w| (w[1] - w[0]).abs() / h).fold(0.0, f64::max)
    };
    let (coarse, fine) = (slope(0.05), slope(0.0125));
    assert!(coarse.is_finite() && fine < 2.0 * coarse + 1e-12, "{coarse} vs {fine}");
}

// ten replications are too few to see the trend through Monte-Carlo noise
#[test]
fn longer_scheme_does_not_hurt_on_average() {
    let reps = 30;
    let errors = |n_scheme: usize| {
        (0..reps)
            .map(|seed| {
                let cfg = ExperimentConfig {
                    n_scheme,
                    distance: DistanceKind::Wasserstein { p: 2.0 },
                    seed,
                    ..ExperimentConfig::default()
                };
                let r = grid_estimate(&cfg.observations().unwrap(), &cfg.contrast_config().unwrap()).unwrap();
                (r.theta_hat[0] - 2.0).abs()
            })
            .sum::<f64>()
            / reps as f64
    };
    let (short, long) = (errors(30_000), errors(60_000));
    assert!(long <= short + 1e-12, "N=3e4: {short}, N=6e4: {long}");
}

fn sgd_base() -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSpec::Sigmoid2d { epsilon: 0.1 },
        theta0: vec![1.0],
        n_obs: 4000,
        n_scheme: 4000,
        ..ExperimentConfig::default()
    }
}

#[test]
fn sgd_stays_in_the_box_and_repeats() {
    let cfg = sgd_base();
    let obs = cfg.observations().unwrap();
    let model = cfg.model.build().unwrap();
    // a huge step scale pushes against the bounds
    let mut sc = cfg.sgd_config(5000.0, vec![0.0, 0.0]);
    sc.n_iter = 20;
    let a = sgd_estimate(model.clone(), &obs, &sc, 9).unwrap();
    assert_eq!(a.trace.len(), 21);
    assert!(a.trace.iter().all(|it| model.param_box.contains(&it.theta)));
    assert_eq!(a, sgd_estimate(model, &obs, &sc, 9).unwrap());
}

#[test]
fn sgd_fixed_point_when_scheme_reproduces_the_data() {
    let hurst = HurstParameter::new(0.3).unwrap();
    let model = ModelSpec::Sigmoid2d { epsilon: 0.1 }.build().unwrap();
    let (gamma, n, seed) = (1e-2, 3000, 17);
    let noise = FgnSampler::new(n, hurst).unwrap().sample(gamma, 2, seed).unwrap();
    let z0 = vec![0.3, -0.2];
    let path = euler_constant(&model, &[1.0], &z0, gamma, n, &noise).unwrap();
    let obs = ObservationSet::from_values(2, path.states[..n * 2].to_vec(), gamma).unwrap();
    let sc = SgdConfig {
        p: 2.0,
        gamma0: 50.0,
        minibatch: 30,
        n_iter: 10,
        theta_init: vec![1.0],
        hurst,
        scheme_step: gamma,
        n_scheme: n,
        z0: Some(z0),
        noise_seed: seed,
    };
    let r = sgd_estimate(model, &obs, &sc, 3).unwrap();
    assert!(r.trace.iter().all(|it| it.theta == vec![1.0] && it.grad_norm == 0.0));
}
