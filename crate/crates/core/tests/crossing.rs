use igbm::boundary::{boundary_check, BoundaryProperty};
use igbm::moments::conditional_moments_scheme;
use igbm::montecarlo::{
    crossing_from_passages, crossing_probability, ensemble_moments, first_passage_steps,
    CrossingConfig,
};
use igbm::{ModelParams, SchemeKind};

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
}

#[test]
fn euler_crosses_more_often_than_strang_in_the_exit_regime() {
    let p = ModelParams::new(-0.5, 5.0, 5.0, 1.0).unwrap();
    let cfg = CrossingConfig::new(0.5).unwrap();
    let e = crossing_probability(SchemeKind::EulerMaruyama, &p, 0.025, &cfg, 100_000, 42).unwrap();
    let s = crossing_probability(SchemeKind::Strang1, &p, 0.025, &cfg, 100_000, 42).unwrap();
    let joint = (e.stderr.powi(2) + s.stderr.powi(2)).sqrt();
    assert!(e.value - s.value > 3.0 * joint, "E {e:?} S1 {s:?}");
}

#[test]
fn negative_drift_lets_splitting_schemes_exit() {
    let p = ModelParams::new(-1.0, 5.0, 5.0, 1.0).unwrap();
    let cfg = CrossingConfig::new(0.5).unwrap();
    for s in SchemeKind::SPLITTING {
        let est = crossing_probability(s, &p, 0.01, &cfg, 20_000, 1).unwrap();
        assert!(est.value > 0.0, "{s}");
    }
}

#[test]
fn crossing_results_do_not_depend_on_worker_count() {
    let p = ModelParams::new(0.0, 5.0, 5.0, 1.0).unwrap();
    let run = |threads| {
        pool(threads)
            .install(|| first_passage_steps(SchemeKind::Milstein, &p, 0.05, 10, 30_000, 9).unwrap())
    };
    assert_eq!(run(1), run(3));
    let check = |threads| {
        pool(threads).install(|| {
            boundary_check(
                SchemeKind::EulerMaruyama,
                BoundaryProperty::Unattainable,
                &p,
                0.05,
                20,
                10_000,
                9,
            )
            .unwrap()
        })
    };
    assert_eq!(check(1), check(3));
}

#[test]
fn crossing_probability_grows_with_the_horizon() {
    let p = ModelParams::new(0.25, 5.0, 5.0, 1.0).unwrap();
    let passages =
        first_passage_steps(SchemeKind::EulerMaruyama, &p, 0.025, 40, 20_000, 5).unwrap();
    let curve: Vec<f64> = (0..=40)
        .map(|n| crossing_from_passages(&passages, n).value)
        .collect();
    assert!(curve.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(curve[0], 0.0);
    assert!(curve[40] > 0.0);
}

#[test]
fn estimators_cover_the_closed_form_across_seeds() {
    let p = ModelParams::new(1.0, 5.0, 0.2, 10.0).unwrap();
    let (mean, var) = conditional_moments_scheme(SchemeKind::Strang2, &p, 0.5, 30).unwrap();
    let mut covered = 0;
    for seed in 0..20 {
        let est =
            ensemble_moments(SchemeKind::Strang2, &p, 0.5, &[30], 20_000, 1000 + seed).unwrap();
        if est[0].0.covers(mean, 4.0) && est[0].1.covers(var, 4.0) {
            covered += 1;
        }
    }
    assert!(covered >= 19, "{covered}/20");
}

#[test]
fn doubling_paths_shrinks_the_error_bars() {
    let p = ModelParams::new(1.0, 5.0, 0.2, 10.0).unwrap();
    let small = ensemble_moments(SchemeKind::Milstein, &p, 0.5, &[30], 10_000, 4).unwrap();
    let large = ensemble_moments(SchemeKind::Milstein, &p, 0.5, &[30], 20_000, 4).unwrap();
    let ratio = small[0].0.stderr / large[0].0.stderr;
    assert!((ratio - 2f64.sqrt()).abs() < 0.1, "{ratio}");
}
