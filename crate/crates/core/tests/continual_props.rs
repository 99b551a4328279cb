mod common;

use common::{random_anchor, random_net};
use isicv::continual::{run_sequence, ContinualConfig};
use isicv::data::{build_synthetic, EncodingSpec, SyntheticSpec, Task, TaskSequence};
use isicv::training::TrainConfig;
use isicv::{compute_metrics, penalty, LifConfig, Method, ResultMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(hidden: usize, epochs: usize) -> ContinualConfig {
    let timesteps = 8;
    ContinualConfig {
        hidden,
        train: TrainConfig {
            epochs,
            batch_size: 16,
            lif: LifConfig {
                timesteps,
                ..LifConfig::default()
            },
            encoding: EncodingSpec { timesteps, gain: 1.0 },
            ..TrainConfig::default()
        },
        importance_samples: 64,
        ..ContinualConfig::default()
    }
}

fn synthetic(tasks: usize, seed: u64) -> TaskSequence {
    build_synthetic(&SyntheticSpec {
        tasks,
        dim: 32,
        train_per_class: 40,
        test_per_class: 20,
        noise: 0.1,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

#[test]
fn identical_tasks_do_not_forget() {
    let base = build_synthetic(&SyntheticSpec {
        tasks: 1,
        orthogonal: true,
        seed: 3,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let mut twin: Task = base.tasks[0].clone();
    twin.id = 1;
    let seq = TaskSequence {
        tasks: vec![base.tasks[0].clone(), twin],
    };
    let out = run_sequence(&seq, Method::None, 0.0, 0, &cfg(64, 10)).unwrap();
    let (before, after) = (out.results.get(0, 0).unwrap(), out.results.get(1, 0).unwrap());
    assert!((before - after).abs() <= 0.05, "{before} -> {after}");
}

#[test]
fn huge_lambda_freezes_the_trunk() {
    let out = run_sequence(&synthetic(2, 1), Method::IsiCv, 1e9, 0, &cfg(24, 3)).unwrap();
    assert!(out.importances[0].omega.iter().all(|&w| w > 0.0));
    assert!(out.max_abs_drift[1] < 1e-2, "max drift {}", out.max_abs_drift[1]);
}

#[test]
fn no_reg_ignores_lambda() {
    let seq = synthetic(3, 2);
    let a = run_sequence(&seq, Method::None, 0.0, 5, &cfg(16, 2)).unwrap();
    let b = run_sequence(&seq, Method::None, 1e6, 5, &cfg(16, 2)).unwrap();
    assert_eq!(a.results, b.results);
    assert_eq!(a.network, b.network);
}

#[test]
fn first_task_is_identical_for_every_method() {
    let seq = synthetic(2, 4);
    let c = cfg(16, 2);
    let first: Vec<f64> = [Method::None, Method::Ewc, Method::Si, Method::IsiCv]
        .into_iter()
        .map(|m| run_sequence(&seq, m, 1000.0, 7, &c).unwrap().results.get(0, 0).unwrap())
        .collect();
    assert!(first.windows(2).all(|w| w[0] == w[1]), "{first:?}");
}

#[test]
fn drift_does_not_grow_with_lambda() {
    let seq = synthetic(2, 6);
    let drift: Vec<f64> = [10.0, 100.0, 1000.0]
        .into_iter()
        .map(|l| run_sequence(&seq, Method::IsiCv, l, 0, &cfg(24, 3)).unwrap().drift[1])
        .collect();
    assert!(drift.windows(2).all(|w| w[1] <= w[0]), "{drift:?}");
}

#[test]
fn runs_are_deterministic() {
    let seq = synthetic(2, 8);
    let a = run_sequence(&seq, Method::Si, 1000.0, 3, &cfg(16, 2)).unwrap();
    let b = run_sequence(&seq, Method::Si, 1000.0, 3, &cfg(16, 2)).unwrap();
    assert_eq!(a.results, b.results);
    assert_eq!(a.importances, b.importances);
    assert_eq!(a.network, b.network);
}

#[test]
fn metrics_worked_examples() {
    let r = ResultMatrix::from_rows(&[vec![0.9], vec![0.8, 0.95]]).unwrap();
    let m = compute_metrics(&r).unwrap();
    assert!((m.aa - 0.875).abs() < 1e-12);
    assert!((m.bwt + 0.1).abs() < 1e-12);
    assert!((m.af - 0.1).abs() < 1e-12);

    let flat = ResultMatrix::from_rows(&[vec![0.9], vec![0.9, 0.7], vec![0.9, 0.7, 0.8]]).unwrap();
    let m = compute_metrics(&flat).unwrap();
    assert_eq!((m.bwt, m.af), (0.0, 0.0));

    let up = ResultMatrix::from_rows(&[vec![0.9], vec![0.95, 0.8]]).unwrap();
    let m = compute_metrics(&up).unwrap();
    assert!((m.bwt - 0.05).abs() < 1e-12);
    assert_eq!(m.af, 0.0);

    let mut partial = ResultMatrix::new(2);
    partial.set(0, 0, 0.5).unwrap();
    assert!(compute_metrics(&partial).is_err());
}

fn matrix_strategy(monotone: bool) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..6).prop_flat_map(move |k| {
        proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, k), k).prop_map(move |raw| {
            let mut rows: Vec<Vec<f64>> = (0..k).map(|l| raw[l][..=l].to_vec()).collect();
            if monotone {
                for l in 1..k {
                    let (done, rest) = rows.split_at_mut(l);
                    for (cur, prev) in rest[0].iter_mut().zip(&done[l - 1]) {
                        *cur = cur.min(*prev);
                    }
                }
            }
            rows
        })
    })
}

proptest! {
    #[test]
    fn metric_ranges(rows in matrix_strategy(false)) {
        let m = compute_metrics(&ResultMatrix::from_rows(&rows).unwrap()).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.aa));
        prop_assert!(m.af >= 0.0);
    }

    #[test]
    fn monotone_forgetting_bounds_bwt(rows in matrix_strategy(true)) {
        let m = compute_metrics(&ResultMatrix::from_rows(&rows).unwrap()).unwrap();
        prop_assert!(m.af >= (-m.bwt).max(0.0) - 1e-12);
    }

    #[test]
    fn penalty_is_non_negative_and_zero_at_anchor(seed in any::<u64>(), lambda in 0.0f64..1e4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, 4, 5, 2, 1);
        let anchor = random_anchor(&mut rng, &net, lambda);
        prop_assert!(penalty(&net, &anchor) >= 0.0);
        let mut at = net.clone();
        at.w1 = anchor.w1.clone();
        at.b1 = anchor.b1.clone();
        prop_assert_eq!(penalty(&at, &anchor), 0.0);
    }
}
