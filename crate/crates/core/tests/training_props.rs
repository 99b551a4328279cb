mod common;

use common::{random_net, random_stimulus};
use isicv::data::{build_synthetic, EncodingSpec, SyntheticSpec};
use isicv::snn::forward_batch;
use isicv::training::{
    adam_step, backward_batch, evaluate, train_task, AdamConfig, GradientSet, OptimizerState, SurrogateConfig,
    TrainConfig, TrainHooks,
};
use isicv::{LifConfig, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(epochs: usize, timesteps: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        lif: LifConfig {
            timesteps,
            ..LifConfig::default()
        },
        encoding: EncodingSpec { timesteps, gain: 1.0 },
        ..TrainConfig::default()
    }
}

#[test]
fn small_step_rarely_increases_loss() {
    let lif = LifConfig {
        timesteps: 6,
        ..LifConfig::default()
    };
    let sur = SurrogateConfig::default();
    let mut ok = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let net0 = random_net(&mut rng, 5, 6, 3, 1);
        let xs: Vec<_> = (0..12).map(|_| random_stimulus(&mut rng, 5, 6, false)).collect();
        let ys: Vec<usize> = (0..12).map(|_| rng.gen_range(0..3)).collect();
        let before = backward_batch(&forward_batch(&net0, &xs, 0, &lif).unwrap(), &ys, &net0, &lif, &sur).unwrap();
        let mut net = net0.clone();
        let mut opt = OptimizerState::new(AdamConfig { lr: 1e-4, ..AdamConfig::default() }, &net);
        adam_step(&mut net, &before.grads, &mut opt).unwrap();
        let after = backward_batch(&forward_batch(&net, &xs, 0, &lif).unwrap(), &ys, &net, &lif, &sur).unwrap();
        ok += usize::from(after.loss <= before.loss);
    }
    assert!(ok >= 95, "loss decreased or held in only {ok}/100 trials");
}

#[test]
fn training_one_task_leaves_other_heads_untouched() {
    let seq = build_synthetic(&SyntheticSpec {
        tasks: 3,
        dim: 20,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = Network::new(20, 16, 2, &mut rng);
    for _ in 0..3 {
        net.add_head(&mut rng);
    }
    let before = net.clone();
    train_task(&mut net, &seq.tasks[1].train, 1, TrainHooks::default(), &config(2, 5), 9).unwrap();
    assert_eq!(net.heads[0], before.heads[0]);
    assert_eq!(net.heads[2], before.heads[2]);
    assert_ne!(net.heads[1], before.heads[1]);
    assert_ne!(net.w1, before.w1);
}

#[test]
fn zero_epochs_is_a_no_op_and_seeds_reproduce() {
    let seq = build_synthetic(&SyntheticSpec::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = Network::new(64, 12, 2, &mut rng);
    net.add_head(&mut rng);
    let start = net.clone();
    let log = train_task(&mut net, &seq.tasks[0].train, 0, TrainHooks::default(), &config(0, 5), 0).unwrap();
    assert!(log.epochs.is_empty());
    assert_eq!(net, start);

    let mut a = start.clone();
    let mut b = start.clone();
    train_task(&mut a, &seq.tasks[0].train, 0, TrainHooks::default(), &config(2, 5), 42).unwrap();
    train_task(&mut b, &seq.tasks[0].train, 0, TrainHooks::default(), &config(2, 5), 42).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tiny_separable_task_is_learned() {
    let seq = build_synthetic(&SyntheticSpec {
        tasks: 1,
        dim: 16,
        train_per_class: 10,
        test_per_class: 10,
        orthogonal: true,
        seed: 4,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let task = &seq.tasks[0];
    assert_eq!(task.train.len(), 20);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = Network::new(16, 16, 2, &mut rng);
    net.add_head(&mut rng);
    let mut cfg = config(10, 8);
    cfg.batch_size = 4;
    cfg.adam.lr = 1e-2;
    train_task(&mut net, &task.train, 0, TrainHooks::default(), &cfg, 0).unwrap();
    assert_eq!(evaluate(&net, &task.train, 0, &cfg.lif, &cfg.encoding).unwrap(), 1.0);
}

#[test]
fn orthogonal_prototypes_reach_high_test_accuracy() {
    let seq = build_synthetic(&SyntheticSpec {
        tasks: 1,
        orthogonal: true,
        noise: 0.05,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let task = &seq.tasks[0];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut net = Network::new(64, 32, 2, &mut rng);
    net.add_head(&mut rng);
    let cfg = config(10, 10);
    train_task(&mut net, &task.train, 0, TrainHooks::default(), &cfg, 1).unwrap();
    let acc = evaluate(&net, &task.test, 0, &cfg.lif, &cfg.encoding).unwrap();
    assert!(acc >= 0.99, "test accuracy {acc}");
}

#[test]
fn equal_gradients_give_equal_updates() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut net = random_net(&mut rng, 4, 3, 2, 1);
    let before = net.clone();
    let mut g = GradientSet::zeros(&net, 0);
    g.w1.fill(0.37);
    let mut opt = OptimizerState::new(AdamConfig::default(), &net);
    let delta = adam_step(&mut net, &g, &mut opt).unwrap();
    let first = delta.w1[[0, 0]];
    assert!(delta.w1.iter().all(|&d| (d - first).abs() < 1e-15));
    assert!((first + 1e-3).abs() < 1e-9);
    assert_eq!(&net.w1 - &before.w1, delta.w1);
}
