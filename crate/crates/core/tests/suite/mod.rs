#![allow(dead_code)]

//! Fast invariant checks shared by the `properties` target and the
//! acceptance run (which times the whole suite).

use fedrobust_core::attacks::{attack_batch, bim, fgsm, pgd, run_attack, AttackConfig, AttackFamily};
use fedrobust_core::data::idx::{encode_idx, parse_idx, IdxArray, IdxData};
use fedrobust_core::data::{generate_synthetic_tabular, train_test_split, MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS};
use fedrobust_core::eval::{evaluate, Tags};
use fedrobust_core::federated::{fedavg, partition_dataset, run_training, FederatedConfig, PartitionScheme};
use fedrobust_core::nn::activation::alpha_dropout;
use fedrobust_core::nn::train::train_centralized;
use fedrobust_core::nn::{selu, ArchConfig, LayerSpec, Mode, Model, ModelParams, ModelSpec, SgdConfig};
use fedrobust_core::{rng, NoiseConfig, Tensor};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::common;

pub const CHECKS: [(&str, fn()); 8] = [
    ("gradient finite differences", gradient_finite_differences),
    ("selu fixed point", selu_fixed_point),
    ("attack budget", attack_budget),
    ("attack equivalence", attack_equivalence),
    ("fedavg permutation invariance", fedavg_permutation_invariance),
    ("centralized equivalence", centralized_equivalence),
    ("idx round trip", idx_round_trip),
    ("seed determinism", seed_determinism),
];

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn arch() -> ArchConfig {
    ArchConfig { filters: (2, 3), kernel: 3, pool: 2, dropout_rate: 0.2 }
}

fn small_dipsen(seed: u64) -> Model {
    let spec = ModelSpec::dipsen([12, 12, 1], 3, &arch(), &NoiseConfig::default()).unwrap();
    Model::init(spec, &mut rng::stream(seed)).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-7)
}

/// Central differences over every parameter and input coordinate, with the
/// noise and dropout streams reset to the same seed for each pass.
pub fn check_gradients(model: &Model, x: &Tensor, y: &[usize], mode: Mode) {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    let seed = 77;
    let (_, grads) = model.backward(x, y, mode, &mut rng::stream(seed)).unwrap();
    let flat = model.params.to_flat();
    let analytic = grads.params.to_flat();
    let loss_at = |p: &[f64]| {
        let m = Model::new(model.spec.clone(), model.params.with_flat(p).unwrap()).unwrap();
        m.loss(x, y, mode, &mut rng::stream(seed)).unwrap()
    };
    let mut worst = 0.0f64;
    for j in 0..flat.len() {
        let mut p = flat.clone();
        p[j] += H;
        let up = loss_at(&p);
        p[j] -= 2.0 * H;
        let down = loss_at(&p);
        worst = worst.max(rel_err(analytic[j], (up - down) / (2.0 * H)));
    }
    assert!(worst <= TOL, "parameter gradient relative error {worst}");

    let gx = grads.input.unwrap();
    let mut worst = 0.0f64;
    for j in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[j] += H;
        let up = model.loss(&xp, y, mode, &mut rng::stream(seed)).unwrap();
        xp.data_mut()[j] -= 2.0 * H;
        let down = model.loss(&xp, y, mode, &mut rng::stream(seed)).unwrap();
        worst = worst.max(rel_err(gx.data()[j], (up - down) / (2.0 * H)));
    }
    assert!(worst <= TOL, "input gradient relative error {worst}");
}

fn inputs(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::stream(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(0.05..0.95)).collect()).unwrap()
}

pub fn gradient_finite_differences() {
    let dipsen = small_dipsen(1);
    check_gradients(&dipsen, &inputs(&[3, 12, 12, 1], 2), &[0, 2, 1], Mode::Train);
    let noisy = ModelSpec::dipsen([12, 12, 1], 4, &arch(), &NoiseConfig { sigma: 1.0, ..Default::default() }).unwrap();
    let noisy = Model::init(noisy, &mut rng::stream(3)).unwrap();
    check_gradients(&noisy, &inputs(&[2, 12, 12, 1], 4), &[3, 1], Mode::Infer);
    let cnn = Model::init(ModelSpec::cnn([12, 12, 2], 3, &arch()).unwrap(), &mut rng::stream(5)).unwrap();
    check_gradients(&cnn, &inputs(&[2, 12, 12, 2], 6), &[1, 0], Mode::Train);
    let ragged = ModelSpec::new(vec![
        LayerSpec::Input { height: 7, width: 5, channels: 1 },
        LayerSpec::Conv2D { filters: 2, kernel: 2 },
        LayerSpec::Selu,
        LayerSpec::MaxPool2D { pool: 2 },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 4 },
        LayerSpec::Selu,
        LayerSpec::Dense { units: 3 },
        LayerSpec::Softmax,
    ])
    .unwrap();
    let ragged = Model::init(ragged, &mut rng::stream(7)).unwrap();
    check_gradients(&ragged, &inputs(&[3, 7, 5, 1], 8), &[2, 2, 0], Mode::Train);
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
}

/// Standard-normal inputs stay at mean 0, variance 1 through SELU and
/// through SELU followed by alpha dropout.
pub fn selu_fixed_point() {
    let mut r = rng::stream(11);
    let n = 1_000_000;
    let ys: Vec<f64> = (0..n).map(|_| selu(StandardNormal.sample(&mut r))).collect();
    let (m, v) = mean_var(&ys);
    assert!(m.abs() <= 0.02 && (v - 1.0).abs() <= 0.05, "selu: mean {m}, var {v}");
    let (dropped, _) = alpha_dropout(&Tensor::new(vec![n], ys).unwrap(), 0.1, Mode::Train, &mut r).unwrap();
    let (m, v) = mean_var(dropped.data());
    assert!(m.abs() <= 0.02 && (v - 1.0).abs() <= 0.05, "selu + alpha dropout: mean {m}, var {v}");
}

pub fn attack_budget() {
    let strategy = (
        prop_oneof![Just(AttackFamily::Fgsm), Just(AttackFamily::Bim), Just(AttackFamily::Pgd)],
        0.0f64..0.6,
        1usize..5,
        0.1f64..1.0,
        any::<bool>(),
        any::<u64>(),
    );
    runner(24)
        .run(&strategy, |(family, eps, iterations, step_frac, random_start, seed)| {
            let model = small_dipsen(seed % 7);
            let x = common::uniform(&[2, 12, 12, 1], seed);
            let cfg = AttackConfig {
                iterations,
                step_size: Some((eps * step_frac).max(1e-9)),
                random_start,
                ..AttackConfig::new(family, eps)
            };
            let adv = run_attack(&model, &x, &[0, 2], &cfg, seed).unwrap();
            for (a, o) in adv.data().iter().zip(x.data()) {
                prop_assert!((a - o).abs() <= eps + 1e-12);
                prop_assert!((0.0..=1.0).contains(a));
            }
            Ok(())
        })
        .unwrap();
}

/// FGSM, one BIM step of size ε, and one PGD step without random start
/// coincide exactly.
pub fn attack_equivalence() {
    let model = small_dipsen(1);
    let x = common::uniform(&[4, 12, 12, 1], 2);
    let y = [0, 1, 2, 1];
    for eps in [0.05, 0.3] {
        let base = AttackConfig {
            iterations: 1,
            step_size: Some(eps),
            random_start: false,
            ..AttackConfig::new(AttackFamily::Fgsm, eps)
        };
        let f = fgsm(&model, &x, &y, &base, 9).unwrap();
        let b = bim(&model, &x, &y, &AttackConfig { family: AttackFamily::Bim, ..base }, 9).unwrap();
        let p = pgd(&model, &x, &y, &AttackConfig { family: AttackFamily::Pgd, ..base }, 9).unwrap();
        assert_eq!(f, b);
        assert_eq!(f, p);
        assert!(f.max_abs_diff(&x).unwrap() > 0.0);
    }
}

fn flat_params(v: Vec<f64>) -> ModelParams {
    let n = v.len();
    ModelParams { layers: vec![vec![Tensor::new(vec![n], v).unwrap()], vec![]] }
}

pub fn fedavg_permutation_invariance() {
    let strategy = (
        prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 5), 1..8),
        prop::collection::vec(0.1f64..10.0, 8),
        any::<u64>(),
    );
    runner(64)
        .run(&strategy, |(sets, weights, seed)| {
            let updates: Vec<ModelParams> = sets.into_iter().map(flat_params).collect();
            let w = &weights[..updates.len()];
            let mut order: Vec<usize> = (0..updates.len()).collect();
            rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng::stream(seed));
            let permuted: Vec<ModelParams> = order.iter().map(|&i| updates[i].clone()).collect();
            let pw: Vec<f64> = order.iter().map(|&i| w[i]).collect();
            prop_assert_eq!(fedavg(&updates, None).unwrap(), fedavg(&permuted, None).unwrap());
            prop_assert_eq!(fedavg(&updates, Some(w)).unwrap(), fedavg(&permuted, Some(&pw)).unwrap());
            let copies = vec![updates[0].clone(); 1 + (seed % 9) as usize];
            prop_assert_eq!(&fedavg(&copies, None).unwrap(), &updates[0]);
            Ok(())
        })
        .unwrap();
}

/// One client holding everything, selected every round, reproduces
/// centralized training bit for bit.
pub fn centralized_equivalence() {
    let train = common::noise_dataset(90, 12, 3, 1);
    let test = common::noise_dataset(10, 12, 3, 2);
    let spec = ModelSpec::dipsen([12, 12, 1], 3, &arch(), &NoiseConfig::default()).unwrap();
    let cfg = FederatedConfig { num_clients: 1, fraction: 1.0, rounds: 3, seed: 17, ..Default::default() };
    let (fed, logs) = run_training(&cfg, &spec, &train, &test, &NoiseConfig::default(), |_| {}).unwrap();
    let sgd = SgdConfig { lr: cfg.lr, batch_size: cfg.local_batch_size };
    let central = train_centralized(&spec, &train, 3, &sgd, 17, |_, _, _| Ok(())).unwrap();
    assert_eq!(fed.params, central.params);
    assert_eq!(logs.len(), 3);
}

pub fn idx_round_trip() {
    let strategy = (prop::collection::vec(1usize..5, 1..4), prop::collection::vec(any::<u8>(), 64), prop::collection::vec(-1e300f64..1e300, 1..40));
    runner(64)
        .run(&strategy, |(dims, bytes, reals)| {
            let n: usize = dims.iter().product();
            let arr = IdxArray { dims, data: IdxData::U8(bytes[..n].to_vec()) };
            let encoded = encode_idx(&arr);
            prop_assert_eq!(&parse_idx(&encoded).unwrap(), &arr);
            let arr = IdxArray { dims: vec![reals.len()], data: IdxData::F64(reals) };
            let encoded = encode_idx(&arr);
            prop_assert_eq!(encode_idx(&parse_idx(&encoded).unwrap()), encoded);
            Ok(())
        })
        .unwrap();
    if let Some(dir) = common::mnist_dir() {
        for name in [MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS] {
            let bytes = std::fs::read(dir.join(name)).unwrap();
            assert_eq!(encode_idx(&parse_idx(&bytes).unwrap()), bytes, "{name}");
        }
    }
}

/// Every pipeline stage reproduces bit for bit from its seed.
pub fn seed_determinism() {
    let table = |s| generate_synthetic_tabular(200, 6, 2, 4.0, &mut rng::stream(s)).unwrap();
    assert_eq!(table(1).values, table(1).values);
    assert_ne!(table(1).values, table(2).values);

    let data = common::synthetic_images(60, 6, 3, 3.0, 4);
    let split = |s| train_test_split(&data, 0.25, &mut rng::stream(s)).unwrap();
    assert_eq!(split(5), split(5));

    let part = |s| partition_dataset(&data.labels, 3, 5, PartitionScheme::Dirichlet { beta: 0.5 }, &mut rng::stream(s)).unwrap();
    assert_eq!(part(6), part(6));

    let small = common::noise_dataset(48, 12, 3, 7);
    let spec = ModelSpec::dipsen([12, 12, 1], 3, &arch(), &NoiseConfig::default()).unwrap();
    let central = |s| train_centralized(&spec, &small, 1, &SgdConfig::default(), s, |_, _, _| Ok(())).unwrap();
    let (a, b) = (central(8), central(8));
    assert_eq!(a.params, b.params);
    assert_ne!(a.params, central(9).params);

    let cfg = FederatedConfig { num_clients: 4, fraction: 0.5, rounds: 2, seed: 10, ..Default::default() };
    let fed = || run_training(&cfg, &spec, &small, &small, &NoiseConfig::default(), |_| {}).unwrap();
    let ((fa, la), (fb, lb)) = (fed(), fed());
    assert_eq!(fa.params, fb.params);
    assert_eq!(la.iter().map(|l| (&l.selected, l.test_acc)).collect::<Vec<_>>(), lb.iter().map(|l| (&l.selected, l.test_acc)).collect::<Vec<_>>());

    let tags = Tags { model: "dipsen".into(), dataset: "noise".into() };
    let noise = NoiseConfig::default();
    assert_eq!(evaluate(&a, &small, &noise, 11, &tags).unwrap(), evaluate(&b, &small, &noise, 11, &tags).unwrap());
    let attack = AttackConfig::new(AttackFamily::Pgd, 0.3);
    let (x, y) = (attack_batch(&a, &small, &attack, &noise, 12).unwrap(), attack_batch(&b, &small, &attack, &noise, 12).unwrap());
    assert_eq!(x.adversarial, y.adversarial);
    assert_eq!(x.adversarial_predictions, y.adversarial_predictions);
}
