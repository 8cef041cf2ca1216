//! Desk-scale MNIST oracles. Each test returns early when the MNIST files
//! are missing (see `common::mnist_dir`).

mod common;

use std::sync::OnceLock;

use fedrobust_core::attacks::{AttackConfig, AttackFamily};
use fedrobust_core::data::{load_mnist_dir, LabeledDataset};
use fedrobust_core::eval::{self, Tags};
use fedrobust_core::federated::{partition_dataset, run_training, FederatedConfig, PartitionScheme};
use fedrobust_core::nn::train::train_centralized;
use fedrobust_core::nn::{ArchConfig, Model, ModelSpec, ModelVariant, SgdConfig};
use fedrobust_core::{rng, NoiseConfig};

const SEED: u64 = 11;

struct Mnist {
    full_train: LabeledDataset,
    train: LabeledDataset,
    test: LabeledDataset,
}

fn mnist() -> Option<&'static Mnist> {
    static DATA: OnceLock<Option<Mnist>> = OnceLock::new();
    DATA.get_or_init(|| {
        let dir = common::mnist_dir()?;
        let (full_train, full_test) = load_mnist_dir(&dir).unwrap();
        let train = full_train.take(10_000).unwrap();
        let test = full_test.take(1_000).unwrap();
        Some(Mnist { full_train, train, test })
    })
    .as_ref()
}

fn trained(variant: ModelVariant) -> Option<&'static Model> {
    static CNN: OnceLock<Option<Model>> = OnceLock::new();
    static DIPSEN: OnceLock<Option<Model>> = OnceLock::new();
    let cell = match variant {
        ModelVariant::Cnn => &CNN,
        ModelVariant::Dipsen => &DIPSEN,
    };
    cell.get_or_init(|| {
        let data = mnist()?;
        let spec = ModelSpec::build(variant, [28, 28, 1], 10, &ArchConfig::default(), &NoiseConfig::default()).unwrap();
        Some(train_centralized(&spec, &data.train, 3, &SgdConfig::default(), SEED, |_, _, _| Ok(())).unwrap())
    })
    .as_ref()
}

fn federated(partition: PartitionScheme, rounds: usize) -> Option<Vec<f64>> {
    let data = mnist()?;
    let cfg = FederatedConfig { rounds, lr: 0.1, local_epochs: 2, partition, seed: SEED, ..Default::default() };
    let noise = NoiseConfig::default();
    let spec = ModelSpec::build(ModelVariant::Cnn, [28, 28, 1], 10, &ArchConfig::default(), &noise).unwrap();
    let (_, logs) = run_training(&cfg, &spec, &data.train, &data.test, &noise, |_| {}).unwrap();
    Some(logs.iter().map(|l| l.test_acc).collect())
}

fn adversarial_acc(model: &Model, data: &LabeledDataset, family: AttackFamily, epsilon: f64) -> f64 {
    let tags = Tags { model: "cnn".into(), dataset: "mnist".into() };
    eval::robustness_eval(model, data, &AttackConfig::new(family, epsilon), &NoiseConfig::default(), SEED, &tags)
        .unwrap()
        .acc
}

#[test]
fn federated_iid_reaches_90_percent_in_20_rounds() {
    let Some(acc) = federated(PartitionScheme::Iid, 20) else { return };
    assert!(acc[19] >= 0.90, "round 20 accuracy {}", acc[19]);
}

#[test]
fn federated_dirichlet_reaches_85_percent_within_30_rounds() {
    let Some(acc) = federated(PartitionScheme::Dirichlet { beta: 0.5 }, 30) else { return };
    let best = acc.iter().copied().fold(0.0, f64::max);
    assert!(best >= 0.85, "best accuracy {best} over {acc:?}");
}

#[test]
fn label_shards_give_at_most_two_labels_per_client() {
    let Some(data) = mnist() else { return };
    let scheme = PartitionScheme::LabelShards { shards_per_client: 2 };
    let shards = partition_dataset(&data.full_train.labels, 10, 200, scheme, &mut rng::stream(SEED)).unwrap();
    for shard in &shards {
        let mut labels: Vec<usize> = shard.iter().map(|&i| data.full_train.labels[i]).collect();
        labels.sort_unstable();
        labels.dedup();
        assert!(labels.len() <= 2, "{labels:?}");
    }
}

#[test]
fn pgd_is_at_least_as_strong_as_fgsm() {
    let (Some(data), Some(cnn)) = (mnist(), trained(ModelVariant::Cnn)) else { return };
    let subset = data.test.take(300).unwrap();
    let fgsm = adversarial_acc(cnn, &subset, AttackFamily::Fgsm, 0.3);
    let pgd = adversarial_acc(cnn, &subset, AttackFamily::Pgd, 0.3);
    assert!(pgd <= fgsm + 0.02, "pgd {pgd} fgsm {fgsm}");
}

#[test]
fn adversarial_accuracy_falls_with_epsilon() {
    let (Some(data), Some(cnn)) = (mnist(), trained(ModelVariant::Cnn)) else { return };
    let subset = data.test.take(300).unwrap();
    let clean = eval::accuracy(cnn, &subset, &NoiseConfig::default(), SEED).unwrap();
    let accs: Vec<f64> = [0.0, 0.1, 0.2, 0.3].iter().map(|&e| adversarial_acc(cnn, &subset, AttackFamily::Fgsm, e)).collect();
    assert!(clean >= 0.9, "clean {clean}");
    assert_eq!(accs[0], clean);
    assert!(accs.windows(2).all(|w| w[1] <= w[0] + 0.02), "{accs:?}");
    assert!(accs[3] < clean - 0.5, "{accs:?}");
}

/// One model per σ, trained and evaluated at that σ. A single model
/// evaluated away from its training σ is not monotone: it scores best near
/// the σ it was trained with.
#[test]
fn clean_accuracy_does_not_rise_with_sigma() {
    let Some(data) = mnist() else { return };
    let accs: Vec<f64> = [0.0, 0.25, 0.5, 1.0]
        .iter()
        .map(|&sigma| {
            let noise = NoiseConfig { sigma, inference_draws: 20, ..Default::default() };
            let spec = ModelSpec::build(ModelVariant::Dipsen, [28, 28, 1], 10, &ArchConfig::default(), &noise).unwrap();
            let model = train_centralized(&spec, &data.train, 3, &SgdConfig::default(), SEED, |_, _, _| Ok(())).unwrap();
            eval::accuracy(&model, &data.test, &noise, SEED).unwrap()
        })
        .collect();
    assert!(accs.windows(2).all(|w| w[1] <= w[0] + 0.02), "{accs:?}");
}
