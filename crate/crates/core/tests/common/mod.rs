#![allow(dead_code)]

use std::path::PathBuf;

use fedrobust_core::data::{generate_synthetic_tabular, reshape_tabular_to_image, LabeledDataset};
use fedrobust_core::{rng, Tensor};
use rand::Rng;

/// `$MNIST_DIR`, else `data/mnist` at the workspace root, if the four
/// canonical files are present.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let present = [
        fedrobust_core::data::MNIST_TRAIN_IMAGES,
        fedrobust_core::data::MNIST_TRAIN_LABELS,
        fedrobust_core::data::MNIST_TEST_IMAGES,
        fedrobust_core::data::MNIST_TEST_LABELS,
    ]
    .iter()
    .all(|f| dir.join(f).is_file());
    if present {
        Some(dir)
    } else {
        eprintln!("MNIST files not found in {}; skipping", dir.display());
        None
    }
}

pub fn uniform(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::stream(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random::<f64>()).collect()).unwrap()
}

/// Random small images with random labels.
pub fn noise_dataset(n: usize, side: usize, classes: usize, seed: u64) -> LabeledDataset {
    let samples = uniform(&[n, side, side, 1], seed);
    let mut r = rng::stream(seed ^ 0xabc);
    let labels = (0..n).map(|_| r.random_range(0..classes)).collect();
    LabeledDataset::new(samples, labels, classes).unwrap()
}

pub fn synthetic_images(n: usize, features: usize, classes: usize, separation: f64, seed: u64) -> LabeledDataset {
    let table = generate_synthetic_tabular(n, features, classes, separation, &mut rng::stream(seed)).unwrap();
    reshape_tabular_to_image(&table).unwrap()
}
