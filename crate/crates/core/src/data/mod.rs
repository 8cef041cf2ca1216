//! Labeled image datasets: MNIST IDX loading, a synthetic tabular stand-in,
//! and stratified splitting.

pub mod idx;
pub mod split;
pub mod synthetic;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use idx::{encode_idx, parse_idx, IdxArray, IdxData, IdxError, MNIST_IMAGES_MAGIC, MNIST_LABELS_MAGIC};

pub use split::train_test_split;
pub use synthetic::{generate_synthetic_tabular, reshape_tabular_to_image, SyntheticTable};

/// Samples `(N, H, W, C)` with values in `[0, 1]` and labels `< class_count`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub samples: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(samples: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if samples.shape().len() != 4 {
            return Err(Error::shape("dataset samples rank", &[4], &[samples.shape().len()]));
        }
        if samples.batch_len() != labels.len() {
            return Err(Error::shape("dataset labels", &[samples.batch_len()], &[labels.len()]));
        }
        if let Some(v) = samples.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::config("data", format!("sample value {v} outside [0, 1]")));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange { label, classes: class_count });
        }
        Ok(LabeledDataset { samples, labels, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.samples.sample_shape();
        [s[0], s[1], s[2]]
    }

    pub fn subset(&self, indices: &[usize]) -> Result<LabeledDataset> {
        let samples = self.samples.select(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok(LabeledDataset { samples, labels, class_count: self.class_count })
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn take(&self, n: usize) -> Result<LabeledDataset> {
        if n >= self.len() {
            return Ok(self.clone());
        }
        self.subset(&(0..n).collect::<Vec<_>>())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Images as a `f64` IDX array and labels as a `u8` IDX array.
    pub fn to_idx(&self) -> (IdxArray, IdxArray) {
        let images = IdxArray {
            dims: self.samples.shape().to_vec(),
            data: IdxData::F64(self.samples.data().to_vec()),
        };
        let labels = IdxArray {
            dims: vec![self.len()],
            data: IdxData::U8(self.labels.iter().map(|&l| l as u8).collect()),
        };
        (images, labels)
    }

    pub fn save_idx(&self, images_path: &Path, labels_path: &Path) -> Result<()> {
        let (images, labels) = self.to_idx();
        fs::write(images_path, encode_idx(&images)).map_err(|e| Error::io(images_path, e))?;
        fs::write(labels_path, encode_idx(&labels)).map_err(|e| Error::io(labels_path, e))?;
        Ok(())
    }

    /// Reads a pair written by [`LabeledDataset::save_idx`] (or MNIST files).
    pub fn load_idx(images_path: &Path, labels_path: &Path, class_count: usize) -> Result<LabeledDataset> {
        let images = read_idx(images_path)?;
        let labels = read_idx(labels_path)?;
        dataset_from_idx(&images, &labels, class_count).map_err(|e| match e {
            Error::Idx(source) => Error::IdxFile { path: images_path.to_path_buf(), source },
            other => other,
        })
    }
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes).map_err(|source| Error::IdxFile { path: path.to_path_buf(), source })
}

fn dataset_from_idx(images: &IdxArray, labels: &IdxArray, class_count: usize) -> Result<LabeledDataset> {
    let n = images.dims[0];
    if labels.dims.len() != 1 || labels.dims[0] != n {
        return Err(IdxError::CountMismatch { images: n, labels: labels.dims[0] }.into());
    }
    let IdxData::U8(raw_labels) = &labels.data else {
        return Err(IdxError::WrongMagic { expected: MNIST_LABELS_MAGIC, found: labels.magic() }.into());
    };
    let labels = raw_labels
        .iter()
        .enumerate()
        .map(|(index, &label)| {
            if (label as usize) < class_count {
                Ok(label as usize)
            } else {
                Err(IdxError::BadLabel { index, label, classes: class_count })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut shape = images.dims.clone();
    if shape.len() == 3 {
        shape.push(1);
    }
    if shape.len() != 4 {
        return Err(Error::shape("idx image rank", &[4], &[shape.len()]));
    }
    let values = match &images.data {
        IdxData::U8(b) => b.iter().map(|&v| v as f64 / 255.0).collect(),
        IdxData::F64(v) => v.clone(),
    };
    LabeledDataset::new(Tensor::new(shape, values)?, labels, class_count)
}

/// Loads an MNIST image/label file pair, scaling pixels to `[0, 1]`.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = read_idx(images_path)?;
    if images.magic() != MNIST_IMAGES_MAGIC {
        return Err(Error::IdxFile {
            path: images_path.to_path_buf(),
            source: IdxError::WrongMagic { expected: MNIST_IMAGES_MAGIC, found: images.magic() },
        });
    }
    let labels = read_idx(labels_path)?;
    if labels.magic() != MNIST_LABELS_MAGIC {
        return Err(Error::IdxFile {
            path: labels_path.to_path_buf(),
            source: IdxError::WrongMagic { expected: MNIST_LABELS_MAGIC, found: labels.magic() },
        });
    }
    dataset_from_idx(&images, &labels, 10).map_err(|e| match e {
        Error::Idx(source) => Error::IdxFile { path: labels_path.to_path_buf(), source },
        other => other,
    })
}

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Loads the canonical train and test pairs from `dir`.
pub fn load_mnist_dir(dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    let train = load_mnist_idx(&dir.join(MNIST_TRAIN_IMAGES), &dir.join(MNIST_TRAIN_LABELS))?;
    let test = load_mnist_idx(&dir.join(MNIST_TEST_IMAGES), &dir.join(MNIST_TEST_LABELS))?;
    Ok((train, test))
}
