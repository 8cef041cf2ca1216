//! Synthetic tabular data standing in for flow-feature datasets, and the
//! tabular-to-image reshape that feeds it to the image models.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGE_SIDE: usize = 28;

/// Row-major `n × num_features` table with per-feature values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTable {
    pub num_features: usize,
    pub values: Vec<f64>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl SyntheticTable {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_features..(i + 1) * self.num_features]
    }

    /// CSV with header `f1..fN,label`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.num_features).map(|i| format!("f{i}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Gaussian clusters, one per class, with unit variance and class means
/// `(separation/√2)·e_c` (so every pair of means is `separation` apart),
/// min-max scaled per feature to `[0, 1]`. Labels cycle through the classes.
pub fn generate_synthetic_tabular(
    n: usize,
    num_features: usize,
    num_classes: usize,
    separation: f64,
    rng: &mut impl Rng,
) -> Result<SyntheticTable> {
    if num_classes < 2 || num_classes > num_features {
        return Err(Error::config(
            "data.num_classes",
            format!("must lie in [2, num_features={num_features}], got {num_classes}"),
        ));
    }
    if n < num_classes {
        return Err(Error::config("data.n", format!("need at least {num_classes} rows, got {n}")));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::config("data.separation", "must be finite and non-negative"));
    }
    let offset = separation / std::f64::consts::SQRT_2;
    let mut values = Vec::with_capacity(n * num_features);
    let labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    for &label in &labels {
        for f in 0..num_features {
            let z: f64 = StandardNormal.sample(rng);
            values.push(z + if f == label { offset } else { 0.0 });
        }
    }
    for f in 0..num_features {
        let column = values.iter().skip(f).step_by(num_features);
        let (lo, hi) = column.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        for v in values.iter_mut().skip(f).step_by(num_features) {
            *v = if span > 0.0 { ((*v - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
        }
    }
    Ok(SyntheticTable { num_features, values, labels, class_count: num_classes })
}

/// Tiles each row cyclically over a 28×28 single-channel image.
pub fn reshape_tabular_to_image(table: &SyntheticTable) -> Result<LabeledDataset> {
    let pixels = IMAGE_SIDE * IMAGE_SIDE;
    let mut data = Vec::with_capacity(table.len() * pixels);
    for i in 0..table.len() {
        let row = table.row(i);
        data.extend((0..pixels).map(|p| row[p % row.len()]));
    }
    let samples = Tensor::new(vec![table.len(), IMAGE_SIDE, IMAGE_SIDE, 1], data)?;
    LabeledDataset::new(samples, table.labels.clone(), table.class_count)
}

/// Inverse of [`reshape_tabular_to_image`] for one image.
pub fn recover_row(image: &[f64], num_features: usize) -> Vec<f64> {
    image[..num_features].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn features_are_min_max_scaled() {
        let t = generate_synthetic_tabular(500, 6, 2, 4.0, &mut rng::stream(1)).unwrap();
        for f in 0..6 {
            let col: Vec<f64> = (0..t.len()).map(|i| t.row(i)[f]).collect();
            assert_eq!(col.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
            assert_eq!(col.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic_tabular(50, 6, 2, 1.0, &mut rng::stream(9)).unwrap();
        let b = generate_synthetic_tabular(50, 6, 2, 1.0, &mut rng::stream(9)).unwrap();
        assert_eq!(a, b);
        assert!(generate_synthetic_tabular(1, 6, 2, 1.0, &mut rng::stream(9)).is_err());
    }

    #[test]
    fn reshape_tiles_rows() {
        let t = SyntheticTable {
            num_features: 6,
            values: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            labels: vec![1, 0],
            class_count: 2,
        };
        let ds = reshape_tabular_to_image(&t).unwrap();
        assert_eq!(ds.samples.shape(), &[2, 28, 28, 1]);
        let img = ds.samples.sample(0);
        for rep in 0..130 {
            assert_eq!(&img[rep * 6..rep * 6 + 6], t.row(0));
        }
        assert_eq!(&img[780..784], &t.row(0)[..4]);
        assert_eq!(recover_row(img, 6), t.row(0));
        assert!(ds.samples.sample(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn csv_export_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let t = generate_synthetic_tabular(4, 6, 2, 1.0, &mut rng::stream(2)).unwrap();
        let p = dir.path().join("s.csv");
        t.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("f1,f2,f3,f4,f5,f6,label\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
