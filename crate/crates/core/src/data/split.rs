use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// Label-stratified split. The test side receives `round(fraction·N)`
/// samples, spread over classes by largest remainder so each class is within
/// one sample of its proportional share. Both sides keep dataset order.
pub fn train_test_split(
    dataset: &LabeledDataset,
    test_fraction: f64,
    rng: &mut impl Rng,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config("data.test_fraction", format!("must lie in (0, 1), got {test_fraction}")));
    }
    let n = dataset.len();
    let target = (test_fraction * n as f64).round() as usize;
    if target == 0 || target == n {
        return Err(Error::config("data.test_fraction", format!("leaves an empty side for {n} samples")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.class_count];
    for (i, &l) in dataset.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let ideal: Vec<f64> = by_class.iter().map(|c| c.len() as f64 * target as f64 / n as f64).collect();
    let mut take: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let mut order: Vec<usize> = (0..take.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = target - take.iter().sum::<usize>();
    for &c in &order {
        if remaining == 0 {
            break;
        }
        if take[c] < by_class[c].len() {
            take[c] += 1;
            remaining -= 1;
        }
    }
    let mut is_test = vec![false; n];
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(rng);
        for &i in &members[..take[c]] {
            is_test[i] = true;
        }
    }
    let test: Vec<usize> = (0..n).filter(|&i| is_test[i]).collect();
    let train: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
    Ok((dataset.subset(&train)?, dataset.subset(&test)?))
}
