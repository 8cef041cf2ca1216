//! Metrics, clean and adversarial evaluation, timing, and report output.

pub mod metrics;
pub mod report;
pub mod timing;

use std::time::Instant;

use crate::attacks::{attack_batch, AttackConfig};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::train::{train_step, SgdConfig};
use crate::nn::Model;
use crate::noise::{randomized_predict, NoiseConfig};
use crate::rng::{self, tag};
use crate::tensor::Tensor;

pub use metrics::{classification_metrics, confusion_matrix, ClassificationMetrics, ConfusionMatrix};
pub use report::{report_emit, MetricsReport};
pub use timing::{relative_overhead_pct, timing_overhead, TimingStats};

/// Samples per prediction pass.
pub const PREDICT_CHUNK: usize = 100;

/// Averaged-noise class predictions. Chunk `c` draws from a stream derived
/// from `seed` and the chunk's first index, so results do not depend on what
/// else is predicted in the same call.
pub fn predict_classes(model: &Model, samples: &Tensor, noise: &NoiseConfig, seed: u64) -> Result<Vec<usize>> {
    let n = samples.batch_len();
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(PREDICT_CHUNK) {
        let idx: Vec<usize> = (start..(start + PREDICT_CHUNK).min(n)).collect();
        let mut r = rng::derive(seed, &[tag::EVAL, start as u64]);
        let p = randomized_predict(&model.spec, &model.params, &samples.select(&idx)?, noise, &mut r)?;
        out.extend(p.argmax_rows());
    }
    Ok(out)
}

/// Report labels for a row of results.
#[derive(Clone, Debug, PartialEq)]
pub struct Tags {
    pub model: String,
    pub dataset: String,
}

/// Metrics of `predictions` against `data`, tagged with the attack context.
pub fn metrics_report(tags: &Tags, attack: &str, epsilon: f64, predictions: &[usize], data: &LabeledDataset) -> Result<MetricsReport> {
    let cm = confusion_matrix(predictions, &data.labels, data.class_count)?;
    let m = classification_metrics(&cm)?;
    Ok(MetricsReport {
        model: tags.model.clone(),
        dataset: tags.dataset.clone(),
        attack: attack.into(),
        epsilon,
        acc: m.accuracy,
        prec: m.precision,
        rec: m.recall,
        f1: m.f1,
        step_time_ms: None,
        support: m.support,
    })
}

/// Clean-data metrics (attack `none`, ε = 0).
pub fn evaluate(model: &Model, test: &LabeledDataset, noise: &NoiseConfig, seed: u64, tags: &Tags) -> Result<MetricsReport> {
    let preds = predict_classes(model, &test.samples, noise, seed)?;
    metrics_report(tags, "none", 0.0, &preds, test)
}

pub fn accuracy(model: &Model, test: &LabeledDataset, noise: &NoiseConfig, seed: u64) -> Result<f64> {
    let preds = predict_classes(model, &test.samples, noise, seed)?;
    Ok(preds.iter().zip(&test.labels).filter(|(p, l)| p == l).count() as f64 / test.len() as f64)
}

/// Metrics of the model on adversarial versions of `test`.
pub fn robustness_eval(
    model: &Model,
    test: &LabeledDataset,
    attack: &AttackConfig,
    noise: &NoiseConfig,
    seed: u64,
    tags: &Tags,
) -> Result<MetricsReport> {
    let outcome = attack_batch(model, test, attack, noise, seed)?;
    metrics_report(tags, attack.family.as_str(), attack.epsilon, &outcome.adversarial_predictions, test)
}

/// Untimed steps per model before [`compare_step_times`] starts measuring.
pub const TIMING_WARMUP: usize = 3;

/// Mean SGD step times of `baseline` and `treatment` on the same batches.
///
/// Both models train on private copies and alternate step by step in an
/// ABBA pattern, so drifts in machine load and ordering effects hit both
/// sides alike. Steps run serially on the calling thread.
pub fn compare_step_times(
    baseline: &Model,
    treatment: &Model,
    data: &LabeledDataset,
    cfg: &SgdConfig,
    steps: usize,
    seed: u64,
) -> Result<(TimingStats, TimingStats)> {
    cfg.validate()?;
    if steps < 10 {
        return Err(Error::config("timing.steps", format!("need at least 10 timed steps, got {steps}")));
    }
    if data.len() < cfg.batch_size {
        return Err(Error::config("timing.data", format!("need at least one batch of {} samples", cfg.batch_size)));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng::derive(seed, &[tag::TIMING]));
    let batches: Vec<&[usize]> = order.chunks_exact(cfg.batch_size).collect();
    let mut models = [baseline.clone(), treatment.clone()];
    let mut streams = [rng::derive(seed, &[tag::TIMING, 0]), rng::derive(seed, &[tag::TIMING, 1])];
    let mut samples = [Vec::with_capacity(steps), Vec::with_capacity(steps)];
    for i in 0..TIMING_WARMUP + steps {
        let batch = batches[i % batches.len()];
        let sides = if i % 2 == 0 { [0, 1] } else { [1, 0] };
        for side in sides {
            let Model { spec, params } = &mut models[side];
            let started = Instant::now();
            train_step(spec, params, data, batch, cfg.lr, &mut streams[side])?;
            if i >= TIMING_WARMUP {
                samples[side].push(started.elapsed().as_secs_f64());
            }
        }
    }
    let [a, b] = samples;
    Ok((TimingStats::from_samples(a)?, TimingStats::from_samples(b)?))
}
