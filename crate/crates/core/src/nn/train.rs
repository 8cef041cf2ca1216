use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::activation::Mode;
use crate::nn::model::{backward, Model, ModelParams, ModelSpec};
use crate::nn::optim::sgd_step_in_place;
use crate::rng::{self, tag};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { lr: 0.01, batch_size: 32 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("train.lr", format!("must be finite and non-negative, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        Ok(())
    }
}

/// One pass of minibatch SGD over `indices` (shuffled with `rng`).
/// Returns the sample-weighted mean training loss.
pub fn train_epoch(
    spec: &ModelSpec,
    params: &mut ModelParams,
    data: &LabeledDataset,
    indices: &[usize],
    cfg: &SgdConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    cfg.validate()?;
    if indices.is_empty() {
        return Err(Error::Empty("training shard".into()));
    }
    let mut order = indices.to_vec();
    order.shuffle(rng);
    let mut total = 0.0;
    for chunk in order.chunks(cfg.batch_size) {
        total += train_step(spec, params, data, chunk, cfg.lr, rng)? * chunk.len() as f64;
    }
    Ok(total / order.len() as f64)
}

/// One minibatch SGD step on `data[batch]`; returns the batch mean loss.
pub fn train_step(
    spec: &ModelSpec,
    params: &mut ModelParams,
    data: &LabeledDataset,
    batch: &[usize],
    lr: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let x = data.samples.select(batch)?;
    let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
    let (loss, grads) = backward(spec, params, &x, &labels, Mode::Train, rng, false)?;
    sgd_step_in_place(params, &grads, lr)?;
    Ok(loss)
}

/// Stream used by `client` for its local epochs in `round` (1-based).
pub fn round_stream(master_seed: u64, round: usize, client: usize) -> rng::SeedStream {
    rng::derive(master_seed, &[tag::ROUND, round as u64, client as u64])
}

/// Server-side initialization shared by centralized and federated training.
pub fn init_model(spec: &ModelSpec, master_seed: u64) -> Result<Model> {
    Model::init(spec.clone(), &mut rng::derive(master_seed, &[tag::INIT]))
}

/// Centralized training: epoch `e` runs on the stream of client 0 in round
/// `e`, so it coincides with single-client federated training.
pub fn train_centralized(
    spec: &ModelSpec,
    data: &LabeledDataset,
    epochs: usize,
    cfg: &SgdConfig,
    master_seed: u64,
    mut on_epoch: impl FnMut(usize, f64, &Model) -> Result<()>,
) -> Result<Model> {
    let mut model = init_model(spec, master_seed)?;
    let indices: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=epochs {
        let mut r = round_stream(master_seed, epoch, 0);
        let loss = train_epoch(&model.spec, &mut model.params, data, &indices, cfg, &mut r)?;
        on_epoch(epoch, loss, &model)?;
    }
    Ok(model)
}
