//! Synchronous in-process federated training with FedAvg aggregation.
//!
//! Each round the server samples `m = max(1, round(C·K))` clients, every
//! selected client runs local SGD epochs on its shard starting from the
//! current global parameters, and the server replaces the global model with
//! the coordinate-wise mean of the returned parameters. A round either
//! aggregates every selected client or fails as a whole.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::eval;
use crate::nn::train::{init_model, round_stream, train_epoch, SgdConfig};
use crate::nn::{Model, ModelParams, ModelSpec};
use crate::noise::NoiseConfig;
use crate::rng::{self, tag};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum PartitionScheme {
    Iid,
    LabelShards { shards_per_client: usize },
    Dirichlet { beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederatedConfig {
    pub num_clients: usize,
    pub fraction: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    pub local_batch_size: usize,
    pub lr: f64,
    pub partition: PartitionScheme,
    /// Weight client updates by shard size instead of a plain mean.
    pub weighted: bool,
    /// Noise draws averaged for the per-round test accuracy.
    pub eval_draws: usize,
    pub seed: u64,
}

impl Default for FederatedConfig {
    fn default() -> Self {
        FederatedConfig {
            num_clients: 200,
            fraction: 0.1,
            rounds: 30,
            local_epochs: 1,
            local_batch_size: 32,
            lr: 0.01,
            partition: PartitionScheme::Iid,
            weighted: false,
            eval_draws: 1,
            seed: 0,
        }
    }
}

impl FederatedConfig {
    pub fn clients_per_round(&self) -> usize {
        ((self.fraction * self.num_clients as f64).round() as usize).clamp(1, self.num_clients.max(1))
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig { lr: self.lr, batch_size: self.local_batch_size }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::config("fed.num_clients", "must be positive"));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::config("fed.fraction", format!("must lie in (0, 1], got {}", self.fraction)));
        }
        if self.local_epochs == 0 {
            return Err(Error::config("fed.local_epochs", "must be positive"));
        }
        if self.eval_draws == 0 {
            return Err(Error::config("fed.eval_draws", "must be positive"));
        }
        match self.partition {
            PartitionScheme::LabelShards { shards_per_client: 0 } => {
                return Err(Error::config("fed.partition", "shards_per_client must be positive"))
            }
            PartitionScheme::Dirichlet { beta } if !(beta > 0.0 && beta.is_finite()) => {
                return Err(Error::config("fed.partition", format!("dirichlet beta must be positive, got {beta}")))
            }
            _ => {}
        }
        self.sgd().validate()
    }
}

/// Splits `0..labels.len()` into `k` disjoint, exhaustive, non-empty shards,
/// each sorted ascending.
pub fn partition_dataset(
    labels: &[usize],
    class_count: usize,
    k: usize,
    scheme: PartitionScheme,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if k == 0 {
        return Err(Error::config("fed.num_clients", "must be positive"));
    }
    if n < k {
        return Err(Error::config("fed.num_clients", format!("{k} clients but only {n} samples")));
    }
    let mut shards = match scheme {
        PartitionScheme::Iid => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            let (base, extra) = (n / k, n % k);
            let mut out = Vec::with_capacity(k);
            let mut start = 0;
            for c in 0..k {
                let len = base + usize::from(c < extra);
                out.push(idx[start..start + len].to_vec());
                start += len;
            }
            out
        }
        PartitionScheme::LabelShards { shards_per_client } => label_shards(labels, class_count, k, shards_per_client, rng)?,
        PartitionScheme::Dirichlet { beta } => dirichlet_shards(labels, class_count, k, beta, rng)?,
    };
    for s in &mut shards {
        s.sort_unstable();
    }
    Ok(shards)
}

/// Every shard holds a single label; each client is dealt
/// `shards_per_client` of them.
fn label_shards(labels: &[usize], class_count: usize, k: usize, per_client: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    let total = k * per_client;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let present: Vec<usize> = (0..class_count).filter(|&c| !by_class[c].is_empty()).collect();
    if total < present.len() || total > labels.len() {
        return Err(Error::config(
            "fed.partition",
            format!("{total} label shards cannot cover {} labels and {} samples", present.len(), labels.len()),
        ));
    }
    // One shard per present label, the rest by largest remainder, capped by
    // the label's sample count.
    let mut count = vec![0usize; class_count];
    for &c in &present {
        count[c] = 1;
    }
    let n = labels.len() as f64;
    let mut remaining = total - present.len();
    while remaining > 0 {
        let c = *present
            .iter()
            .filter(|&&c| count[c] < by_class[c].len())
            .max_by(|&&a, &&b| {
                let da = by_class[a].len() as f64 * total as f64 / n - count[a] as f64;
                let db = by_class[b].len() as f64 * total as f64 / n - count[b] as f64;
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("total does not exceed sample count");
        count[c] += 1;
        remaining -= 1;
    }
    let mut pieces: Vec<Vec<usize>> = Vec::with_capacity(total);
    for &c in &present {
        let members = &by_class[c];
        let (base, extra) = (members.len() / count[c], members.len() % count[c]);
        let mut start = 0;
        for s in 0..count[c] {
            let len = base + usize::from(s < extra);
            pieces.push(members[start..start + len].to_vec());
            start += len;
        }
    }
    pieces.shuffle(rng);
    Ok(pieces.chunks(per_client).map(|group| group.concat()).collect())
}

/// Per-class client proportions drawn from `Dirichlet(beta)`; clients left
/// empty take one sample from the currently largest client.
fn dirichlet_shards(labels: &[usize], class_count: usize, k: usize, beta: f64, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    let gamma = Gamma::new(beta, 1.0).map_err(|e| Error::config("fed.partition", e.to_string()))?;
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); k];
    for c in 0..class_count {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(rng);
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        let m = members.len();
        let mut cum = 0.0;
        let mut start = 0;
        for (client, d) in draws.iter().enumerate() {
            cum += d;
            let end = if client + 1 == k { m } else { ((cum / sum) * m as f64).round().min(m as f64) as usize };
            let end = end.max(start);
            shards[client].extend_from_slice(&members[start..end]);
            start = end;
        }
    }
    for c in 0..k {
        if shards[c].is_empty() {
            let donor = (0..k).max_by_key(|&j| (shards[j].len(), std::cmp::Reverse(j))).unwrap();
            let moved = shards[donor].pop().expect("donor has samples");
            shards[c].push(moved);
        }
    }
    Ok(shards)
}

/// `m` distinct client ids for round `t`, uniform without replacement and
/// sorted ascending.
pub fn select_clients(cfg: &FederatedConfig, round: usize) -> Vec<usize> {
    let m = cfg.clients_per_round();
    let mut r = rng::derive(cfg.seed, &[tag::SELECT, round as u64]);
    let mut ids = rand::seq::index::sample(&mut r, cfg.num_clients, m).into_vec();
    ids.sort_unstable();
    ids
}

/// Local epochs of minibatch SGD on one client's shard, starting from a copy
/// of the global parameters. Returns the new parameters and the mean loss of
/// the last local epoch.
pub fn local_update(
    spec: &ModelSpec,
    global: &ModelParams,
    data: &LabeledDataset,
    shard: &[usize],
    cfg: &FederatedConfig,
    round: usize,
    client: usize,
) -> Result<(ModelParams, f64, usize)> {
    if shard.is_empty() {
        return Err(Error::Empty(format!("shard of client {client}")));
    }
    let sgd = cfg.sgd();
    let mut params = global.clone();
    let mut r = round_stream(cfg.seed, round, client);
    let mut loss = 0.0;
    for _ in 0..cfg.local_epochs {
        loss = train_epoch(spec, &mut params, data, shard, &sgd, &mut r)?;
    }
    let steps = cfg.local_epochs * shard.len().div_ceil(sgd.batch_size);
    Ok((params, loss, steps))
}

/// Coordinate-wise (optionally weighted) mean of congruent parameter sets.
///
/// The values of each coordinate are sorted before accumulation and the mean
/// is formed as `min + Σ wᵢ(vᵢ − min) / Σ wᵢ`, which makes the result
/// independent of argument order and exact for identical inputs.
pub fn fedavg(updates: &[ModelParams], weights: Option<&[f64]>) -> Result<ModelParams> {
    let first = updates.first().ok_or_else(|| Error::Empty("fedavg updates".into()))?;
    for u in &updates[1..] {
        first.check_congruent(u)?;
    }
    let weights: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != updates.len() {
                return Err(Error::shape("fedavg weights", &[updates.len()], &[w.len()]));
            }
            if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::config("fedavg.weights", "must be non-negative with a positive sum"));
            }
            w.to_vec()
        }
        None => vec![1.0; updates.len()],
    };
    let flats: Vec<Vec<f64>> = updates.iter().map(ModelParams::to_flat).collect();
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(updates.len());
    let mut out = Vec::with_capacity(flats[0].len());
    for j in 0..flats[0].len() {
        pairs.clear();
        pairs.extend(flats.iter().zip(&weights).map(|(f, &w)| (f[j], w)));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let base = pairs[0].0;
        let (mut num, mut den) = (0.0, 0.0);
        for &(v, w) in &pairs {
            num += w * (v - base);
            den += w;
        }
        out.push(base + num / den);
    }
    first.with_flat(&out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundLog {
    pub round: usize,
    pub selected: Vec<usize>,
    pub local_losses: Vec<f64>,
    pub mean_local_loss: f64,
    pub test_acc: f64,
    /// Mean wall-clock time per local SGD step in this round.
    pub step_time_ms: f64,
}

/// Server state between rounds.
pub struct FederatedState<'a> {
    pub global: Model,
    pub shards: Vec<Vec<usize>>,
    pub cfg: FederatedConfig,
    pub train: &'a LabeledDataset,
    pub test: &'a LabeledDataset,
    pub noise: NoiseConfig,
}

impl<'a> FederatedState<'a> {
    /// Fresh server-initialized model and partitioned client shards.
    pub fn new(
        cfg: &FederatedConfig,
        spec: &ModelSpec,
        train: &'a LabeledDataset,
        test: &'a LabeledDataset,
        noise: &NoiseConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng::derive(cfg.seed, &[tag::PARTITION]);
        let shards = partition_dataset(&train.labels, train.class_count, cfg.num_clients, cfg.partition, &mut r)?;
        Ok(FederatedState {
            global: init_model(spec, cfg.seed)?,
            shards,
            cfg: cfg.clone(),
            train,
            test,
            noise: *noise,
        })
    }

    /// Select, broadcast, train locally, aggregate, evaluate.
    pub fn run_round(&mut self, round: usize) -> Result<RoundLog> {
        let selected = select_clients(&self.cfg, round);
        let started = Instant::now();
        let mut updates = Vec::with_capacity(selected.len());
        let mut losses = Vec::with_capacity(selected.len());
        let mut sizes = Vec::with_capacity(selected.len());
        let mut steps = 0;
        for &client in &selected {
            let (params, loss, s) = local_update(
                &self.global.spec,
                &self.global.params,
                self.train,
                &self.shards[client],
                &self.cfg,
                round,
                client,
            )
            .map_err(|e| Error::Client { client, round, source: Box::new(e) })?;
            updates.push(params);
            losses.push(loss);
            sizes.push(self.shards[client].len() as f64);
            steps += s;
        }
        let elapsed = started.elapsed().as_secs_f64() * 1e3;
        let weights = self.cfg.weighted.then_some(&sizes[..]);
        let aggregated = fedavg(&updates, weights)?;
        self.global.params = aggregated;
        let eval_noise = NoiseConfig { inference_draws: self.cfg.eval_draws, ..self.noise };
        let test_acc = eval::accuracy(&self.global, self.test, &eval_noise, rng::derive_seed(self.cfg.seed, &[tag::EVAL, round as u64]))?;
        Ok(RoundLog {
            round,
            mean_local_loss: losses.iter().sum::<f64>() / losses.len() as f64,
            selected,
            local_losses: losses,
            test_acc,
            step_time_ms: elapsed / steps.max(1) as f64,
        })
    }
}

/// Runs `cfg.rounds` rounds from a fresh server model.
pub fn run_training(
    cfg: &FederatedConfig,
    spec: &ModelSpec,
    train: &LabeledDataset,
    test: &LabeledDataset,
    noise: &NoiseConfig,
    mut on_round: impl FnMut(&RoundLog),
) -> Result<(Model, Vec<RoundLog>)> {
    let mut state = FederatedState::new(cfg, spec, train, test, noise)?;
    let mut logs = Vec::with_capacity(cfg.rounds);
    for t in 1..=cfg.rounds {
        let log = state.run_round(t)?;
        on_round(&log);
        logs.push(log);
    }
    Ok((state.global, logs))
}

pub const ROUND_CSV_HEADER: [&str; 5] = ["t", "selected", "mean_local_loss", "test_acc", "step_time_ms"];

/// One row per round; selected ids are `;`-separated. With `timing` off the
/// wall-clock column is left empty so reruns give identical bytes.
pub fn rounds_to_csv(logs: &[RoundLog], timing: bool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ROUND_CSV_HEADER)?;
    for l in logs {
        let selected = l.selected.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
        w.write_record([
            l.round.to_string(),
            selected,
            l.mean_local_loss.to_string(),
            l.test_acc.to_string(),
            if timing { l.step_time_ms.to_string() } else { String::new() },
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
