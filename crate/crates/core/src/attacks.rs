//! Untargeted white-box L∞ evasion attacks: FGSM, BIM and PGD.
//!
//! All three ascend the cross-entropy of the true label using the sign of
//! the input gradient. For models with inference-time noise, each gradient
//! evaluation sees one noise realization drawn from a stream derived from
//! the attack seed, the position of the sample batch, and the iteration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::eval::predict_classes;
use crate::nn::{Mode, Model};
use crate::noise::NoiseConfig;
use crate::rng::{self, SeedStream};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackFamily {
    Fgsm,
    Bim,
    Pgd,
}

impl AttackFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackFamily::Fgsm => "fgsm",
            AttackFamily::Bim => "bim",
            AttackFamily::Pgd => "pgd",
        }
    }
}

impl std::str::FromStr for AttackFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fgsm" => Ok(AttackFamily::Fgsm),
            "bim" => Ok(AttackFamily::Bim),
            "pgd" => Ok(AttackFamily::Pgd),
            other => Err(Error::config("attack.family", format!("unknown attack `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub family: AttackFamily,
    /// L∞ budget.
    pub epsilon: f64,
    /// Per-iteration step; `None` means `epsilon / 4`.
    pub step_size: Option<f64>,
    pub iterations: usize,
    pub clip_min: f64,
    pub clip_max: f64,
    /// PGD only: start from a uniform point in the ε-ball.
    pub random_start: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            family: AttackFamily::Fgsm,
            epsilon: 0.3,
            step_size: None,
            iterations: 10,
            clip_min: 0.0,
            clip_max: 1.0,
            random_start: true,
        }
    }
}

impl AttackConfig {
    pub fn new(family: AttackFamily, epsilon: f64) -> Self {
        AttackConfig { family, epsilon, ..Default::default() }
    }

    pub fn step(&self) -> f64 {
        self.step_size.unwrap_or(self.epsilon / 4.0)
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.epsilon;
        if !(e >= 0.0 && e.is_finite()) {
            return Err(Error::config("attack.epsilon", format!("must be finite and non-negative, got {e}")));
        }
        if !(self.clip_min < self.clip_max) {
            return Err(Error::config("attack.clip_min", "clip_min must be below clip_max"));
        }
        if e > self.clip_max - self.clip_min {
            return Err(Error::config("attack.epsilon", format!("{e} exceeds the clip box width")));
        }
        if self.family != AttackFamily::Fgsm && e > 0.0 {
            let s = self.step();
            if !(s > 0.0 && s <= e) {
                return Err(Error::config("attack.step_size", format!("must lie in (0, epsilon={e}], got {s}")));
            }
            if self.iterations == 0 {
                return Err(Error::config("attack.iterations", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Source of loss gradients with respect to the input.
pub trait InputGradient {
    /// Gradient of the mean cross-entropy of `labels` at `x`. Randomness in
    /// the model is drawn from `rng`.
    fn input_gradient(&self, x: &Tensor, labels: &[usize], rng: &mut SeedStream) -> Result<Tensor>;
}

impl InputGradient for Model {
    fn input_gradient(&self, x: &Tensor, labels: &[usize], rng: &mut SeedStream) -> Result<Tensor> {
        let (_, grads) = self.backward(x, labels, Mode::Infer, rng)?;
        Ok(grads.input.expect("input gradient requested"))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_input(x: &Tensor, cfg: &AttackConfig) -> Result<()> {
    cfg.validate()?;
    if let Some(v) = x.data().iter().find(|v| !(cfg.clip_min..=cfg.clip_max).contains(*v)) {
        return Err(Error::config("attack input", format!("value {v} outside the clip box")));
    }
    Ok(())
}

fn iteration_stream(seed: u64, iteration: usize) -> SeedStream {
    rng::derive(seed, &[iteration as u64])
}

/// Fast gradient sign method: `clip(x + ε·sign(∇ₓL))`.
pub fn fgsm(model: &impl InputGradient, x: &Tensor, y: &[usize], cfg: &AttackConfig, seed: u64) -> Result<Tensor> {
    check_input(x, cfg)?;
    if cfg.epsilon == 0.0 {
        return Ok(x.clone());
    }
    let g = model.input_gradient(x, y, &mut iteration_stream(seed, 0))?;
    let mut out = x.clone();
    for (o, gv) in out.data_mut().iter_mut().zip(g.data()) {
        *o = (*o + cfg.epsilon * sign(*gv)).clamp(cfg.clip_min, cfg.clip_max);
    }
    Ok(out)
}

fn projected_steps(
    model: &impl InputGradient,
    origin: &Tensor,
    mut current: Tensor,
    y: &[usize],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<Tensor> {
    let step = cfg.step();
    for it in 0..cfg.iterations {
        let g = model.input_gradient(&current, y, &mut iteration_stream(seed, it))?;
        for ((c, gv), &o) in current.data_mut().iter_mut().zip(g.data()).zip(origin.data()) {
            let moved = (*c + step * sign(*gv)).clamp(o - cfg.epsilon, o + cfg.epsilon);
            *c = moved.clamp(cfg.clip_min, cfg.clip_max);
        }
    }
    Ok(current)
}

/// Basic iterative method: repeated sign steps, each projected back into the
/// ε-ball around `x` and the clip box.
pub fn bim(model: &impl InputGradient, x: &Tensor, y: &[usize], cfg: &AttackConfig, seed: u64) -> Result<Tensor> {
    check_input(x, cfg)?;
    if cfg.epsilon == 0.0 {
        return Ok(x.clone());
    }
    projected_steps(model, x, x.clone(), y, cfg, seed)
}

/// Uniform point of the ε-ball around `x`, clipped to the box.
pub fn random_start_point(x: &Tensor, cfg: &AttackConfig, rng: &mut impl Rng) -> Tensor {
    let mut out = x.clone();
    if cfg.epsilon == 0.0 {
        return out;
    }
    for v in out.data_mut() {
        let d = rng.random_range(-cfg.epsilon..=cfg.epsilon);
        *v = (*v + d).clamp(cfg.clip_min, cfg.clip_max);
    }
    out
}

/// Projected gradient descent on the loss: BIM iterations from a random
/// start when `cfg.random_start` is set.
pub fn pgd(model: &impl InputGradient, x: &Tensor, y: &[usize], cfg: &AttackConfig, seed: u64) -> Result<Tensor> {
    check_input(x, cfg)?;
    if cfg.epsilon == 0.0 {
        return Ok(x.clone());
    }
    let start = if cfg.random_start {
        random_start_point(x, cfg, &mut rng::derive(seed, &[u64::MAX]))
    } else {
        x.clone()
    };
    projected_steps(model, x, start, y, cfg, seed)
}

pub fn run_attack(model: &impl InputGradient, x: &Tensor, y: &[usize], cfg: &AttackConfig, seed: u64) -> Result<Tensor> {
    match cfg.family {
        AttackFamily::Fgsm => fgsm(model, x, y, cfg, seed),
        AttackFamily::Bim => bim(model, x, y, cfg, seed),
        AttackFamily::Pgd => pgd(model, x, y, cfg, seed),
    }
}

/// Samples attacked together; each chunk's streams derive from its first
/// sample index.
pub const ATTACK_CHUNK: usize = 32;

#[derive(Clone, Debug)]
pub struct AttackOutcome {
    pub adversarial: LabeledDataset,
    /// Fraction of originally correct samples that are misclassified after
    /// the attack (0 when none were correct).
    pub success_rate: f64,
    pub clean_predictions: Vec<usize>,
    pub adversarial_predictions: Vec<usize>,
}

/// Attacks every sample against the model's own gradients and measures how
/// many originally correct predictions flip. Predictions use `noise`
/// averaging with streams derived from `seed`.
pub fn attack_batch(
    model: &Model,
    dataset: &LabeledDataset,
    cfg: &AttackConfig,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<AttackOutcome> {
    if dataset.is_empty() {
        return Err(Error::Empty("attack dataset".into()));
    }
    cfg.validate()?;
    let n = dataset.len();
    let mut adv = dataset.samples.clone();
    for start in (0..n).step_by(ATTACK_CHUNK) {
        let idx: Vec<usize> = (start..(start + ATTACK_CHUNK).min(n)).collect();
        let x = dataset.samples.select(&idx)?;
        let y: Vec<usize> = idx.iter().map(|&i| dataset.labels[i]).collect();
        let x_adv = run_attack(model, &x, &y, cfg, rng::derive_seed(seed, &[rng::tag::ATTACK, start as u64]))?;
        for (j, &i) in idx.iter().enumerate() {
            adv.sample_mut(i).copy_from_slice(x_adv.sample(j));
        }
    }
    let adversarial = LabeledDataset { samples: adv, labels: dataset.labels.clone(), class_count: dataset.class_count };
    let clean_predictions = predict_classes(model, &dataset.samples, noise, seed)?;
    let adversarial_predictions = predict_classes(model, &adversarial.samples, noise, seed)?;
    let mut correct = 0usize;
    let mut flipped = 0usize;
    for i in 0..n {
        if clean_predictions[i] == dataset.labels[i] {
            correct += 1;
            if adversarial_predictions[i] != dataset.labels[i] {
                flipped += 1;
            }
        }
    }
    let success_rate = if correct == 0 { 0.0 } else { flipped as f64 / correct as f64 };
    Ok(AttackOutcome { adversarial, success_rate, clean_predictions, adversarial_predictions })
}
