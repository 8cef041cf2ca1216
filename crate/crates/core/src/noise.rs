//! Gaussian noise layer and randomized prediction.
//!
//! The noise layer adds i.i.d. `N(0, (S_f·σ)²)` noise to the activations of
//! the first hidden layer. It is active during training and, unless
//! disabled, at inference too, which turns the scoring function into a
//! randomized one; [`randomized_predict`] averages several draws of it.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::{forward, forward_prefix, LayerSpec, ModelParams, ModelSpec};
use crate::nn::Mode;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Noise multiplier σ.
    pub sigma: f64,
    /// Sensitivity S_f of the noised activations.
    pub sensitivity: f64,
    /// Forward passes averaged per prediction.
    pub inference_draws: usize,
    /// Keep the noise on at prediction time.
    pub at_inference: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma: 0.5,
            sensitivity: 1.0,
            inference_draws: 10,
            at_inference: true,
        }
    }
}

pub(crate) fn check_scale(sigma: f64, sensitivity: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config("noise.sigma", format!("must be finite and non-negative, got {sigma}")));
    }
    if !(sensitivity >= 0.0 && sensitivity.is_finite()) {
        return Err(Error::config(
            "noise.sensitivity",
            format!("must be finite and non-negative, got {sensitivity}"),
        ));
    }
    Ok(())
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        check_scale(self.sigma, self.sensitivity)?;
        if self.inference_draws == 0 {
            return Err(Error::config("noise.inference_draws", "must be at least 1"));
        }
        Ok(())
    }

    pub fn std_dev(&self) -> f64 {
        self.sensitivity * self.sigma
    }
}

/// Adds `N(0, std²)` to every element. Draws nothing when `std == 0`.
pub fn add_noise_in_place(t: &mut Tensor, std: f64, rng: &mut impl Rng) {
    if std == 0.0 {
        return;
    }
    for v in t.data_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v += std * z;
    }
}

pub fn gaussian_noise_sample(shape: &[usize], config: &NoiseConfig, rng: &mut impl Rng) -> Result<Tensor> {
    check_scale(config.sigma, config.sensitivity)?;
    let mut t = Tensor::zeros(shape);
    add_noise_in_place(&mut t, config.std_dev(), rng);
    Ok(t)
}

/// `activations + noise` in training, and at inference when
/// `config.at_inference` holds. The Jacobian is the identity either way.
pub fn noise_layer_forward(activations: &Tensor, config: &NoiseConfig, mode: Mode, rng: &mut impl Rng) -> Result<Tensor> {
    check_scale(config.sigma, config.sensitivity)?;
    let mut out = activations.clone();
    if mode == Mode::Train || config.at_inference {
        add_noise_in_place(&mut out, config.std_dev(), rng);
    }
    Ok(out)
}

/// Index of the layer whose output is the "first hidden layer": the input to
/// the first noise layer if there is one, else the first parameterized layer
/// together with any pooling directly after it.
fn first_hidden_stop(spec: &ModelSpec) -> usize {
    if let Some(i) = spec.layers.iter().position(|l| matches!(l, LayerSpec::Noise { .. })) {
        return i;
    }
    let first = spec
        .layers
        .iter()
        .position(|l| matches!(l, LayerSpec::Conv2D { .. } | LayerSpec::Dense { .. }))
        .unwrap_or(1);
    let mut stop = first + 1;
    while matches!(spec.layers.get(stop), Some(LayerSpec::MaxPool2D { .. })) {
        stop += 1;
    }
    stop
}

/// Empirical sensitivity of the first hidden layer: the largest L2 distance
/// between the activations of any two samples of `dataset`.
pub fn estimate_sensitivity(spec: &ModelSpec, params: &ModelParams, dataset: &Tensor) -> Result<f64> {
    if dataset.is_empty() || dataset.shape().first() == Some(&0) {
        return Err(Error::Empty("sensitivity dataset".into()));
    }
    let stop = first_hidden_stop(spec);
    let n = dataset.batch_len();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n);
    // The prefix up to the noise layer is deterministic; the stream is unused.
    let mut unused = crate::rng::stream(0);
    for start in (0..n).step_by(128) {
        let idx: Vec<usize> = (start..(start + 128).min(n)).collect();
        let h = forward_prefix(spec, params, &dataset.select(&idx)?, stop, Mode::Infer, &mut unused)?;
        for i in 0..h.batch_len() {
            acts.push(h.sample(i).to_vec());
        }
    }
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = acts[i].iter().zip(&acts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.max(d2);
        }
    }
    Ok(best.sqrt())
}

/// Mean of `config.inference_draws` stochastic forward passes, with the
/// model's noise layers set from `config`.
pub fn randomized_predict(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &Tensor,
    config: &NoiseConfig,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    config.validate()?;
    let noisy = spec.with_noise(config.sigma, config.sensitivity, config.at_inference);
    if !noisy.is_stochastic(Mode::Infer) {
        return forward(&noisy, params, x, Mode::Infer, rng);
    }
    let mut acc = forward(&noisy, params, x, Mode::Infer, rng)?;
    for _ in 1..config.inference_draws {
        let p = forward(&noisy, params, x, Mode::Infer, rng)?;
        for (a, v) in acc.data_mut().iter_mut().zip(p.data()) {
            *a += v;
        }
    }
    let k = config.inference_draws as f64;
    for a in acc.data_mut() {
        *a /= k;
    }
    Ok(acc)
}
