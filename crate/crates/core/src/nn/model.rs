//! Declarative layer stacks, their parameters, and whole-model forward and
//! backward passes.

use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::activation::{self, alpha_dropout, DropoutMask, Mode};
use crate::nn::init::lecun_uniform;
use crate::nn::layers;
use crate::nn::loss::{softmax_cross_entropy, softmax_into};
use crate::noise;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Input {
        height: usize,
        width: usize,
        channels: usize,
    },
    /// Stride-1, valid-padding square convolution.
    Conv2D { filters: usize, kernel: usize },
    MaxPool2D { pool: usize },
    /// Additive Gaussian noise with standard deviation `sensitivity · sigma`.
    /// Always active in training; active at inference iff `at_inference`.
    Noise {
        sigma: f64,
        sensitivity: f64,
        at_inference: bool,
    },
    Selu,
    Relu,
    AlphaDropout { rate: f64 },
    Flatten,
    Dense { units: usize },
    Softmax,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Input { .. } => "input",
            LayerSpec::Conv2D { .. } => "conv2d",
            LayerSpec::MaxPool2D { .. } => "maxpool2d",
            LayerSpec::Noise { .. } => "noise",
            LayerSpec::Selu => "selu",
            LayerSpec::Relu => "relu",
            LayerSpec::AlphaDropout { .. } => "alpha_dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Softmax => "softmax",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    Cnn,
    Dipsen,
}

impl ModelVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::Cnn => "cnn",
            ModelVariant::Dipsen => "dipsen",
        }
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(ModelVariant::Cnn),
            "dipsen" => Ok(ModelVariant::Dipsen),
            other => Err(Error::config("model", format!("unknown variant `{other}` (expected cnn or dipsen)"))),
        }
    }
}

/// Hyperparameters shared by the two reference architectures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArchConfig {
    pub filters: (usize, usize),
    pub kernel: usize,
    pub pool: usize,
    pub dropout_rate: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            filters: (32, 64),
            kernel: 3,
            pool: 2,
            dropout_rate: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = ModelSpec { layers };
        spec.validate()?;
        Ok(spec)
    }

    /// Conv → pool → noise → conv → pool → SELU → alpha dropout → dense → softmax.
    pub fn dipsen(input: [usize; 3], classes: usize, arch: &ArchConfig, noise: &noise::NoiseConfig) -> Result<Self> {
        let [height, width, channels] = input;
        ModelSpec::new(vec![
            LayerSpec::Input { height, width, channels },
            LayerSpec::Conv2D { filters: arch.filters.0, kernel: arch.kernel },
            LayerSpec::MaxPool2D { pool: arch.pool },
            LayerSpec::Noise {
                sigma: noise.sigma,
                sensitivity: noise.sensitivity,
                at_inference: noise.at_inference,
            },
            LayerSpec::Conv2D { filters: arch.filters.1, kernel: arch.kernel },
            LayerSpec::MaxPool2D { pool: arch.pool },
            LayerSpec::Selu,
            LayerSpec::AlphaDropout { rate: arch.dropout_rate },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: classes },
            LayerSpec::Softmax,
        ])
    }

    /// The same stack with ReLU in place of the noise and SELU stages.
    pub fn cnn(input: [usize; 3], classes: usize, arch: &ArchConfig) -> Result<Self> {
        let [height, width, channels] = input;
        ModelSpec::new(vec![
            LayerSpec::Input { height, width, channels },
            LayerSpec::Conv2D { filters: arch.filters.0, kernel: arch.kernel },
            LayerSpec::MaxPool2D { pool: arch.pool },
            LayerSpec::Relu,
            LayerSpec::Conv2D { filters: arch.filters.1, kernel: arch.kernel },
            LayerSpec::MaxPool2D { pool: arch.pool },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: classes },
            LayerSpec::Softmax,
        ])
    }

    pub fn build(
        variant: ModelVariant,
        input: [usize; 3],
        classes: usize,
        arch: &ArchConfig,
        noise: &noise::NoiseConfig,
    ) -> Result<Self> {
        match variant {
            ModelVariant::Cnn => ModelSpec::cnn(input, classes, arch),
            ModelVariant::Dipsen => ModelSpec::dipsen(input, classes, arch, noise),
        }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        match self.layers[0] {
            LayerSpec::Input { height, width, channels } => [height, width, channels],
            _ => unreachable!("validated spec starts with an input layer"),
        }
    }

    pub fn num_classes(&self) -> usize {
        *self.sample_shapes().expect("validated spec").last().unwrap().last().unwrap()
    }

    /// Copy of this spec with every noise layer reconfigured.
    pub fn with_noise(&self, sigma: f64, sensitivity: f64, at_inference: bool) -> ModelSpec {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Noise { .. } => LayerSpec::Noise { sigma, sensitivity, at_inference },
                other => other.clone(),
            })
            .collect();
        ModelSpec { layers }
    }

    /// Whether a forward pass in `mode` draws from the random stream.
    pub fn is_stochastic(&self, mode: Mode) -> bool {
        self.layers.iter().any(|l| match *l {
            LayerSpec::Noise { sigma, sensitivity, at_inference } => {
                sigma * sensitivity > 0.0 && (mode == Mode::Train || at_inference)
            }
            LayerSpec::AlphaDropout { rate } => mode == Mode::Train && rate > 0.0,
            _ => false,
        })
    }

    /// Per-sample output shape after each layer.
    pub fn sample_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur: Vec<usize> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |expected: &[usize], actual: &[usize]| {
                Error::shape(format!("layer {i} ({})", layer.name()), expected, actual)
            };
            cur = match *layer {
                LayerSpec::Input { height, width, channels } => {
                    if i != 0 {
                        return Err(Error::config("model.layers", "input layer must come first and only once"));
                    }
                    if height == 0 || width == 0 || channels == 0 {
                        return Err(Error::config("model.input", "extents must be positive"));
                    }
                    vec![height, width, channels]
                }
                _ if i == 0 => return Err(Error::config("model.layers", "first layer must be an input layer")),
                LayerSpec::Conv2D { filters, kernel } => {
                    let [h, w, _] = cur[..] else { return Err(bad(&[3], &[cur.len()])) };
                    if filters == 0 || kernel == 0 {
                        return Err(Error::config("model.conv2d", "filters and kernel must be positive"));
                    }
                    match (layers::conv_out_extent(h, kernel), layers::conv_out_extent(w, kernel)) {
                        (Some(oh), Some(ow)) => vec![oh, ow, filters],
                        _ => return Err(bad(&[kernel, kernel], &[h, w])),
                    }
                }
                LayerSpec::MaxPool2D { pool } => {
                    let [h, w, c] = cur[..] else { return Err(bad(&[3], &[cur.len()])) };
                    if pool == 0 || h / pool == 0 || w / pool == 0 {
                        return Err(bad(&[pool, pool], &[h, w]));
                    }
                    vec![h / pool, w / pool, c]
                }
                LayerSpec::Noise { sigma, sensitivity, .. } => {
                    noise::check_scale(sigma, sensitivity)?;
                    cur
                }
                LayerSpec::AlphaDropout { rate } => {
                    activation::check_dropout_rate(rate)?;
                    cur
                }
                LayerSpec::Selu | LayerSpec::Relu => cur,
                LayerSpec::Flatten => vec![cur.iter().product()],
                LayerSpec::Dense { units } => {
                    if cur.len() != 1 {
                        return Err(bad(&[1], &[cur.len()]));
                    }
                    if units == 0 {
                        return Err(Error::config("model.dense", "units must be positive"));
                    }
                    vec![units]
                }
                LayerSpec::Softmax => {
                    if i + 1 != self.layers.len() || cur.len() != 1 {
                        return Err(Error::config("model.layers", "softmax must be the final layer over a flat input"));
                    }
                    cur
                }
            };
            shapes.push(cur.clone());
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Softmax)) {
            return Err(Error::config("model.layers", "last layer must be softmax"));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.sample_shapes().map(|_| ())
    }

    /// Shapes of the parameter tensors of each layer.
    pub fn param_shapes(&self) -> Result<Vec<Vec<Vec<usize>>>> {
        let shapes = self.sample_shapes()?;
        Ok(self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| match *l {
                LayerSpec::Conv2D { filters, kernel } => {
                    let cin = shapes[i - 1][2];
                    vec![vec![kernel, kernel, cin, filters], vec![filters]]
                }
                LayerSpec::Dense { units } => vec![vec![shapes[i - 1][0], units], vec![units]],
                _ => Vec::new(),
            })
            .collect())
    }

    /// LeCun-uniform weights and zero biases.
    pub fn init_params(&self, rng: &mut impl Rng) -> Result<ModelParams> {
        let layers = self
            .param_shapes()?
            .into_iter()
            .map(|tensors| {
                tensors
                    .into_iter()
                    .enumerate()
                    .map(|(j, shape)| {
                        if j == 0 {
                            let fan_in = shape[..shape.len() - 1].iter().product();
                            lecun_uniform(&shape, fan_in, rng)
                        } else {
                            Ok(Tensor::zeros(&shape))
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelParams { layers })
    }
}

/// Per-layer parameter tensors (`[weight, bias]` for conv and dense layers,
/// empty otherwise).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<Vec<Tensor>>,
}

impl ModelParams {
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flatten()
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flatten()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            flat.extend_from_slice(t.data());
        }
        flat
    }

    /// Rebuilds parameters with this structure from a flat vector.
    pub fn with_flat(&self, flat: &[f64]) -> Result<ModelParams> {
        if flat.len() != self.num_params() {
            return Err(Error::shape("flat parameter vector", &[self.num_params()], &[flat.len()]));
        }
        let mut out = self.clone();
        let mut offset = 0;
        for t in out.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(out)
    }

    pub fn is_congruent(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.shape() == y.shape())
            })
    }

    pub fn check_congruent(&self, other: &ModelParams) -> Result<()> {
        if self.is_congruent(other) {
            Ok(())
        } else {
            Err(Error::Incongruent(format!(
                "{} parameters in {} layers vs {} parameters in {} layers",
                self.num_params(),
                self.layers.len(),
                other.num_params(),
                other.layers.len()
            )))
        }
    }

    /// Hash of every shape and value bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for t in self.tensors() {
            t.shape().hash(&mut h);
            for v in t.data() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Loss gradients with respect to the parameters, and with respect to the
/// input batch when requested.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub params: ModelParams,
    pub input: Option<Tensor>,
}

enum Cache {
    None,
    Conv { input_shape: Vec<usize>, patches: Vec<f64> },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    /// Activation output; both derivatives are functions of it.
    Activation(Tensor),
    Dropout(Option<DropoutMask>),
    Reshape(Vec<usize>),
    Dense(Tensor),
}

fn check_batch(spec: &ModelSpec, batch: &Tensor) -> Result<()> {
    let [h, w, c] = spec.input_shape();
    if batch.shape().len() != 4 || batch.sample_shape() != [h, w, c] {
        let mut expected = vec![batch.shape().first().copied().unwrap_or(1)];
        expected.extend([h, w, c]);
        return Err(Error::shape("model input batch", &expected, batch.shape()));
    }
    Ok(())
}

/// Runs every layer up to (excluding) the softmax. Returns the logits and,
/// when `keep_caches`, what the backward pass needs.
fn forward_logits(
    spec: &ModelSpec,
    params: &ModelParams,
    batch: &Tensor,
    mode: Mode,
    rng: &mut impl Rng,
    keep_caches: bool,
) -> Result<(Tensor, Vec<Cache>)> {
    let stop = spec.layers.len() - 1;
    forward_until(spec, params, batch, mode, rng, keep_caches, stop)
}

#[allow(clippy::too_many_arguments)]
fn forward_until(
    spec: &ModelSpec,
    params: &ModelParams,
    batch: &Tensor,
    mode: Mode,
    rng: &mut impl Rng,
    keep_caches: bool,
    stop: usize,
) -> Result<(Tensor, Vec<Cache>)> {
    check_batch(spec, batch)?;
    if params.layers.len() != spec.layers.len() {
        return Err(Error::Incongruent(format!(
            "spec has {} layers, params have {}",
            spec.layers.len(),
            params.layers.len()
        )));
    }
    let n = batch.batch_len();
    let mut x = batch.clone();
    let mut caches = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate().take(stop) {
        let p = &params.layers[i];
        let (y, cache) = match *layer {
            LayerSpec::Input { .. } => (x, Cache::None),
            LayerSpec::Conv2D { .. } => {
                let f = layers::conv2d_forward(&x, &p[0], &p[1])?;
                let cache = if keep_caches {
                    Cache::Conv { input_shape: x.shape().to_vec(), patches: f.patches }
                } else {
                    Cache::None
                };
                (f.output, cache)
            }
            LayerSpec::MaxPool2D { pool } => {
                let f = layers::maxpool_forward(&x, pool)?;
                let cache = if keep_caches {
                    Cache::Pool { input_shape: x.shape().to_vec(), argmax: f.argmax }
                } else {
                    Cache::None
                };
                (f.output, cache)
            }
            LayerSpec::Noise { sigma, sensitivity, at_inference } => {
                if mode == Mode::Train || at_inference {
                    noise::add_noise_in_place(&mut x, sensitivity * sigma, rng);
                }
                (x, Cache::None)
            }
            LayerSpec::Selu | LayerSpec::Relu => {
                let f = if matches!(layer, LayerSpec::Selu) { activation::selu } else { activation::relu };
                let mut y = x;
                y.data_mut().iter_mut().for_each(|v| *v = f(*v));
                let cache = if keep_caches { Cache::Activation(y.clone()) } else { Cache::None };
                (y, cache)
            }
            LayerSpec::AlphaDropout { rate } => {
                let (y, mask) = alpha_dropout(&x, rate, mode, rng)?;
                (y, Cache::Dropout(mask))
            }
            LayerSpec::Flatten => {
                let shape = x.shape().to_vec();
                let d = x.sample_len();
                (x.reshape(vec![n, d])?, Cache::Reshape(shape))
            }
            LayerSpec::Dense { .. } => {
                let y = layers::dense_forward(&x, &p[0], &p[1])?;
                (y, if keep_caches { Cache::Dense(x) } else { Cache::None })
            }
            LayerSpec::Softmax => break,
        };
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("layer {i} ({})", layer.name())));
        }
        x = y;
        caches.push(cache);
    }
    Ok((x, caches))
}

/// Activations after running layers `[0, stop)`.
pub fn forward_prefix(
    spec: &ModelSpec,
    params: &ModelParams,
    batch: &Tensor,
    stop: usize,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    if stop >= spec.layers.len() {
        return Err(Error::config("prefix", format!("stop index {stop} beyond the pre-softmax layers")));
    }
    forward_until(spec, params, batch, mode, rng, false, stop).map(|(x, _)| x)
}

/// Class probabilities for every sample of `batch` (`[n, h, w, c]`).
pub fn forward(spec: &ModelSpec, params: &ModelParams, batch: &Tensor, mode: Mode, rng: &mut impl Rng) -> Result<Tensor> {
    let (mut logits, _) = forward_logits(spec, params, batch, mode, rng, false)?;
    let k = logits.sample_len();
    let mut row = vec![0.0; k];
    for i in 0..logits.batch_len() {
        let s = logits.sample_mut(i);
        softmax_into(s, &mut row);
        s.copy_from_slice(&row);
    }
    Ok(logits)
}

/// Mean cross-entropy over the batch and its gradients. The input gradient is
/// formed only when `need_input` is set. Stochastic layers reuse the noise and
/// masks realized during the paired forward pass.
pub fn backward(
    spec: &ModelSpec,
    params: &ModelParams,
    batch: &Tensor,
    labels: &[usize],
    mode: Mode,
    rng: &mut impl Rng,
    need_input: bool,
) -> Result<(f64, Gradients)> {
    if labels.len() != batch.shape().first().copied().unwrap_or(0) {
        return Err(Error::shape("labels vs batch", &[batch.shape()[0]], &[labels.len()]));
    }
    let (logits, mut caches) = forward_logits(spec, params, batch, mode, rng, true)?;
    let n = labels.len();
    let k = logits.sample_len();
    let mut loss = 0.0;
    let mut d = Vec::with_capacity(n * k);
    for (i, &label) in labels.iter().enumerate() {
        let (l, g) = softmax_cross_entropy(logits.sample(i), label)?;
        loss += l;
        d.extend(g.into_iter().map(|v| v / n as f64));
    }
    let mut grad = Tensor::new(logits.shape().to_vec(), d)?;

    let mut param_grads: Vec<Vec<Tensor>> = params.layers.iter().map(|_| Vec::new()).collect();
    let first_compute = spec.layers.iter().position(|l| !matches!(l, LayerSpec::Input { .. })).unwrap_or(0);
    // caches[i] belongs to layers[i]; the softmax layer has no cache.
    for i in (0..caches.len()).rev() {
        let want_dx = need_input || i > first_compute;
        let cache = std::mem::replace(&mut caches[i], Cache::None);
        let p = &params.layers[i];
        grad = match (&spec.layers[i], cache) {
            (LayerSpec::Input { .. }, _) => grad,
            (LayerSpec::Conv2D { .. }, Cache::Conv { input_shape, patches }) => {
                let g = layers::conv2d_backward(&input_shape, &patches, &p[0], &grad, want_dx)?;
                param_grads[i] = vec![g.weight, g.bias];
                match g.input {
                    Some(dx) => dx,
                    None => Tensor::zeros(&input_shape),
                }
            }
            (LayerSpec::MaxPool2D { .. }, Cache::Pool { input_shape, argmax }) => {
                layers::maxpool_backward(&input_shape, &argmax, &grad)?
            }
            (LayerSpec::Noise { .. }, _) => grad,
            (LayerSpec::Selu, Cache::Activation(y)) => {
                let mut g = grad;
                for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                    *gv = activation::selu_backward_from_output(yv, *gv);
                }
                g
            }
            (LayerSpec::Relu, Cache::Activation(y)) => {
                let mut g = grad;
                // relu(x) > 0 exactly when x > 0
                for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                    *gv = activation::relu_backward(yv, *gv);
                }
                g
            }
            (LayerSpec::AlphaDropout { .. }, Cache::Dropout(mask)) => match mask {
                None => grad,
                Some(mask) => {
                    let mut g = grad;
                    for (gv, &keep) in g.data_mut().iter_mut().zip(&mask.keep) {
                        *gv = if keep { *gv * mask.scale } else { 0.0 };
                    }
                    g
                }
            },
            (LayerSpec::Flatten, Cache::Reshape(shape)) => grad.reshape(shape)?,
            (LayerSpec::Dense { .. }, Cache::Dense(x)) => {
                let g = layers::dense_backward(&x, &p[0], &grad)?;
                param_grads[i] = vec![g.weight, g.bias];
                g.input
            }
            (layer, _) => unreachable!("cache does not match layer {}", layer.name()),
        };
        if !grad.is_finite() {
            return Err(Error::NonFinite(format!("gradient of layer {i} ({})", spec.layers[i].name())));
        }
    }

    Ok((
        loss / n as f64,
        Gradients {
            params: ModelParams { layers: param_grads },
            input: need_input.then_some(grad),
        },
    ))
}

/// A spec and its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ModelParams,
}

impl Model {
    pub fn new(spec: ModelSpec, params: ModelParams) -> Result<Self> {
        let expected = spec.param_shapes()?;
        let ok = expected.len() == params.layers.len()
            && expected
                .iter()
                .zip(&params.layers)
                .all(|(shapes, ts)| shapes.len() == ts.len() && shapes.iter().zip(ts).all(|(s, t)| s[..] == *t.shape()));
        if !ok {
            return Err(Error::Incongruent("parameters do not match the model spec".into()));
        }
        Ok(Model { spec, params })
    }

    pub fn init(spec: ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        let params = spec.init_params(rng)?;
        Ok(Model { spec, params })
    }

    pub fn forward(&self, batch: &Tensor, mode: Mode, rng: &mut impl Rng) -> Result<Tensor> {
        forward(&self.spec, &self.params, batch, mode, rng)
    }

    /// Mean loss and gradients with respect to parameters and input.
    pub fn backward(&self, batch: &Tensor, labels: &[usize], mode: Mode, rng: &mut impl Rng) -> Result<(f64, Gradients)> {
        backward(&self.spec, &self.params, batch, labels, mode, rng, true)
    }

    pub fn loss(&self, batch: &Tensor, labels: &[usize], mode: Mode, rng: &mut impl Rng) -> Result<f64> {
        let probs = self.forward(batch, mode, rng)?;
        let mut total = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let p = probs.sample(i);
            if label >= p.len() {
                return Err(Error::LabelOutOfRange { label, classes: p.len() });
            }
            total -= p[label].max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / labels.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseConfig;
    use crate::rng;

    fn small_arch() -> ArchConfig {
        ArchConfig { filters: (2, 3), kernel: 3, pool: 2, dropout_rate: 0.1 }
    }

    #[test]
    fn reference_stacks_have_expected_shapes() {
        let noise = NoiseConfig::default();
        let d = ModelSpec::dipsen([28, 28, 1], 10, &ArchConfig::default(), &noise).unwrap();
        let shapes = d.sample_shapes().unwrap();
        assert_eq!(shapes[1], vec![26, 26, 32]);
        assert_eq!(shapes[2], vec![13, 13, 32]);
        assert_eq!(shapes[4], vec![11, 11, 64]);
        assert_eq!(shapes[5], vec![5, 5, 64]);
        assert_eq!(shapes[8], vec![1600]);
        assert_eq!(d.num_classes(), 10);
        let noise_layers = d.layers.iter().filter(|l| matches!(l, LayerSpec::Noise { .. })).count();
        let selu_layers = d.layers.iter().filter(|l| matches!(l, LayerSpec::Selu)).count();
        assert_eq!((noise_layers, selu_layers), (1, 1));
        let c = ModelSpec::cnn([28, 28, 1], 10, &ArchConfig::default()).unwrap();
        let nonempty = |s: &ModelSpec| s.param_shapes().unwrap().into_iter().filter(|t| !t.is_empty()).collect::<Vec<_>>();
        assert_eq!(nonempty(&c), nonempty(&d));
    }

    #[test]
    fn invalid_stacks_rejected() {
        assert!(ModelSpec::new(vec![LayerSpec::Flatten, LayerSpec::Softmax]).is_err());
        assert!(ModelSpec::new(vec![
            LayerSpec::Input { height: 2, width: 2, channels: 1 },
            LayerSpec::Conv2D { filters: 1, kernel: 3 },
            LayerSpec::Flatten,
            LayerSpec::Softmax,
        ])
        .is_err());
        assert!(ModelSpec::new(vec![
            LayerSpec::Input { height: 4, width: 4, channels: 1 },
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ])
        .is_err());
    }

    #[test]
    fn flat_round_trip_is_identity() {
        let spec = ModelSpec::dipsen([12, 12, 1], 3, &small_arch(), &NoiseConfig::default()).unwrap();
        let p = spec.init_params(&mut rng::stream(2)).unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.num_params());
        assert_eq!(p.with_flat(&flat).unwrap(), p);
        assert!(p.with_flat(&flat[1..]).is_err());
    }

    #[test]
    fn forward_rows_sum_to_one() {
        let spec = ModelSpec::dipsen([12, 12, 1], 3, &small_arch(), &NoiseConfig::default()).unwrap();
        let model = Model::init(spec, &mut rng::stream(4)).unwrap();
        let x = Tensor::full(&[5, 12, 12, 1], 0.5);
        let p = model.forward(&x, Mode::Infer, &mut rng::stream(1)).unwrap();
        for i in 0..5 {
            assert!((p.sample(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_rejects_wrong_input_shape() {
        let spec = ModelSpec::cnn([12, 12, 1], 3, &small_arch()).unwrap();
        let model = Model::init(spec, &mut rng::stream(4)).unwrap();
        let err = model.forward(&Tensor::zeros(&[2, 11, 12, 1]), Mode::Infer, &mut rng::stream(0)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }
}
