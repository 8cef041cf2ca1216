use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// LeCun uniform initializer: i.i.d. `U(-√(3/fan_in), √(3/fan_in))`.
pub fn lecun_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Result<Tensor> {
    if fan_in == 0 {
        return Err(Error::config("init.fan_in", "must be at least 1"));
    }
    let limit = (3.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(shape.to_vec(), data)
}
