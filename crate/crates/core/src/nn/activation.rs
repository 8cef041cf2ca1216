//! SELU, ReLU and alpha dropout.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// SELU scale (λ).
pub const SELU_SCALE: f64 = 1.050_700_987_355_480_5;
/// SELU alpha (α).
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;
/// Negative saturation value of SELU, −λα.
pub const SELU_SATURATION: f64 = -SELU_SCALE * SELU_ALPHA;

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_SCALE * x
    } else {
        SELU_SCALE * SELU_ALPHA * x.exp_m1()
    }
}

pub fn selu_backward(x: f64, upstream: f64) -> f64 {
    if x > 0.0 {
        upstream * SELU_SCALE
    } else {
        upstream * SELU_SCALE * SELU_ALPHA * x.exp()
    }
}

/// SELU derivative expressed through the output `y = selu(x)`:
/// `λ` for `y > 0`, else `y + λα` (which equals `λα·eˣ`).
pub fn selu_backward_from_output(y: f64, upstream: f64) -> f64 {
    if y > 0.0 {
        upstream * SELU_SCALE
    } else {
        upstream * (y - SELU_SATURATION)
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn relu_backward(x: f64, upstream: f64) -> f64 {
    if x > 0.0 {
        upstream
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Realized alpha-dropout transform: `y = a * (keep ? x : −λα) + b`.
#[derive(Clone, Debug)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub scale: f64,
}

/// Affine correction `(a, b)` that restores zero mean and unit variance
/// after replacing a `rate` fraction of units with −λα.
pub fn alpha_dropout_affine(rate: f64) -> (f64, f64) {
    let q = 1.0 - rate;
    let sat = SELU_SATURATION;
    let a = (q + sat * sat * q * (1.0 - q)).powf(-0.5);
    let b = -a * (1.0 - q) * sat;
    (a, b)
}

pub fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config("dropout.rate", format!("must lie in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Applies alpha dropout. Inference and `rate == 0` are the identity and draw
/// nothing from `rng`; the returned mask is `None` in that case.
pub fn alpha_dropout(
    activations: &Tensor,
    rate: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<(Tensor, Option<DropoutMask>)> {
    check_dropout_rate(rate)?;
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((activations.clone(), None));
    }
    let (a, b) = alpha_dropout_affine(rate);
    // P(u64 < threshold) = rate, up to 2^-64
    let threshold = (rate * 2f64.powi(64)) as u64;
    let mut out = activations.clone();
    let keep: Vec<bool> = out
        .data_mut()
        .iter_mut()
        .map(|v| {
            let k = rng.next_u64() >= threshold;
            *v = a * if k { *v } else { SELU_SATURATION } + b;
            k
        })
        .collect();
    Ok((out, Some(DropoutMask { keep, scale: a })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        (m, var)
    }

    #[test]
    fn selu_reference_values() {
        assert_eq!(selu(0.0), 0.0);
        assert_eq!(selu(1.0), 1.050_700_987_355_480_5);
        // λα(e^-1 - 1) evaluated independently
        let expected = 1.050_700_987_355_480_5 * 1.673_263_242_354_377_2 * ((-1.0f64).exp() - 1.0);
        assert!((selu(-1.0) - expected).abs() < 1e-15);
        assert!((selu(-1.0) - -1.111_330_737_812_562_3).abs() < 1e-12);
        assert!((selu(-50.0) - -1.758_099_340_847_376_6).abs() < 1e-12);
        assert_eq!(selu(-50.0), SELU_SATURATION);
    }

    #[test]
    fn selu_derivative_values() {
        assert_eq!(selu_backward(2.0, 1.0), SELU_SCALE);
        assert!((selu_backward(-1e-300, 1.0) - 1.758_099_340_847_376_6).abs() < 1e-12);
        for &x in &[-3.0, -0.7, -0.1, 0.3, 1.7, 4.0] {
            let h = 1e-5;
            let fd = (selu(x + h) - selu(x - h)) / (2.0 * h);
            let an = selu_backward(x, 1.0);
            assert!((an - fd).abs() <= 1e-6 * an.abs().max(1.0), "x={x}: {an} vs {fd}");
        }
    }

    #[test]
    fn derivative_from_output_matches_derivative_from_input() {
        for &x in &[-20.0, -3.0, -0.7, -1e-9, 0.0, 1e-9, 0.3, 4.0] {
            let a = selu_backward(x, 1.5);
            let b = selu_backward_from_output(selu(x), 1.5);
            assert!((a - b).abs() <= 1e-15 * (1.0 + a.abs()), "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn alpha_dropout_identities() {
        let mut r = rng::stream(1);
        let x = Tensor::new(vec![2, 3], vec![0.1, -0.5, 2.0, 0.0, 1.0, -3.0]).unwrap();
        let (y, m) = alpha_dropout(&x, 0.0, Mode::Train, &mut r).unwrap();
        assert_eq!(y, x);
        assert!(m.is_none());
        let (y, _) = alpha_dropout(&x, 0.3, Mode::Infer, &mut r).unwrap();
        assert_eq!(y, x);
        assert!(alpha_dropout(&x, 1.0, Mode::Train, &mut r).is_err());
        assert!(alpha_dropout(&x, -0.1, Mode::Train, &mut r).is_err());
    }

    #[test]
    fn alpha_dropout_preserves_standard_moments() {
        let mut r = rng::stream(5);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
        let x = Tensor::new(vec![n], xs).unwrap();
        let (y, _) = alpha_dropout(&x, 0.1, Mode::Train, &mut r).unwrap();
        let (m, v) = mean_var(y.data());
        assert!(m.abs() <= 0.01, "mean {m}");
        assert!((v - 1.0).abs() <= 0.03, "var {v}");
    }
}
