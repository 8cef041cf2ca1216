//! Forward and backward kernels for the parameterized and pooling layers.
//!
//! Batch activations are NHWC. Convolutions are stride-1, valid-padding
//! cross-correlations lowered to a matrix product over im2col patches;
//! kernels are stored `[kh, kw, c_in, c_out]` so that the flattened kernel
//! is a `(kh·kw·c_in) × c_out` matrix whose rows line up with patch columns.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `C = op(A)·op(B) + beta·C` for row-major `m×k` by `k×n` operands.
/// With `a_t` the buffer `a` holds `k×m`; with `b_t` the buffer `b` holds `n×k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // elements of the three slices, whose lengths are checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn expect_rank(context: &str, t: &Tensor, rank: usize) -> Result<()> {
    if t.shape().len() != rank {
        return Err(Error::ShapeMismatch {
            context: format!("{context}: expected rank {rank}"),
            expected: vec![rank],
            actual: t.shape().to_vec(),
        });
    }
    Ok(())
}

/// Output extent of a valid convolution.
pub fn conv_out_extent(input: usize, kernel: usize) -> Option<usize> {
    input.checked_sub(kernel).map(|d| d + 1).filter(|&d| d > 0)
}

/// Forward result of a convolution; `patches` is kept for the backward pass.
pub struct ConvForward {
    pub output: Tensor,
    pub patches: Vec<f64>,
}

pub fn conv2d_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<ConvForward> {
    expect_rank("conv2d input", input, 4)?;
    expect_rank("conv2d kernel", weight, 4)?;
    let &[n, h, w, cin] = input.shape() else { unreachable!() };
    let &[kh, kw, wcin, cout] = weight.shape() else { unreachable!() };
    if wcin != cin {
        return Err(Error::shape("conv2d input channels", &[wcin], &[cin]));
    }
    if bias.shape() != [cout] {
        return Err(Error::shape("conv2d bias", &[cout], bias.shape()));
    }
    let (Some(oh), Some(ow)) = (conv_out_extent(h, kh), conv_out_extent(w, kw)) else {
        return Err(Error::shape("conv2d spatial extent (input smaller than kernel)", &[kh, kw], &[h, w]));
    };

    let k = kh * kw * cin;
    let m = n * oh * ow;
    let row = kw * cin;
    let x = input.data();
    let mut patches = vec![0.0; m * k];
    for s in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let p = ((s * oh + oy) * ow + ox) * k;
                for ky in 0..kh {
                    let src = ((s * h + oy + ky) * w + ox) * cin;
                    patches[p + ky * row..p + (ky + 1) * row].copy_from_slice(&x[src..src + row]);
                }
            }
        }
    }

    let mut out = Vec::with_capacity(m * cout);
    for _ in 0..m {
        out.extend_from_slice(bias.data());
    }
    gemm(m, k, cout, &patches, false, weight.data(), false, &mut out, 1.0);
    Ok(ConvForward {
        output: Tensor::new(vec![n, oh, ow, cout], out)?,
        patches,
    })
}

pub struct ConvGrads {
    pub weight: Tensor,
    pub bias: Tensor,
    pub input: Option<Tensor>,
}

/// Backward pass of [`conv2d_forward`]. The input gradient is only formed
/// when `need_input` is set.
pub fn conv2d_backward(
    input_shape: &[usize],
    patches: &[f64],
    weight: &Tensor,
    d_out: &Tensor,
    need_input: bool,
) -> Result<ConvGrads> {
    let &[n, h, w, cin] = input_shape else {
        return Err(Error::shape("conv2d backward input rank", &[4], &[input_shape.len()]));
    };
    let &[kh, kw, _, cout] = weight.shape() else { unreachable!() };
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    if d_out.shape() != [n, oh, ow, cout] {
        return Err(Error::shape("conv2d upstream gradient", &[n, oh, ow, cout], d_out.shape()));
    }
    let k = kh * kw * cin;
    let m = n * oh * ow;
    let dy = d_out.data();

    let mut dw = vec![0.0; k * cout];
    gemm(k, m, cout, patches, true, dy, false, &mut dw, 0.0);
    let mut db = vec![0.0; cout];
    for r in dy.chunks_exact(cout) {
        for (acc, g) in db.iter_mut().zip(r) {
            *acc += g;
        }
    }

    let input = if need_input {
        let mut dp = vec![0.0; m * k];
        gemm(m, cout, k, dy, false, weight.data(), true, &mut dp, 0.0);
        let row = kw * cin;
        let mut dx = vec![0.0; n * h * w * cin];
        for s in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let p = ((s * oh + oy) * ow + ox) * k;
                    for ky in 0..kh {
                        let dst = ((s * h + oy + ky) * w + ox) * cin;
                        for (d, g) in dx[dst..dst + row].iter_mut().zip(&dp[p + ky * row..p + (ky + 1) * row]) {
                            *d += g;
                        }
                    }
                }
            }
        }
        Some(Tensor::new(input_shape.to_vec(), dx)?)
    } else {
        None
    };

    Ok(ConvGrads {
        weight: Tensor::new(weight.shape().to_vec(), dw)?,
        bias: Tensor::new(vec![cout], db)?,
        input,
    })
}

pub struct PoolForward {
    pub output: Tensor,
    /// Flat input index of the selected maximum for every output element.
    pub argmax: Vec<usize>,
}

/// Max pooling over non-overlapping `pool × pool` windows; trailing rows and
/// columns that do not fill a window are dropped.
pub fn maxpool_forward(input: &Tensor, pool: usize) -> Result<PoolForward> {
    expect_rank("maxpool input", input, 4)?;
    let &[n, h, w, c] = input.shape() else { unreachable!() };
    let (oh, ow) = (h / pool.max(1), w / pool.max(1));
    if pool == 0 || oh == 0 || ow == 0 {
        return Err(Error::shape("maxpool window larger than input", &[pool, pool], &[h, w]));
    }
    let x = input.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut argmax = Vec::with_capacity(n * oh * ow * c);
    for s in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = ((s * h + oy * pool) * w + ox * pool) * c + ch;
                    for dy in 0..pool {
                        for dx in 0..pool {
                            let i = ((s * h + oy * pool + dy) * w + ox * pool + dx) * c + ch;
                            if x[i] > x[best] {
                                best = i;
                            }
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
    }
    Ok(PoolForward {
        output: Tensor::new(vec![n, oh, ow, c], out)?,
        argmax,
    })
}

pub fn maxpool_backward(input_shape: &[usize], argmax: &[usize], d_out: &Tensor) -> Result<Tensor> {
    if d_out.len() != argmax.len() {
        return Err(Error::shape("maxpool upstream gradient", &[argmax.len()], &[d_out.len()]));
    }
    let mut dx = vec![0.0; input_shape.iter().product()];
    for (&i, &g) in argmax.iter().zip(d_out.data()) {
        dx[i] += g;
    }
    Tensor::new(input_shape.to_vec(), dx)
}

/// Affine map `y = x·W + b` for `x: [n, d]`, `W: [d, units]`.
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    expect_rank("dense input", input, 2)?;
    let &[n, d] = input.shape() else { unreachable!() };
    let &[wd, units] = weight.shape() else {
        return Err(Error::shape("dense weight rank", &[2], &[weight.shape().len()]));
    };
    if wd != d {
        return Err(Error::shape("dense input features", &[wd], &[d]));
    }
    if bias.shape() != [units] {
        return Err(Error::shape("dense bias", &[units], bias.shape()));
    }
    let mut out = Vec::with_capacity(n * units);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    gemm(n, d, units, input.data(), false, weight.data(), false, &mut out, 1.0);
    Tensor::new(vec![n, units], out)
}

pub struct DenseGrads {
    pub weight: Tensor,
    pub bias: Tensor,
    pub input: Tensor,
}

pub fn dense_backward(input: &Tensor, weight: &Tensor, d_out: &Tensor) -> Result<DenseGrads> {
    let &[n, d] = input.shape() else { unreachable!() };
    let units = weight.shape()[1];
    if d_out.shape() != [n, units] {
        return Err(Error::shape("dense upstream gradient", &[n, units], d_out.shape()));
    }
    let mut dw = vec![0.0; d * units];
    gemm(d, n, units, input.data(), true, d_out.data(), false, &mut dw, 0.0);
    let mut db = vec![0.0; units];
    for r in d_out.data().chunks_exact(units) {
        for (acc, g) in db.iter_mut().zip(r) {
            *acc += g;
        }
    }
    let mut dx = vec![0.0; n * d];
    gemm(n, units, d, d_out.data(), false, weight.data(), true, &mut dx, 0.0);
    Ok(DenseGrads {
        weight: Tensor::new(vec![d, units], dw)?,
        bias: Tensor::new(vec![units], db)?,
        input: Tensor::new(vec![n, d], dx)?,
    })
}
