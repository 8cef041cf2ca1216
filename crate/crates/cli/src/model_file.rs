//! `FRB1` parameter files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FRB1"
//! u32 layer count
//! per layer:  u32 tensor count, then per tensor u32 rank and rank × u64 extents
//! f64 values of every tensor, in layer order
//! ```

use std::fs;
use std::path::Path;

use fedrobust_core::nn::{Model, ModelParams, ModelSpec};
use fedrobust_core::Tensor;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"FRB1";

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * params.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for layer in &params.layers {
        out.extend_from_slice(&(layer.len() as u32).to_le_bytes());
        for t in layer {
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
    }
    for v in params.tensors().flat_map(|t| t.data()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decoded parameters plus the byte offset of each layer header.
#[derive(Debug)]
pub struct Decoded {
    pub params: ModelParams,
    pub layer_offsets: Vec<usize>,
}

/// Failure at a byte offset.
#[derive(Debug, PartialEq)]
pub struct DecodeError {
    pub offset: usize,
    pub reason: String,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&[u8], DecodeError> {
        match self.bytes.get(self.pos..self.pos.saturating_add(n)) {
            Some(s) => {
                self.pos += n;
                Ok(s)
            }
            None => Err(DecodeError {
                offset: self.pos,
                reason: format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> std::result::Result<usize, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self, what: &str) -> std::result::Result<usize, DecodeError> {
        let at = self.pos;
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| DecodeError { offset: at, reason: format!("{what} {v} too large") })
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Decoded, DecodeError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(DecodeError { offset: 0, reason: format!("bad magic {magic:02x?}, expected \"FRB1\"") });
    }
    let layer_count = r.u32("layer count")?;
    let mut shapes = Vec::new();
    let mut layer_offsets = Vec::new();
    let mut total = 0usize;
    for _ in 0..layer_count {
        layer_offsets.push(r.pos);
        let tensors = r.u32("tensor count")?;
        let mut layer = Vec::new();
        for _ in 0..tensors {
            let rank = r.u32("tensor rank")?;
            let at = r.pos;
            let dims = (0..rank).map(|_| r.u64("extent")).collect::<std::result::Result<Vec<_>, _>>()?;
            let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            total = len.and_then(|n| total.checked_add(n)).ok_or(DecodeError { offset: at, reason: "tensor size overflows".into() })?;
            layer.push(dims);
        }
        shapes.push(layer);
    }
    let data_start = r.pos;
    let needed = total.checked_mul(8).filter(|&n| n <= bytes.len() - data_start).ok_or_else(|| DecodeError {
        offset: data_start,
        reason: format!("truncated payload: headers declare {total} values, {} bytes left", bytes.len() - data_start),
    })?;
    if bytes.len() - data_start != needed {
        return Err(DecodeError { offset: data_start + needed, reason: format!("{} trailing bytes", bytes.len() - data_start - needed) });
    }
    let mut layers = Vec::with_capacity(shapes.len());
    for layer in shapes {
        let mut tensors = Vec::with_capacity(layer.len());
        for dims in layer {
            let at = r.pos;
            let n: usize = dims.iter().product();
            let raw = r.take(8 * n, "values")?;
            let values: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(DecodeError { offset: at + 8 * i, reason: "non-finite parameter".into() });
            }
            tensors.push(Tensor::new(dims, values).map_err(|e| DecodeError { offset: at, reason: e.to_string() })?);
        }
        layers.push(tensors);
    }
    Ok(Decoded { params: ModelParams { layers }, layer_offsets })
}

pub fn save(path: &Path, params: &ModelParams) -> Result<()> {
    fs::write(path, encode(params)).map_err(|source| CliError::Output { path: path.to_path_buf(), source })
}

/// Reads parameters for `spec`, rejecting files whose layer structure does
/// not match it.
pub fn load(path: &Path, spec: &ModelSpec) -> Result<Model> {
    let fail = |offset, reason: String| CliError::ModelFile { path: path.to_path_buf(), offset, reason };
    let bytes = fs::read(path).map_err(|e| fail(0, e.to_string()))?;
    let decoded = decode(&bytes).map_err(|e| fail(e.offset, e.reason))?;
    let expected = spec.param_shapes()?;
    if decoded.params.layers.len() != expected.len() {
        return Err(fail(4, format!("{} layers, the configured model has {}", decoded.params.layers.len(), expected.len())));
    }
    for (i, (layer, want)) in decoded.params.layers.iter().zip(&expected).enumerate() {
        let got: Vec<Vec<usize>> = layer.iter().map(|t| t.shape().to_vec()).collect();
        if &got != want {
            return Err(fail(decoded.layer_offsets[i], format!("layer {i} has shapes {got:?}, expected {want:?}")));
        }
    }
    Ok(Model { spec: spec.clone(), params: decoded.params })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams {
            layers: vec![
                vec![],
                vec![Tensor::new(vec![2, 3], vec![1., -2., 3.5, 0., 1e-300, 7.]).unwrap(), Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap()],
            ],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let bytes = encode(&params());
        assert_eq!(&bytes[..4], b"FRB1");
        let back = decode(&bytes).unwrap();
        assert_eq!(back.params, params());
        assert_eq!(back.layer_offsets, vec![8, 12]);
        assert_eq!(encode(&back.params), bytes);
    }

    #[test]
    fn corruption_is_located() {
        let bytes = encode(&params());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert_eq!(decode(&bad_magic).unwrap_err().offset, 0);
        let truncated = &bytes[..bytes.len() - 3];
        assert!(decode(truncated).unwrap_err().reason.contains("truncated"));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(decode(&long).unwrap_err().offset, bytes.len());
        let mut nan = bytes.clone();
        let at = bytes.len() - 8;
        nan[at..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert_eq!(decode(&nan).unwrap_err(), DecodeError { offset: at, reason: "non-finite parameter".into() });
    }
}
