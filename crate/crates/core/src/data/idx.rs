//! IDX binary arrays: a 4-byte big-endian magic (two zero bytes, a type
//! code, the rank), one big-endian `u32` per dimension, then the payload.

use thiserror::Error;

pub const TYPE_U8: u8 = 0x08;
pub const TYPE_F64: u8 = 0x0E;

pub const MNIST_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const MNIST_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad magic number 0x{found:08x}: leading bytes must be zero")]
    BadMagic { found: u32 },

    #[error("unsupported element type 0x{0:02x}")]
    UnsupportedType(u8),

    #[error("unexpected magic number 0x{found:08x} (expected 0x{expected:08x})")]
    WrongMagic { expected: u32, found: u32 },

    #[error("truncated: need {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("{0} unexpected trailing bytes after payload")]
    TrailingBytes(usize),

    #[error("item count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("label {label} at index {index} exceeds {classes} classes")]
    BadLabel { index: usize, label: u8, classes: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    U8(Vec<u8>),
    F64(Vec<f64>),
}

impl IdxData {
    fn type_code(&self) -> u8 {
        match self {
            IdxData::U8(_) => TYPE_U8,
            IdxData::F64(_) => TYPE_F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            IdxData::U8(v) => v.len(),
            IdxData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: IdxData,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        ((self.data.type_code() as u32) << 8) | self.dims.len() as u32
    }
}

fn need(bytes: &[u8], expected: usize) -> Result<(), IdxError> {
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    Ok(())
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray, IdxError> {
    need(bytes, 4)?;
    let magic = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    if bytes[0] != 0 || bytes[1] != 0 || bytes[3] == 0 {
        return Err(IdxError::BadMagic { found: magic });
    }
    let type_code = bytes[2];
    let width = match type_code {
        TYPE_U8 => 1,
        TYPE_F64 => 8,
        other => return Err(IdxError::UnsupportedType(other)),
    };
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    need(bytes, header)?;
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let total = header + count * width;
    need(bytes, total)?;
    if bytes.len() > total {
        return Err(IdxError::TrailingBytes(bytes.len() - total));
    }
    let payload = &bytes[header..total];
    let data = match type_code {
        TYPE_U8 => IdxData::U8(payload.to_vec()),
        _ => IdxData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Ok(IdxArray { dims, data })
}

pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + array.data.len() * 8);
    out.extend_from_slice(&array.magic().to_be_bytes());
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    match &array.data {
        IdxData::U8(v) => out.extend_from_slice(v),
        IdxData::F64(v) => {
            for x in v {
                out.extend_from_slice(&x.to_be_bytes());
            }
        }
    }
    out
}
