//! Portable n-dimensional array and its `CQT1` on-disk encoding.
//!
//! Layout: magic `CQT1`, one dtype byte (0=u8, 1=i32, 2=f32, 3=f64), one
//! ndim byte, `ndim` little-endian u32 dimensions, then the row-major
//! little-endian payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CQT1";
pub const FORMAT_VERSION: u32 = 1;
const MAX_DIM: usize = (1 << 31) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    U8,
    I32,
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::U8 => 0,
            DType::I32 => 1,
            DType::F32 => 2,
            DType::F64 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::U8),
            1 => Some(DType::I32),
            2 => Some(DType::F32),
            3 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size_of(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::I32 | DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::U8 => "u8",
            DType::I32 => "i32",
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone)]
pub enum TensorData {
    U8(Vec<u8>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::U8(_) => DType::U8,
            TensorData::I32(_) => DType::I32,
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::U8(v) => v.len(),
            TensorData::I32(v) => v.len(),
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Element-wise conversion to f64 (exact for every supported dtype).
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::I32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }
}

// Floats compare by bit pattern so that NaN payloads and signed zeros
// survive round-trip assertions.
impl PartialEq for TensorData {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (TensorData::U8(a), TensorData::U8(b)) => a == b,
            (TensorData::I32(a), TensorData::I32(b)) => a == b,
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (TensorData::F64(a), TensorData::F64(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }
}

/// Row-major n-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        validate_shape(&shape)?;
        let expected = element_count(&shape)?;
        if expected != data.len() {
            return Err(Error::InvalidInput(format!(
                "shape {:?} needs {} elements, buffer has {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_u8(shape: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        Tensor::new(shape, TensorData::U8(data))
    }

    pub fn from_i32(shape: Vec<usize>, data: Vec<i32>) -> Result<Self> {
        Tensor::new(shape, TensorData::I32(data))
    }

    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Tensor::new(shape, TensorData::F32(data))
    }

    pub fn from_f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Tensor::new(shape, TensorData::F64(data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            TensorData::U8(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i32(&self) -> Option<&[i32]> {
        match &self.data {
            TensorData::I32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match &self.data {
            TensorData::F64(v) => Some(v),
            _ => None,
        }
    }

    /// Serialize into `w` using the `CQT1` layout.
    pub fn encode<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = Vec::with_capacity(6 + 4 * self.shape.len());
        header.extend_from_slice(MAGIC);
        header.push(self.dtype().code());
        header.push(self.shape.len() as u8);
        for &d in &self.shape {
            header.extend_from_slice(&(d as u32).to_le_bytes());
        }
        w.write_all(&header)?;
        let mut payload = Vec::with_capacity(self.len() * self.dtype().size_of());
        match &self.data {
            TensorData::U8(v) => payload.extend_from_slice(v),
            TensorData::I32(v) => v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes())),
            TensorData::F32(v) => v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes())),
        }
        w.write_all(&payload)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Parse a complete `CQT1` byte buffer.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing CQT1 magic".into()));
        }
        if bytes.len() < 6 {
            return Err(Error::Corrupt("truncated header".into()));
        }
        let dtype =
            DType::from_code(bytes[4]).ok_or_else(|| Error::Format(format!("unknown dtype code {}", bytes[4])))?;
        let ndim = bytes[5] as usize;
        if ndim == 0 {
            return Err(Error::Format("ndim must be at least 1".into()));
        }
        let dims_end = 6 + 4 * ndim;
        if bytes.len() < dims_end {
            return Err(Error::Corrupt("truncated shape header".into()));
        }
        let shape: Vec<usize> =
            bytes[6..dims_end].chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize).collect();
        validate_shape(&shape).map_err(|e| Error::Format(e.to_string()))?;
        let count = element_count(&shape).map_err(|e| Error::Format(e.to_string()))?;
        let payload = &bytes[dims_end..];
        let expected =
            count.checked_mul(dtype.size_of()).ok_or_else(|| Error::Format("payload size overflows".into()))?;
        if payload.len() != expected {
            return Err(Error::Corrupt(format!(
                "payload has {} bytes, shape {:?} of {} needs {}",
                payload.len(),
                shape,
                dtype.name(),
                expected
            )));
        }
        let data = match dtype {
            DType::U8 => TensorData::U8(payload.to_vec()),
            DType::I32 => {
                TensorData::I32(payload.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            DType::F32 => {
                TensorData::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            DType::F64 => {
                TensorData::F64(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
            }
        };
        Ok(Tensor { shape, data })
    }

    pub fn decode<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Tensor::from_bytes(&bytes)
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::InvalidInput("tensor shape must have at least one dimension".into()));
    }
    if shape.len() > u8::MAX as usize {
        return Err(Error::InvalidInput(format!("{} dimensions exceed the format limit", shape.len())));
    }
    if let Some(&d) = shape.iter().find(|&&d| d == 0 || d > MAX_DIM) {
        return Err(Error::InvalidInput(format!("dimension {} outside [1, 2^31-1]", d)));
    }
    Ok(())
}

fn element_count(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidInput(format!("shape {:?} overflows", shape)))
}

pub fn write_tensor(t: &Tensor, destination: impl AsRef<Path>) -> Result<()> {
    let path = destination.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    t.encode(&mut w).map_err(|e| with_path(e, path))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_tensor(source: impl AsRef<Path>) -> Result<Tensor> {
    let path = source.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Tensor::decode(BufReader::new(file)).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { path: None, source } => Error::io(path, source),
        Error::Format(m) => Error::Format(format!("{}: {}", path.display(), m)),
        Error::Corrupt(m) => Error::Corrupt(format!("{}: {}", path.display(), m)),
        other => other,
    }
}
