//! Dense `f32` tensors and the VAST binary interchange format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size      field
//! 0       4         magic "VAST"
//! 4       1         version 0x01
//! 5       1         dtype 0x01 (f32)
//! 6       1         ndim (1..=8)
//! 7       1         zero padding
//! 8       8*ndim    dims as u64
//! ...     4*len     row-major f32 payload
//! ```
//!
//! A tensor therefore occupies exactly `8 + 8*ndim + 4*len` bytes and the
//! dims stay 8-byte aligned.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"VAST";
pub const VERSION: u8 = 0x01;
pub const DTYPE_F32: u8 = 0x01;
pub const MAX_NDIM: usize = 8;

/// Row-major `f32` array. Construction enforces shape consistency; finiteness
/// is enforced at the I/O boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        validate_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::LengthMismatch(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Byte length of the serialised form.
    pub fn encoded_len(&self) -> usize {
        8 + 8 * self.ndim() + 4 * self.len()
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_NDIM {
        return Err(Error::InvalidShape(format!(
            "ndim must be 1..={MAX_NDIM}, got {}",
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape(format!(
            "every dimension must be ≥ 1, got {shape:?}"
        )));
    }
    Ok(())
}

fn check_finite(data: &[f32]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Serialises `t` and returns the number of bytes written.
pub fn write_tensor<W: Write>(t: &Tensor, mut sink: W) -> Result<usize> {
    validate_shape(&t.shape)?;
    check_finite(&t.data)?;

    let mut buf = Vec::with_capacity(t.encoded_len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&[VERSION, DTYPE_F32, t.ndim() as u8, 0]);
    for &d in &t.shape {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in &t.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    debug_assert_eq!(buf.len(), t.encoded_len());
    sink.write_all(&buf)?;
    Ok(buf.len())
}

pub fn read_tensor<R: Read>(mut source: R) -> Result<Tensor> {
    let mut header = [0u8; 8];
    read_exact_or(&mut source, &mut header, "header")?;
    if header[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if header[4] != VERSION {
        return Err(Error::UnsupportedVersion(header[4]));
    }
    if header[5] != DTYPE_F32 {
        return Err(Error::UnsupportedDtype(header[5]));
    }
    if header[7] != 0 {
        return Err(Error::InvalidShape("non-zero header padding".into()));
    }
    let ndim = header[6] as usize;
    if ndim == 0 || ndim > MAX_NDIM {
        return Err(Error::InvalidShape(format!(
            "ndim must be 1..={MAX_NDIM}, got {ndim}"
        )));
    }

    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut d = [0u8; 8];
        read_exact_or(&mut source, &mut d, "dims")?;
        let d = usize::try_from(u64::from_le_bytes(d))
            .map_err(|_| Error::InvalidShape("dimension exceeds address space".into()))?;
        shape.push(d);
    }
    validate_shape(&shape)?;
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidShape("element count overflows".into()))?;

    let mut payload = Vec::new();
    source.read_to_end(&mut payload)?;
    if payload.len() != n * 4 {
        return Err(Error::LengthMismatch(format!(
            "shape {shape:?} needs {} payload bytes, found {}",
            n * 4,
            payload.len()
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    check_finite(&data)?;
    Ok(Tensor { shape, data })
}

fn read_exact_or<R: Read>(source: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    source.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::LengthMismatch(format!("truncated {what}")),
        _ => Error::RawIo(e),
    })
}

pub fn save_tensor(t: &Tensor, path: &Path) -> Result<usize> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let n = write_tensor(t, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensor(BufReader::new(file))
}
