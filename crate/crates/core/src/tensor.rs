//! Dense row-major grids and the `TNSR` tensor file format.
//!
//! Layout of a `TNSR` file (all integers little-endian):
//!
//! ```text
//! b"TNSR" | dtype: u8 (0 = real f64, 1 = complex f64 pairs) | ndim: u8 | ndim x u32 dims | payload
//! ```
//!
//! Complex payloads are stored interleaved `re, im`.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real-valued image on an `height x width` grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RealGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RealGrid {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::contract("grid dimensions must be positive"));
        }
        if data.len() != height * width {
            return Err(Error::contract(format!(
                "grid data length {} does not match {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!("non-finite grid entry at index {i}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn dot(&self, other: &RealGrid) -> f64 {
        debug_assert_eq!(self.dims(), other.dims());
        dot(&self.data, &other.data)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn ensure_same_dims(&self, other: &RealGrid) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::contract(format!(
                "grid dims {:?} and {:?} differ",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::real(vec![self.height as u32, self.width as u32], self.data.clone())
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match (&t.data, t.dims.as_slice()) {
            (TensorData::Real(v), [h, w]) => RealGrid::new(*h as usize, *w as usize, v.clone()),
            _ => Err(Error::parse("expected a 2-D real tensor")),
        }
    }
}

/// Complex-valued grid, used for full Fourier-domain intermediates.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::contract(format!(
                "complex grid data length {} does not match {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::contract("non-finite complex grid entry"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_real(f: &RealGrid) -> Self {
        Self {
            height: f.height,
            width: f.width,
            data: f.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn real_part(&self) -> RealGrid {
        RealGrid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|c| c.re).collect(),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn complex_norm2(a: &[Complex64]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// `Re <a, b>` with conjugation on the first argument.
pub fn complex_dot_re(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// An n-dimensional array as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: TensorData,
}

const TNSR_MAGIC: &[u8; 4] = b"TNSR";

impl Tensor {
    pub fn real(dims: Vec<u32>, data: Vec<f64>) -> Self {
        Self {
            dims,
            data: TensorData::Real(data),
        }
    }

    pub fn complex(dims: Vec<u32>, data: Vec<Complex64>) -> Self {
        Self {
            dims,
            data: TensorData::Complex(data),
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self::real(vec![data.len() as u32], data)
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn as_real(&self) -> Result<&[f64]> {
        match &self.data {
            TensorData::Real(v) => Ok(v),
            TensorData::Complex(_) => Err(Error::parse("expected a real tensor")),
        }
    }

    pub fn as_complex(&self) -> Result<&[Complex64]> {
        match &self.data {
            TensorData::Complex(v) => Ok(v),
            TensorData::Real(_) => Err(Error::parse("expected a complex tensor")),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let (tag, payload_len) = match &self.data {
            TensorData::Real(v) => (0u8, v.len() * 8),
            TensorData::Complex(v) => (1u8, v.len() * 16),
        };
        let mut out = Vec::with_capacity(6 + 4 * self.dims.len() + payload_len);
        out.extend_from_slice(TNSR_MAGIC);
        out.push(tag);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::Real(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            TensorData::Complex(v) => {
                for c in v {
                    out.extend_from_slice(&c.re.to_le_bytes());
                    out.extend_from_slice(&c.im.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 6 || &bytes[..4] != TNSR_MAGIC {
            return Err(Error::parse("missing TNSR magic"));
        }
        let tag = bytes[4];
        let ndim = bytes[5] as usize;
        let header = 6 + 4 * ndim;
        if bytes.len() < header {
            return Err(Error::parse("truncated TNSR header"));
        }
        let dims: Vec<u32> = bytes[6..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let count: usize = dims.iter().map(|&d| d as usize).product();
        let payload = &bytes[header..];
        let read_f64 = |c: &[u8]| f64::from_le_bytes(c.try_into().unwrap());
        let data = match tag {
            0 => {
                if payload.len() != count * 8 {
                    return Err(Error::parse(format!(
                        "TNSR real payload has {} bytes, expected {}",
                        payload.len(),
                        count * 8
                    )));
                }
                TensorData::Real(payload.chunks_exact(8).map(read_f64).collect())
            }
            1 => {
                if payload.len() != count * 16 {
                    return Err(Error::parse(format!(
                        "TNSR complex payload has {} bytes, expected {}",
                        payload.len(),
                        count * 16
                    )));
                }
                TensorData::Complex(
                    payload
                        .chunks_exact(16)
                        .map(|c| Complex64::new(read_f64(&c[..8]), read_f64(&c[8..])))
                        .collect(),
                )
            }
            other => return Err(Error::parse(format!("unknown TNSR dtype tag {other}"))),
        };
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| e.at_path(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_lengths_and_non_finite() {
        assert!(RealGrid::new(2, 2, vec![0.0; 3]).is_err());
        assert!(RealGrid::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(RealGrid::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn header_layout_is_fixed() {
        let t = Tensor::real(vec![1, 2], vec![1.0, -2.0]);
        let b = t.encode();
        assert_eq!(&b[..4], b"TNSR");
        assert_eq!(b[4], 0);
        assert_eq!(b[5], 2);
        assert_eq!(&b[6..10], &1u32.to_le_bytes());
        assert_eq!(&b[10..14], &2u32.to_le_bytes());
        assert_eq!(&b[14..22], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 30);

        let c = Tensor::complex(vec![1], vec![Complex64::new(3.0, 4.0)]);
        let b = c.encode();
        assert_eq!(b[4], 1);
        assert_eq!(&b[10..18], &3.0f64.to_le_bytes());
        assert_eq!(&b[18..26], &4.0f64.to_le_bytes());
    }

    #[test]
    fn decode_errors() {
        assert!(Tensor::decode(b"NOPE\0\0").is_err());
        let mut b = Tensor::vector(vec![1.0, 2.0]).encode();
        b.pop();
        assert!(Tensor::decode(&b).is_err());
        let mut b = Tensor::vector(vec![1.0]).encode();
        b[4] = 9;
        assert!(Tensor::decode(&b).is_err());
    }

    proptest! {
        #[test]
        fn tnsr_round_trip_is_bit_exact(
            bits in proptest::collection::vec(any::<u64>(), 0..40),
            complex in any::<bool>(),
        ) {
            let vals: Vec<f64> = bits.iter().map(|&b| f64::from_bits(b)).collect();
            let t = if complex {
                let n = vals.len() / 2;
                let c = (0..n).map(|i| Complex64::new(vals[2 * i], vals[2 * i + 1])).collect();
                Tensor::complex(vec![n as u32], c)
            } else {
                Tensor::real(vec![1, vals.len() as u32], vals)
            };
            let bytes = t.encode();
            let back = Tensor::decode(&bytes).unwrap();
            prop_assert_eq!(back.encode(), bytes);
        }
    }
}
