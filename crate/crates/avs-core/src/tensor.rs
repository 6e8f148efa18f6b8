//! Dense row-major tensors over f32/f64 plus the AVST binary file format.

use std::fmt::{Debug, Display};
use std::fs;
use std::io::{Read, Write};
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::path::Path;

use crate::error::{shape_err, Error, Result};

/// Element type code stored in AVST headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

/// Real scalar usable as a tensor element. Implemented for f32 and f64 only;
/// training defaults to f32, gradient checks run at f64.
pub trait Scalar:
    Copy
    + PartialOrd
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    const DTYPE: Dtype;
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn floor(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn is_finite(self) -> bool;
    fn max_s(self, other: Self) -> Self;
    fn min_s(self, other: Self) -> Self;
    fn to_le_bytes_vec(self) -> Vec<u8>;
}

macro_rules! impl_scalar {
    ($t:ty, $dtype:expr) => {
        impl Scalar for $t {
            const DTYPE: Dtype = $dtype;
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            #[inline(always)]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline(always)]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline(always)]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline(always)]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline(always)]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline(always)]
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            #[inline(always)]
            fn sin(self) -> Self {
                <$t>::sin(self)
            }
            #[inline(always)]
            fn cos(self) -> Self {
                <$t>::cos(self)
            }
            #[inline(always)]
            fn floor(self) -> Self {
                <$t>::floor(self)
            }
            #[inline(always)]
            fn powi(self, n: i32) -> Self {
                <$t>::powi(self, n)
            }
            #[inline(always)]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            #[inline(always)]
            fn max_s(self, other: Self) -> Self {
                <$t>::max(self, other)
            }
            #[inline(always)]
            fn min_s(self, other: Self) -> Self {
                <$t>::min(self, other)
            }
            fn to_le_bytes_vec(self) -> Vec<u8> {
                self.to_le_bytes().to_vec()
            }
        }
    };
}

impl_scalar!(f32, Dtype::F32);
impl_scalar!(f64, Dtype::F64);

/// N-dimensional row-major array of real scalars.
#[derive(Clone, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dims must be positive, got {shape:?}"
            )));
        }
        if n != data.len() {
            return Err(shape_err("tensor construction", n, data.len()));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![T::ZERO; n] }
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn scalar(v: T) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(shape_err("reshape", n, self.data.len()));
        }
        Ok(Self { shape: shape.to_vec(), data: self.data.clone() })
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> T {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn at3(&self, c: usize, i: usize, j: usize) -> T {
        debug_assert_eq!(self.shape.len(), 3);
        self.data[(c * self.shape[1] + i) * self.shape[2] + j]
    }

    #[inline]
    pub fn set3(&mut self, c: usize, i: usize, j: usize, v: T) {
        debug_assert_eq!(self.shape.len(), 3);
        self.data[(c * self.shape[1] + i) * self.shape[2] + j] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(shape_err("elementwise zip", &self.shape, &other.shape));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    /// Sequential left-to-right sum; the accumulation order is part of the
    /// determinism contract.
    pub fn sum(&self) -> T {
        let mut acc = T::ZERO;
        for &x in &self.data {
            acc += x;
        }
        acc
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_f64(self.data.len() as f64)
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::from_f64(x.to_f64())).collect(),
        }
    }

    /// Accumulates `other` into self elementwise.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err("add_assign", &self.shape, &other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

const AVST_MAGIC: &[u8; 4] = b"AVST";

/// Writes a tensor in the AVST format: magic "AVST", u8 dtype code
/// (0 = f32, 1 = f64), u8 rank, rank little-endian u32 dims, then the
/// little-endian payload.
pub fn write_avst<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(6 + 4 * t.shape.len() + t.data.len() * 8);
    buf.extend_from_slice(AVST_MAGIC);
    buf.push(T::DTYPE as u8);
    if t.shape.len() > u8::MAX as usize {
        return Err(Error::InvalidArgument("tensor rank exceeds AVST limit".into()));
    }
    buf.push(t.shape.len() as u8);
    for &d in &t.shape {
        if d > u32::MAX as usize {
            return Err(Error::InvalidArgument("dimension exceeds u32".into()));
        }
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &x in &t.data {
        buf.extend_from_slice(&x.to_le_bytes_vec());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// A tensor deserialized from disk, preserving its stored precision.
pub enum LoadedTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl LoadedTensor {
    pub fn shape(&self) -> &[usize] {
        match self {
            LoadedTensor::F32(t) => t.shape(),
            LoadedTensor::F64(t) => t.shape(),
        }
    }

    /// Converts to the requested element type (f32 -> f64 is lossless).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        match self {
            LoadedTensor::F32(t) => t.cast(),
            LoadedTensor::F64(t) => t.cast(),
        }
    }
}

pub fn read_avst(path: &Path) -> Result<LoadedTensor> {
    let mut f = fs::File::open(path)?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    parse_avst(&buf)
}

fn parse_avst(buf: &[u8]) -> Result<LoadedTensor> {
    if buf.len() < 6 || &buf[..4] != AVST_MAGIC {
        return Err(Error::Format("missing AVST magic".into()));
    }
    let dtype = buf[4];
    let rank = buf[5] as usize;
    let header = 6 + 4 * rank;
    if buf.len() < header {
        return Err(Error::Format("truncated AVST header".into()));
    }
    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        let off = 6 + 4 * i;
        let d = u32::from_le_bytes([buf[off], buf[off + 1], buf[off + 2], buf[off + 3]]);
        shape.push(d as usize);
    }
    let n: usize = shape.iter().product();
    let payload = &buf[header..];
    match dtype {
        0 => {
            if payload.len() != n * 4 {
                return Err(Error::Format("AVST payload length mismatch".into()));
            }
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok(LoadedTensor::F32(Tensor { shape, data }))
        }
        1 => {
            if payload.len() != n * 8 {
                return Err(Error::Format("AVST payload length mismatch".into()));
            }
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                .collect();
            Ok(LoadedTensor::F64(Tensor { shape, data }))
        }
        other => Err(Error::Format(format!("unknown AVST dtype code {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_validates_length() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::from_vec(&[2, 0], vec![]).is_err());
    }

    #[test]
    fn avst_roundtrip_both_dtypes() {
        let dir = tempfile::tempdir().unwrap();
        let t32 = Tensor::<f32>::from_vec(&[2, 1, 3], vec![1.0, -2.5, 3.0, 0.0, 1e-7, 9.25]).unwrap();
        let p = dir.path().join("a.avst");
        write_avst(&p, &t32).unwrap();
        match read_avst(&p).unwrap() {
            LoadedTensor::F32(t) => {
                assert_eq!(t.shape(), &[2, 1, 3]);
                assert_eq!(t.data(), t32.data());
            }
            _ => panic!("wrong dtype"),
        }

        let t64 = Tensor::<f64>::from_vec(&[4], vec![std::f64::consts::PI, -1.0, 0.5, 2e-300]).unwrap();
        let p = dir.path().join("b.avst");
        write_avst(&p, &t64).unwrap();
        match read_avst(&p).unwrap() {
            LoadedTensor::F64(t) => assert_eq!(t.data(), t64.data()),
            _ => panic!("wrong dtype"),
        }
    }

    #[test]
    fn avst_rejects_garbage() {
        assert!(parse_avst(b"AVSTxx").is_err());
        assert!(parse_avst(b"NOPE").is_err());
        // valid header, short payload
        let mut buf = Vec::new();
        buf.extend_from_slice(b"AVST");
        buf.push(0);
        buf.push(1);
        buf.extend_from_slice(&4u32.to_le_bytes());
        buf.extend_from_slice(&[0u8; 8]);
        assert!(parse_avst(&buf).is_err());
    }

    #[test]
    fn sum_is_sequential() {
        let t = Tensor::<f32>::from_vec(&[3], vec![1e8, 1.0, -1e8]).unwrap();
        // ((1e8 + 1.0) + -1e8) == 0.0 in f32; a different order would give 1.0
        assert_eq!(t.sum(), 0.0);
    }
}
