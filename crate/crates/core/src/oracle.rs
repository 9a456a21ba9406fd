//! Parameter vectors and the black-box loss oracle.
//!
//! Parameter files: magic `DPZP`, format version (u16), dimension (u64),
//! then the values as binary64, all little-endian.

use std::io::{Read, Write};
use std::ops::{Deref, DerefMut};
use std::path::Path;

use crate::data::Example;
use crate::CoreError;

pub const PARAMS_MAGIC: [u8; 4] = *b"DPZP";
pub const PARAMS_FORMAT_VERSION: u16 = 1;

/// Flat vector of model parameters. Constructed values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self, CoreError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFiniteParam(i));
        }
        Ok(Self(values))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Bit-level equality (distinguishes `0.0` from `-0.0`).
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CoreError> {
        w.write_all(&PARAMS_MAGIC)?;
        w.write_all(&PARAMS_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.0.len() as u64).to_le_bytes())?;
        for v in &self.0 {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + 8 * self.0.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CoreError> {
        let bad = |m: &str| CoreError::MalformedParams(m.to_string());
        let mut head = [0u8; 14];
        r.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
        if head[..4] != PARAMS_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != PARAMS_FORMAT_VERSION {
            return Err(CoreError::MalformedParams(format!("unknown version {version}")));
        }
        let dim = u64::from_le_bytes(head[6..14].try_into().expect("8 bytes"));
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() as u64 != dim.saturating_mul(8) {
            return Err(CoreError::MalformedParams(format!(
                "expected {dim} values, found {} bytes",
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::new(values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CoreError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CoreError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Per-example loss. The optimizer touches data only through this trait.
///
/// `loss` must be pure and return finite values for finite inputs.
/// Implementations are shared read-only across threads.
pub trait LossOracle: Sync {
    /// Number of parameters the oracle expects.
    fn dim(&self) -> usize;

    fn loss(&self, params: &[f64], example: &Example) -> f64;

    /// Analytic gradient of `loss`, if the oracle provides one.
    fn gradient(&self, _params: &[f64], _example: &Example) -> Option<Vec<f64>> {
        None
    }

    fn has_gradient(&self) -> bool {
        false
    }
}

impl<T: LossOracle + ?Sized> LossOracle for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn loss(&self, params: &[f64], example: &Example) -> f64 {
        (**self).loss(params, example)
    }
    fn gradient(&self, params: &[f64], example: &Example) -> Option<Vec<f64>> {
        (**self).gradient(params, example)
    }
    fn has_gradient(&self) -> bool {
        (**self).has_gradient()
    }
}

/// Wraps a closure as a gradient-free oracle.
pub struct FnOracle<F> {
    dim: usize,
    f: F,
}

impl<F> FnOracle<F>
where
    F: Fn(&[f64], &Example) -> f64 + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> LossOracle for FnOracle<F>
where
    F: Fn(&[f64], &Example) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn loss(&self, params: &[f64], example: &Example) -> f64 {
        (self.f)(params, example)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            ParamVector::new(vec![0.0, f64::NAN]),
            Err(CoreError::NonFiniteParam(1))
        ));
        assert!(ParamVector::new(vec![f64::INFINITY]).is_err());
        assert_eq!(ParamVector::zeros(3).dim(), 3);
    }

    #[test]
    fn file_round_trip() {
        let p = ParamVector::new(vec![1.5, -0.0, 3e-300]).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(bytes.len(), 14 + 24);
        assert!(ParamVector::read_from(&bytes[..]).unwrap().bit_eq(&p));
        assert!(ParamVector::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(ParamVector::read_from(&wrong[..]).is_err());
    }

    #[test]
    fn bit_eq_sees_signed_zero() {
        let a = ParamVector::new(vec![0.0]).unwrap();
        let b = ParamVector::new(vec![-0.0]).unwrap();
        assert_eq!(a, b);
        assert!(!a.bit_eq(&b));
    }
}
