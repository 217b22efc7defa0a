use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two's-complement fixed point: `bits` total, `scale` fractional bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixParams {
    pub bits: u32,
    pub scale: u32,
}

impl Default for FixParams {
    fn default() -> Self {
        FixParams { bits: 32, scale: 12 }
    }
}

impl FixParams {
    pub fn new(bits: u32, scale: u32) -> Result<Self> {
        if !(4..=62).contains(&bits) || scale + 2 >= bits {
            return Err(Error::Params(format!("fixed point with {bits} bits and scale {scale}")));
        }
        Ok(FixParams { bits, scale })
    }

    pub fn one(&self) -> i64 {
        1 << self.scale
    }

    /// Exclusive bound on stored magnitudes.
    pub fn limit(&self) -> i64 {
        1 << (self.bits - 1)
    }

    pub fn encode(&self, v: f64) -> Result<i64> {
        let q = (v * self.one() as f64).round();
        if !q.is_finite() || q.abs() >= self.limit() as f64 {
            return Err(Error::Overflow(format!("{v} does not fit {} bits at scale {}", self.bits, self.scale)));
        }
        Ok(q as i64)
    }

    pub fn decode(&self, v: i64) -> f64 {
        v as f64 / self.one() as f64
    }

    /// Drops `scale` fractional bits by arithmetic shift (rounds toward minus infinity).
    pub fn trunc(&self, v: i64) -> i64 {
        v >> self.scale
    }

    pub fn check(&self, v: &[i64], what: &str) -> Result<()> {
        match v.iter().find(|x| x.abs() >= self.limit()) {
            Some(x) => Err(Error::Overflow(format!("{what}: {x} outside {} bits", self.bits))),
            None => Ok(()),
        }
    }
}

/// Fixed-point values with a shape, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixTensor {
    pub shape: Vec<usize>,
    pub data: Vec<i64>,
}

impl FixTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        FixTensor { shape: shape.to_vec(), data: vec![0; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<i64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Contract(format!("{} values for shape {shape:?}", data.len())));
        }
        Ok(FixTensor { shape: shape.to_vec(), data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}
