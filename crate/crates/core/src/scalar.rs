//! Floating-point scalar abstraction shared by the feature math, the
//! membership network and the metrics.
//!
//! Traces are always stored as `f32`; every computation over them is generic
//! so the same code runs in single precision (compact model artifacts) or in
//! double precision (gradient checks, reference oracles).

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

use crate::container::DType;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Element type tag written into container headers.
    const DTYPE: DType;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize is representable in every Scalar")
    }

    fn of_f32(x: f32) -> Self;

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar always converts to f64")
    }

    fn write_le(self, out: &mut Vec<u8>);

    /// Decodes one element from exactly `DTYPE.size()` little-endian bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: DType = DType::F32;

    fn of_f32(x: f32) -> Self {
        x
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte element"))
    }
}

impl Scalar for f64 {
    const DTYPE: DType = DType::F64;

    fn of_f32(x: f32) -> Self {
        x as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte element"))
    }
}

/// Converts a stored `f32` slice into the working precision.
pub fn widen<T: Scalar>(values: &[f32]) -> Vec<T> {
    values.iter().map(|&v| T::of_f32(v)).collect()
}
