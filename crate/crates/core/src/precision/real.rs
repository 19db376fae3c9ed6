use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use super::double_double::DoubleDouble;
use super::half::F16;
use super::rounding::{round_binary, BinaryFormat, Resolve};
use super::PrecisionLevel;

/// Scalar arithmetic carried out at one precision level.
///
/// Every arithmetic result is rounded to the level, so generic code
/// instantiated with a given `Real` emulates evaluation at that level.
pub trait Real:
    Copy
    + Default
    + Debug
    + PartialEq
    + PartialOrd
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
    const LEVEL: PrecisionLevel;

    fn zero() -> Self;
    fn one() -> Self;
    /// Nearest value at this level.
    fn from_f64(x: f64) -> Self;
    /// Nearest value at this level.
    fn from_dd(x: DoubleDouble) -> Self;
    /// Nearest binary64 value.
    fn to_f64(self) -> f64;
    /// Exact promotion to the extended level.
    fn to_dd(self) -> DoubleDouble;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;

    #[inline]
    fn from_usize(n: usize) -> Self {
        Self::from_f64(n as f64)
    }

    /// Converts to another level; exact when `T` is at least as precise.
    #[inline]
    fn cast<T: Real>(self) -> T {
        T::from_dd(self.to_dd())
    }
}

impl Real for f64 {
    const LEVEL: PrecisionLevel = PrecisionLevel::Double;

    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn from_dd(x: DoubleDouble) -> Self {
        x.to_f64()
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn to_dd(self) -> DoubleDouble {
        DoubleDouble::from_f64(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    #[inline]
    fn cast<T: Real>(self) -> T {
        T::from_f64(self)
    }
}

impl Real for f32 {
    const LEVEL: PrecisionLevel = PrecisionLevel::Single;

    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn from_dd(x: DoubleDouble) -> Self {
        round_binary(x.hi(), BinaryFormat::SINGLE, Resolve::NearestEven { tail: x.lo() }) as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn to_dd(self) -> DoubleDouble {
        DoubleDouble::from_f64(self as f64)
    }
    #[inline]
    fn abs(self) -> Self {
        f32::abs(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
    #[inline]
    fn cast<T: Real>(self) -> T {
        T::from_f64(self as f64)
    }
}

impl Real for F16 {
    const LEVEL: PrecisionLevel = PrecisionLevel::Half;

    #[inline]
    fn zero() -> Self {
        F16::ZERO
    }
    #[inline]
    fn one() -> Self {
        F16::ONE
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        F16::from_grid(round_binary(x, BinaryFormat::HALF, Resolve::NearestEven { tail: 0.0 }) as f32)
    }
    #[inline]
    fn from_dd(x: DoubleDouble) -> Self {
        F16::from_grid(
            round_binary(x.hi(), BinaryFormat::HALF, Resolve::NearestEven { tail: x.lo() }) as f32,
        )
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self.to_f32() as f64
    }
    #[inline]
    fn to_dd(self) -> DoubleDouble {
        DoubleDouble::from_f64(self.to_f32() as f64)
    }
    #[inline]
    fn abs(self) -> Self {
        F16::from_grid(self.to_f32().abs())
    }
    #[inline]
    fn sqrt(self) -> Self {
        F16::from_f32(self.to_f32().sqrt())
    }
    #[inline]
    fn is_finite(self) -> bool {
        self.to_f32().is_finite()
    }
    #[inline]
    fn cast<T: Real>(self) -> T {
        T::from_f64(self.to_f32() as f64)
    }
}

impl Real for DoubleDouble {
    const LEVEL: PrecisionLevel = PrecisionLevel::Extended;

    #[inline]
    fn zero() -> Self {
        DoubleDouble::ZERO
    }
    #[inline]
    fn one() -> Self {
        DoubleDouble::ONE
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        DoubleDouble::from_f64(x)
    }
    #[inline]
    fn from_dd(x: DoubleDouble) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        DoubleDouble::to_f64(self)
    }
    #[inline]
    fn to_dd(self) -> DoubleDouble {
        self
    }
    #[inline]
    fn abs(self) -> Self {
        DoubleDouble::abs(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        DoubleDouble::sqrt(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        DoubleDouble::is_finite(self)
    }
}

/// Max norm, returned as binary64.
pub fn norm_inf<T: Real>(v: &[T]) -> f64 {
    v.iter().fold(0.0f64, |m, x| {
        let a = x.to_f64().abs();
        if a.is_nan() || a > m {
            a
        } else {
            m
        }
    })
}
