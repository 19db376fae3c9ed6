use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use super::rounding::round_f32_to_half_grid;

/// IEEE binary16 value emulated in binary32 storage.
///
/// Every operation is computed in binary32 and rounded to the binary16 grid.
/// Binary32 carries 24 >= 2*11 + 2 significand bits, so this double rounding
/// yields the correctly rounded binary16 result for `+ - * /` and `sqrt`.
#[derive(Clone, Copy, Default, PartialEq)]
pub struct F16(f32);

impl F16 {
    pub const ZERO: Self = Self(0.0);
    pub const ONE: Self = Self(1.0);

    /// Rounds a binary32 value to binary16.
    #[inline]
    pub fn from_f32(x: f32) -> Self {
        Self(round_f32_to_half_grid(x))
    }

    /// Wraps a binary32 value that is already on the binary16 grid.
    #[inline]
    pub(crate) fn from_grid(x: f32) -> Self {
        debug_assert!(x.is_nan() || round_f32_to_half_grid(x) == x);
        Self(x)
    }

    #[inline]
    pub fn to_f32(self) -> f32 {
        self.0
    }

    /// IEEE binary16 bit pattern.
    pub fn to_bits(self) -> u16 {
        let bits = self.0.to_bits();
        let sign = ((bits >> 16) & 0x8000) as u16;
        let abs = self.0.abs();
        if self.0.is_nan() {
            return sign | 0x7e00;
        }
        if abs.is_infinite() {
            return sign | 0x7c00;
        }
        if abs < 6.103_515_6e-5 {
            // subnormal: multiple of 2^-24
            return sign | (abs * 16_777_216.0) as u16;
        }
        let exp = ((abs.to_bits() >> 23) & 0xff) as i32 - 127 + 15;
        let mant = (abs.to_bits() >> 13) & 0x3ff;
        sign | ((exp as u16) << 10) | mant as u16
    }
}

impl Neg for F16 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

macro_rules! half_binop {
    ($($tr:ident $m:ident $atr:ident $am:ident $op:tt),*) => {$(
        impl $tr for F16 {
            type Output = Self;
            #[inline(always)]
            fn $m(self, rhs: Self) -> Self {
                Self(round_f32_to_half_grid(self.0 $op rhs.0))
            }
        }
        impl $atr for F16 {
            #[inline(always)]
            fn $am(&mut self, rhs: Self) {
                *self = *self $op rhs;
            }
        }
    )*};
}
half_binop!(
    Add add AddAssign add_assign +,
    Sub sub SubAssign sub_assign -,
    Mul mul MulAssign mul_assign *,
    Div div DivAssign div_assign /
);

impl PartialOrd for F16 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

impl fmt::Debug for F16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F16({})", self.0)
    }
}

impl fmt::Display for F16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}
