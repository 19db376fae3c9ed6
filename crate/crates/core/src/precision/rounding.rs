//! Bit-exact rounding of binary64 values onto narrower binary formats.
//!
//! The narrower format is described by its significand width (including the
//! implicit bit) and its exponent range. Gradual underflow is honoured: below
//! the smallest normal exponent the quantum stays fixed at
//! `2^(emin - (p - 1))`.

/// Parameters of a binary floating-point format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BinaryFormat {
    /// Significand bits including the hidden bit.
    pub precision: u32,
    /// Exponent of the smallest normal number.
    pub emin: i32,
    /// Exponent of the largest finite number.
    pub emax: i32,
}

impl BinaryFormat {
    pub const HALF: Self = Self { precision: 11, emin: -14, emax: 15 };
    pub const SINGLE: Self = Self { precision: 24, emin: -126, emax: 127 };

    pub fn max_finite(&self) -> f64 {
        let p = self.precision as i32;
        (2.0 - pow2(1 - p)) * pow2(self.emax)
    }
}

/// How a value that falls strictly between two representables is resolved.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Resolve {
    /// Ties to even; `tail` carries the sign of a lower-order remainder
    /// (for double-double inputs) that breaks exact ties.
    NearestEven { tail: f64 },
    /// Round away from zero iff `u < fraction`, for `u` uniform in `[0, 1)`.
    Stochastic { u: f64 },
}

/// Exact power of two for exponents in the normal binary64 range.
#[inline]
pub(crate) fn pow2(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// Unbiased exponent of a finite, nonzero binary64 value (floor(log2|x|)).
#[inline]
fn exponent_of(x: f64) -> i32 {
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        // binary64 subnormal
        let mant = bits & ((1u64 << 52) - 1);
        63 - mant.leading_zeros() as i32 - 1074
    } else {
        biased - 1023
    }
}

/// Rounds `x` onto the grid of `fmt`.
///
/// Overflow saturates to a signed infinity; NaN and infinities pass through.
pub(crate) fn round_binary(x: f64, fmt: BinaryFormat, resolve: Resolve) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let a = x.abs();
    let e = exponent_of(a);
    if e > fmt.emax {
        return sign * f64::INFINITY;
    }
    let quantum_exp = e.max(fmt.emin) - (fmt.precision as i32 - 1);
    let scaled = a * pow2(-quantum_exp);
    let floor = scaled.floor();
    let frac = scaled - floor;
    let round_up = match resolve {
        Resolve::NearestEven { tail } => {
            if frac > 0.5 {
                true
            } else if frac < 0.5 {
                false
            } else {
                let tail_mag = tail * sign;
                if tail_mag > 0.0 {
                    true
                } else if tail_mag < 0.0 {
                    false
                } else {
                    floor % 2.0 != 0.0
                }
            }
        }
        Resolve::Stochastic { u } => u < frac,
    };
    let q = if round_up { floor + 1.0 } else { floor };
    let r = q * pow2(quantum_exp);
    if r > fmt.max_finite() {
        sign * f64::INFINITY
    } else {
        sign * r
    }
}

/// Fast nearest-even rounding of an `f32` onto the binary16 grid, result
/// kept in `f32` storage. Agrees with [`round_binary`] with
/// [`BinaryFormat::HALF`] for every `f32` input.
#[inline(always)]
pub(crate) fn round_f32_to_half_grid(x: f32) -> f32 {
    let bits = x.to_bits();
    let sign = bits & 0x8000_0000;
    let abs = bits & 0x7fff_ffff;
    if abs >= 0x477f_f000 {
        // >= 65520 rounds to infinity; NaN stays NaN
        if abs > 0x7f80_0000 {
            return x;
        }
        return f32::from_bits(sign | 0x7f80_0000);
    }
    if abs < 0x3880_0000 {
        // below 2^-14: fixed quantum 2^-24, the ulp of 0.5 in binary32
        let a = f32::from_bits(abs);
        let r = (a + 0.5) - 0.5;
        return f32::from_bits(r.to_bits() | sign);
    }
    let r = abs + 0x0fff + ((abs >> 13) & 1);
    f32::from_bits((r & !0x1fff) | sign)
}
