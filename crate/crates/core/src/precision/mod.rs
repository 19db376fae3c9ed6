//! Precision levels and emulated low-precision evaluation.
//!
//! Four levels are available: binary16, binary32 and binary64 follow IEEE
//! semantics (nearest-even, gradual underflow, overflow to infinity); the
//! extended level is a double-double format with an effective 106-bit
//! significand.

mod double_double;
mod half;
mod real;
mod rounding;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use double_double::DoubleDouble;
pub use half::F16;
pub use real::{norm_inf, Real};

use rounding::{round_binary, BinaryFormat, Resolve};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrecisionError {
    #[error("unknown precision level `{0}` (expected f16, f32, f64 or f128)")]
    UnknownLevel(String),
    #[error("malformed precision pair `{0}` (expected high/low, e.g. f64/f16)")]
    MalformedPair(String),
    #[error("precision pair {high}/{low} has low above high")]
    InvertedPair { high: PrecisionLevel, low: PrecisionLevel },
    #[error("value overflowed the {0} range")]
    RangeFault(PrecisionLevel),
}

/// A floating-point format, ordered by significand width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PrecisionLevel {
    Half,
    Single,
    Double,
    Extended,
}

impl PrecisionLevel {
    pub const ALL: [PrecisionLevel; 4] = [Self::Half, Self::Single, Self::Double, Self::Extended];

    /// Significand bits including the implicit bit (effective width for the
    /// double-double extended level).
    pub fn significand_bits(self) -> u32 {
        match self {
            Self::Half => 11,
            Self::Single => 24,
            Self::Double => 53,
            Self::Extended => 106,
        }
    }

    /// Smallest and largest normal exponents.
    pub fn exponent_range(self) -> (i32, i32) {
        match self {
            Self::Half => (-14, 15),
            Self::Single => (-126, 127),
            Self::Double | Self::Extended => (-1022, 1023),
        }
    }

    pub fn unit_roundoff(self) -> f64 {
        unit_roundoff(self)
    }

    /// CLI / config name.
    pub fn name(self) -> &'static str {
        match self {
            Self::Half => "f16",
            Self::Single => "f32",
            Self::Double => "f64",
            Self::Extended => "f128",
        }
    }
}

impl fmt::Display for PrecisionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrecisionLevel {
    type Err = PrecisionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f16" | "half" | "float16" => Ok(Self::Half),
            "f32" | "single" | "float32" => Ok(Self::Single),
            "f64" | "double" | "float64" => Ok(Self::Double),
            "f128" | "extended" | "quad" | "float128" => Ok(Self::Extended),
            _ => Err(PrecisionError::UnknownLevel(s.to_string())),
        }
    }
}

impl From<PrecisionLevel> for String {
    fn from(l: PrecisionLevel) -> Self {
        l.name().to_string()
    }
}

impl TryFrom<String> for PrecisionLevel {
    type Error = PrecisionError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// A (high, low) pairing for one mixed-precision run, written `high/low`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PrecisionPair {
    high: PrecisionLevel,
    low: PrecisionLevel,
}

impl PrecisionPair {
    pub fn new(high: PrecisionLevel, low: PrecisionLevel) -> Result<Self, PrecisionError> {
        if low > high {
            return Err(PrecisionError::InvertedPair { high, low });
        }
        Ok(Self { high, low })
    }

    pub fn uniform(level: PrecisionLevel) -> Self {
        Self { high: level, low: level }
    }

    pub fn high(&self) -> PrecisionLevel {
        self.high
    }

    pub fn low(&self) -> PrecisionLevel {
        self.low
    }

    pub fn is_uniform(&self) -> bool {
        self.high == self.low
    }
}

impl fmt::Display for PrecisionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.high, self.low)
    }
}

impl FromStr for PrecisionPair {
    type Err = PrecisionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (h, l) = s
            .split_once('/')
            .ok_or_else(|| PrecisionError::MalformedPair(s.to_string()))?;
        Self::new(h.parse()?, l.parse()?)
    }
}

impl From<PrecisionPair> for String {
    fn from(p: PrecisionPair) -> Self {
        p.to_string()
    }
}

impl TryFrom<String> for PrecisionPair {
    type Error = PrecisionError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoundingMode {
    #[default]
    NearestEven,
    /// Rounds up with probability equal to the distance from the lower
    /// neighbour, measured in units of the local spacing. The draw is a pure
    /// function of the seed.
    Stochastic(u64),
}

/// `2^(-significand_bits)`.
pub fn unit_roundoff(level: PrecisionLevel) -> f64 {
    rounding::pow2(-(level.significand_bits() as i32))
}

fn binary_format(level: PrecisionLevel) -> Option<BinaryFormat> {
    match level {
        PrecisionLevel::Half => Some(BinaryFormat::HALF),
        PrecisionLevel::Single => Some(BinaryFormat::SINGLE),
        PrecisionLevel::Double | PrecisionLevel::Extended => None,
    }
}

/// Rounds a binary64 value to `level`.
///
/// Binary64 values are representable at the double and extended levels, so
/// those are the identity. Overflow yields a signed infinity.
pub fn round_to(x: f64, level: PrecisionLevel, mode: RoundingMode) -> f64 {
    let Some(fmt) = binary_format(level) else {
        return x;
    };
    let resolve = match mode {
        RoundingMode::NearestEven => Resolve::NearestEven { tail: 0.0 },
        RoundingMode::Stochastic(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Resolve::Stochastic { u: rng.random::<f64>() }
        }
    };
    round_binary(x, fmt, resolve)
}

/// A vector field that can be evaluated at any precision level.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval<T: Real>(&self, y: &[T], out: &mut [T]);
}

/// Evaluates `f` with every operation rounded to `level`.
///
/// The input is rounded to `level` first; the returned components are
/// values of `level` (exactly representable there), given back as binary64
/// for `level <= Double`. Extended-level results are rounded to binary64.
pub fn eval_low<F: VectorField>(f: &F, y: &[f64], level: PrecisionLevel) -> Result<Vec<f64>, PrecisionError> {
    struct Eval<'a, F> {
        f: &'a F,
        y: &'a [f64],
    }
    impl<F: VectorField> LevelVisitor for Eval<'_, F> {
        type Output = Vec<f64>;
        fn visit<T: Real>(self) -> Vec<f64> {
            let yl: Vec<T> = self.y.iter().map(|&v| T::from_f64(v)).collect();
            let mut out = vec![T::zero(); self.f.dim()];
            self.f.eval(&yl, &mut out);
            out.into_iter().map(Real::to_f64).collect()
        }
    }
    let out = dispatch_level(level, Eval { f, y });
    if out.iter().any(|v| v.is_infinite()) {
        return Err(PrecisionError::RangeFault(level));
    }
    Ok(out)
}

/// Generic code run at one runtime-selected level.
pub trait LevelVisitor {
    type Output;
    fn visit<T: Real>(self) -> Self::Output;
}

/// Generic code run at a runtime-selected (high, low) pair.
pub trait PairVisitor {
    type Output;
    fn visit<H: Real, L: Real>(self) -> Self::Output;
}

pub fn dispatch_level<V: LevelVisitor>(level: PrecisionLevel, v: V) -> V::Output {
    match level {
        PrecisionLevel::Half => v.visit::<F16>(),
        PrecisionLevel::Single => v.visit::<f32>(),
        PrecisionLevel::Double => v.visit::<f64>(),
        PrecisionLevel::Extended => v.visit::<DoubleDouble>(),
    }
}

pub fn dispatch_pair<V: PairVisitor>(pair: PrecisionPair, v: V) -> V::Output {
    use PrecisionLevel::*;
    match (pair.high(), pair.low()) {
        (Half, Half) => v.visit::<F16, F16>(),
        (Single, Half) => v.visit::<f32, F16>(),
        (Single, Single) => v.visit::<f32, f32>(),
        (Double, Half) => v.visit::<f64, F16>(),
        (Double, Single) => v.visit::<f64, f32>(),
        (Double, Double) => v.visit::<f64, f64>(),
        (Extended, Half) => v.visit::<DoubleDouble, F16>(),
        (Extended, Single) => v.visit::<DoubleDouble, f32>(),
        (Extended, Double) => v.visit::<DoubleDouble, f64>(),
        (Extended, Extended) => v.visit::<DoubleDouble, DoubleDouble>(),
        (high, low) => unreachable!("pair {high}/{low} violates low <= high"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_roundoffs() {
        assert_eq!(unit_roundoff(PrecisionLevel::Half), 4.8828125e-4);
        assert_eq!(unit_roundoff(PrecisionLevel::Double), 1.1102230246251565e-16);
        assert_eq!(unit_roundoff(PrecisionLevel::Single), 2f64.powi(-24));
        assert_eq!(unit_roundoff(PrecisionLevel::Extended), 2f64.powi(-106));
    }

    #[test]
    fn levels_are_ordered() {
        use PrecisionLevel::*;
        assert!(Half < Single && Single < Double && Double < Extended);
    }

    #[test]
    fn round_to_examples() {
        let ne = RoundingMode::NearestEven;
        assert_eq!(round_to(1.0, PrecisionLevel::Half, ne), 1.0);
        assert_eq!(round_to(0.1, PrecisionLevel::Half, ne), 0.0999755859375);
        assert_eq!(round_to(1.0 + 2f64.powi(-25), PrecisionLevel::Single, ne), 1.0);
        assert_eq!(round_to(0.1, PrecisionLevel::Double, ne), 0.1);
    }

    /// Exact rounding of a rational `num/den` (positive) to `p` significand
    /// bits with ties to even, using big-integer-free u128 arithmetic.
    fn oracle_round_rational(num: u128, den: u128, p: u32) -> f64 {
        // find e with 2^(p-1) <= num/den * 2^-e < 2^p
        let mut e: i32 = 0;
        let (mut n, mut d) = (num, den);
        while n >= d << p {
            d <<= 1;
            e += 1;
        }
        while n < d << (p - 1) {
            n <<= 1;
            e -= 1;
        }
        let q = n / d;
        let r = n % d;
        let q = if 2 * r > d || (2 * r == d && q % 2 == 1) { q + 1 } else { q };
        q as f64 * 2f64.powi(e)
    }

    #[test]
    fn rounding_of_one_tenth_matches_rational_oracle() {
        // 0.1 as the exact rational 1/10, not its binary64 approximation
        let expected = oracle_round_rational(1, 10, 11);
        assert_eq!(expected, 0.0999755859375);
        assert_eq!(round_to(0.1, PrecisionLevel::Half, RoundingMode::NearestEven), expected);
    }

    struct Square;
    impl VectorField for Square {
        fn dim(&self) -> usize {
            1
        }
        fn eval<T: Real>(&self, y: &[T], out: &mut [T]) {
            out[0] = y[0] * y[0];
        }
    }

    struct Identity(usize);
    impl VectorField for Identity {
        fn dim(&self) -> usize {
            self.0
        }
        fn eval<T: Real>(&self, y: &[T], out: &mut [T]) {
            out.copy_from_slice(y);
        }
    }

    #[test]
    fn eval_low_square_matches_two_step_oracle() {
        // 0.0999755859375 = 819/8192; its square 670761/67108864 rounded to 11 bits
        let expected = oracle_round_rational(819 * 819, 8192 * 8192, 11);
        assert_eq!(expected, 0.0099945068359375);
        let out = eval_low(&Square, &[0.1], PrecisionLevel::Half).unwrap();
        assert_eq!(out, vec![expected]);
    }

    #[test]
    fn eval_low_identity_rounds_components() {
        let y = [0.1, -3.3, 1e-6];
        let out = eval_low(&Identity(3), &y, PrecisionLevel::Half).unwrap();
        for (o, v) in out.iter().zip(y) {
            assert_eq!(*o, round_to(v, PrecisionLevel::Half, RoundingMode::NearestEven));
        }
    }

    #[test]
    fn eval_low_at_double_is_direct() {
        let out = eval_low(&Square, &[0.1], PrecisionLevel::Double).unwrap();
        assert_eq!(out[0].to_bits(), (0.1f64 * 0.1).to_bits());
    }

    #[test]
    fn eval_low_overflow_is_range_fault() {
        assert_eq!(
            eval_low(&Square, &[300.0], PrecisionLevel::Half),
            Err(PrecisionError::RangeFault(PrecisionLevel::Half))
        );
    }

    #[test]
    fn single_matches_native_conversion() {
        for &x in &[0.1, 1.0 / 3.0, 1e-40, -7.7e30, 3.4e38, 3.5e38] {
            let r = round_to(x, PrecisionLevel::Single, RoundingMode::NearestEven);
            assert_eq!(r, (x as f32) as f64, "x = {x}");
        }
    }

    #[test]
    fn pair_parsing() {
        let p: PrecisionPair = "f128/f16".parse().unwrap();
        assert_eq!(p.high(), PrecisionLevel::Extended);
        assert_eq!(p.low(), PrecisionLevel::Half);
        assert_eq!(p.to_string(), "f128/f16");
        assert!("f16/f64".parse::<PrecisionPair>().is_err());
        assert!("f64".parse::<PrecisionPair>().is_err());
        assert!("f64/f8".parse::<PrecisionPair>().is_err());
    }

    #[test]
    fn stochastic_rounding_is_unbiased() {
        let x = 0.1;
        let level = PrecisionLevel::Half;
        let n = 20_000u64;
        let draws: Vec<f64> = (0..n).map(|s| round_to(x, level, RoundingMode::Stochastic(s))).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - x).abs() <= 3.0 * se, "mean {mean} se {se}");
        // both neighbours occur and nothing else
        let lo = 0.0999755859375;
        let hi = lo + 2f64.powi(-14);
        assert!(draws.iter().all(|&d| d == lo || d == hi));
        assert_eq!(round_to(x, level, RoundingMode::Stochastic(7)), round_to(x, level, RoundingMode::Stochastic(7)));
    }

    fn level_strategy() -> impl Strategy<Value = PrecisionLevel> {
        prop_oneof![Just(PrecisionLevel::Half), Just(PrecisionLevel::Single)]
    }

    proptest! {
        #[test]
        fn rounding_is_idempotent(x in -1e5f64..1e5, level in level_strategy()) {
            let ne = RoundingMode::NearestEven;
            let r = round_to(x, level, ne);
            prop_assert_eq!(round_to(r, level, ne), r);
        }

        #[test]
        fn rounding_is_monotone(a in -7e4f64..7e4, b in -7e4f64..7e4, level in level_strategy()) {
            let ne = RoundingMode::NearestEven;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(round_to(lo, level, ne) <= round_to(hi, level, ne));
        }

        #[test]
        fn relative_error_bounded_in_normal_range(m in 1.0f64..2.0, e in -14i32..15, neg in any::<bool>(), level in level_strategy()) {
            let x = if neg { -m } else { m } * 2f64.powi(e);
            let r = round_to(x, level, RoundingMode::NearestEven);
            prop_assert!((r - x).abs() <= unit_roundoff(level) * x.abs());
        }

        #[test]
        fn stochastic_picks_a_neighbour(x in -6e4f64..6e4, seed in any::<u64>()) {
            let level = PrecisionLevel::Half;
            let r = round_to(x, level, RoundingMode::Stochastic(seed));
            let down = round_to(x, level, RoundingMode::NearestEven);
            // the two bracketing representables are at most one local spacing apart
            let spacing = 2f64.powi((x.abs().max(2f64.powi(-14))).log2().floor() as i32 - 10);
            prop_assert!((r - x).abs() < spacing || r == down);
        }
    }
}
