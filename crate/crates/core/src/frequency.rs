//! Exact frequencies stored as a signed integer count of microhertz.
//!
//! A 28.4 THz laser line at µHz resolution needs about 20 decimal digits, so
//! the count is an `i128`. Addition, subtraction and integer scaling never
//! round; conversion to `f64` is only used for statistics and for the small
//! deviations propagated inside the servo simulation.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Microhertz per hertz.
pub const MICRO_PER_HZ: i128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFrequencyError {
    #[error("empty frequency literal")]
    Empty,
    #[error("invalid frequency literal `{0}`")]
    Invalid(String),
    #[error("frequency literal `{0}` has sub-microhertz digits")]
    SubMicrohertz(String),
    #[error("frequency literal `{0}` overflows the 128-bit range")]
    Overflow(String),
}

/// A frequency with exact microhertz resolution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactFrequency {
    micro_hz: i128,
}

impl ExactFrequency {
    pub const ZERO: ExactFrequency = ExactFrequency { micro_hz: 0 };

    pub const fn from_micro_hz(micro_hz: i128) -> Self {
        Self { micro_hz }
    }

    pub const fn from_hz(hz: i128) -> Self {
        Self {
            micro_hz: hz * MICRO_PER_HZ,
        }
    }

    pub const fn from_khz(khz: i128) -> Self {
        Self::from_hz(khz * 1_000)
    }

    pub const fn from_mhz(mhz: i128) -> Self {
        Self::from_hz(mhz * 1_000_000)
    }

    pub const fn from_ghz(ghz: i128) -> Self {
        Self::from_hz(ghz * 1_000_000_000)
    }

    /// Rounds a floating-point value in hertz to the nearest microhertz.
    ///
    /// The value goes through its shortest decimal representation, so a
    /// literal such as `388.5e12` or `0.1` lands on the µHz count it names.
    pub fn from_hz_f64(hz: f64) -> Result<Self, ParseFrequencyError> {
        if !hz.is_finite() {
            return Err(ParseFrequencyError::Invalid(hz.to_string()));
        }
        let text = format!("{hz}");
        match text.parse::<Self>() {
            Ok(f) => Ok(f),
            Err(ParseFrequencyError::SubMicrohertz(_)) => {
                // Sub-µHz tails of a float are rounding noise; round them away.
                let scaled = hz * 1e6;
                if scaled.abs() >= 1e36 {
                    return Err(ParseFrequencyError::Overflow(text));
                }
                Ok(Self::from_micro_hz(scaled.round() as i128))
            }
            Err(e) => Err(e),
        }
    }

    pub const fn micro_hz(self) -> i128 {
        self.micro_hz
    }

    /// Lossy conversion; relative error below one part in 10^15 over the
    /// whole range of physical frequencies used here.
    pub fn to_hz(self) -> f64 {
        let mag = self.micro_hz.unsigned_abs();
        let per = MICRO_PER_HZ as u128;
        let hz = (mag / per) as f64 + (mag % per) as f64 / 1e6;
        if self.micro_hz < 0 {
            -hz
        } else {
            hz
        }
    }

    pub fn abs(self) -> Self {
        Self::from_micro_hz(self.micro_hz.abs())
    }

    pub fn is_positive(self) -> bool {
        self.micro_hz > 0
    }

    pub fn is_negative(self) -> bool {
        self.micro_hz < 0
    }

    pub fn checked_add(self, rhs: Self) -> Option<Self> {
        self.micro_hz
            .checked_add(rhs.micro_hz)
            .map(Self::from_micro_hz)
    }

    pub fn checked_sub(self, rhs: Self) -> Option<Self> {
        self.micro_hz
            .checked_sub(rhs.micro_hz)
            .map(Self::from_micro_hz)
    }

    pub fn checked_mul(self, k: i128) -> Option<Self> {
        self.micro_hz.checked_mul(k).map(Self::from_micro_hz)
    }

    /// Floor division of two frequencies (the divisor must be positive).
    pub fn div_floor(self, divisor: Self) -> i128 {
        self.micro_hz.div_euclid(divisor.micro_hz)
    }

    /// Ceiling division of two frequencies (the divisor must be positive).
    pub fn div_ceil(self, divisor: Self) -> i128 {
        -((-self.micro_hz).div_euclid(divisor.micro_hz))
    }

    /// Remainder in `[0, divisor)` for a positive divisor.
    pub fn rem_floor(self, divisor: Self) -> Self {
        Self::from_micro_hz(self.micro_hz.rem_euclid(divisor.micro_hz))
    }

    /// Divides by a positive integer, rounding to the nearest µHz with
    /// ties away from zero. Returns the quotient and the remainder
    /// `self - k * quotient`.
    pub fn div_round(self, k: i128) -> (Self, Self) {
        assert!(k > 0, "divisor must be positive");
        let q = self.micro_hz.div_euclid(k);
        let r = self.micro_hz.rem_euclid(k);
        // r in [0, k): round up when 2r > k, or on a tie for non-negative values
        let up = 2 * r > k || (2 * r == k && self.micro_hz >= 0);
        let q = if up { q + 1 } else { q };
        let quotient = Self::from_micro_hz(q);
        (quotient, self - quotient * k)
    }
}

impl Add for ExactFrequency {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_micro_hz(self.micro_hz + rhs.micro_hz)
    }
}

impl AddAssign for ExactFrequency {
    fn add_assign(&mut self, rhs: Self) {
        self.micro_hz += rhs.micro_hz;
    }
}

impl Sub for ExactFrequency {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_micro_hz(self.micro_hz - rhs.micro_hz)
    }
}

impl SubAssign for ExactFrequency {
    fn sub_assign(&mut self, rhs: Self) {
        self.micro_hz -= rhs.micro_hz;
    }
}

impl Neg for ExactFrequency {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from_micro_hz(-self.micro_hz)
    }
}

impl Mul<i128> for ExactFrequency {
    type Output = Self;
    fn mul(self, k: i128) -> Self {
        Self::from_micro_hz(self.micro_hz * k)
    }
}

impl Mul<ExactFrequency> for i128 {
    type Output = ExactFrequency;
    fn mul(self, f: ExactFrequency) -> ExactFrequency {
        f * self
    }
}

impl Sum for ExactFrequency {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + b)
    }
}

/// Decimal hertz with exactly six fractional digits, e.g. `-1.500000`.
impl fmt::Display for ExactFrequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.micro_hz < 0 { "-" } else { "" };
        let mag = self.micro_hz.unsigned_abs();
        let per = MICRO_PER_HZ as u128;
        write!(f, "{sign}{}.{:06}", mag / per, mag % per)
    }
}

/// Parses a decimal literal in hertz, optionally with a decimal exponent
/// (`28412881552402`, `1.5`, `-0.000001`, `28412881.6e6`). Parsing is exact.
impl FromStr for ExactFrequency {
    type Err = ParseFrequencyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() {
            return Err(ParseFrequencyError::Empty);
        }
        let invalid = || ParseFrequencyError::Invalid(t.to_string());
        let overflow = || ParseFrequencyError::Overflow(t.to_string());
        let (negative, body) = match t.as_bytes()[0] {
            b'-' => (true, &t[1..]),
            b'+' => (false, &t[1..]),
            _ => (false, t),
        };
        let (mantissa, exponent) = match body.find(['e', 'E']) {
            Some(i) => {
                let e: i32 = body[i + 1..].parse().map_err(|_| invalid())?;
                (&body[..i], e)
            }
            None => (body, 0),
        };
        let (int_part, frac_part) = match mantissa.split_once('.') {
            Some((i, f)) => (i, f),
            None => (mantissa, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(invalid());
        }
        let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if !all_digits(int_part) || !all_digits(frac_part) {
            return Err(invalid());
        }
        // value = digits × 10^shift µHz
        let digits = format!("{int_part}{frac_part}");
        let shift = i64::from(exponent) + 6 - frac_part.len() as i64;
        let digits = digits.trim_start_matches('0');
        let (kept, shift) = if shift >= 0 {
            (digits, shift as u32)
        } else {
            let cut = digits.len().saturating_sub(shift.unsigned_abs() as usize);
            if digits[cut..].bytes().any(|b| b != b'0') {
                return Err(ParseFrequencyError::SubMicrohertz(t.to_string()));
            }
            (&digits[..cut], 0)
        };
        let mag: i128 = if kept.is_empty() {
            0
        } else {
            kept.parse::<i128>()
                .ok()
                .and_then(|v| 10i128.checked_pow(shift).and_then(|p| v.checked_mul(p)))
                .ok_or_else(overflow)?
        };
        Ok(Self::from_micro_hz(if negative { -mag } else { mag }))
    }
}

impl Serialize for ExactFrequency {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Accepts an integer (Hz), a float (Hz, via its decimal form) or a decimal
/// string (Hz, exact).
impl<'de> Deserialize<'de> for ExactFrequency {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct FreqVisitor;

        impl Visitor<'_> for FreqVisitor {
            type Value = ExactFrequency;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a frequency in hertz (integer, float or decimal string)")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                Ok(ExactFrequency::from_hz(i128::from(v)))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                Ok(ExactFrequency::from_hz(i128::from(v)))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                ExactFrequency::from_hz_f64(v).map_err(E::custom)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(FreqVisitor)
    }
}
