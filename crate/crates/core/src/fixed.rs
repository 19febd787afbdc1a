//! Q(m, n) fixed-point numbers with round-to-nearest and stochastic rounding.
//!
//! A value is a scaled integer `raw * 2^-n`. Signed formats use two's
//! complement with `m` integer bits plus a sign bit; unsigned formats use the
//! plain positional layout `sum b_i 2^(i-n)`. Arithmetic saturates at the range
//! bounds; explicit conversions of out-of-range reals are errors instead.

use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

use crate::dyadic::Dyadic;
use crate::random::RandomSource;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixedError {
    #[error("invalid fixed-point format: {0}")]
    InvalidFormat(String),
    #[error("{value} is outside the representable range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },
    #[error("cannot represent non-finite value {0}")]
    NotFinite(f64),
    #[error("operands have different formats ({0} vs {1})")]
    FormatMismatch(FixedFormat, FixedFormat),
}

/// How a real is snapped to the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Rounding {
    /// Nearest grid point, ties to the even raw integer.
    #[default]
    Nearest,
    /// Lower neighbour with probability `1 - (x - floor(x)) / eps`, upper
    /// neighbour otherwise.
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedFormat {
    pub integer_bits: u32,
    pub fraction_bits: u32,
    pub signed: bool,
}

impl FixedFormat {
    pub fn new(integer_bits: u32, fraction_bits: u32, signed: bool) -> Result<Self, FixedError> {
        let fmt = FixedFormat {
            integer_bits,
            fraction_bits,
            signed,
        };
        // The magnitude bits must fit an i64 raw value.
        if integer_bits == 0 || integer_bits + fraction_bits > 63 {
            return Err(FixedError::InvalidFormat(fmt.to_string()));
        }
        Ok(fmt)
    }

    pub fn signed(integer_bits: u32, fraction_bits: u32) -> Result<Self, FixedError> {
        Self::new(integer_bits, fraction_bits, true)
    }

    pub fn unsigned(integer_bits: u32, fraction_bits: u32) -> Result<Self, FixedError> {
        Self::new(integer_bits, fraction_bits, false)
    }

    pub fn width(&self) -> u32 {
        self.integer_bits + self.fraction_bits + self.signed as u32
    }

    /// Grid spacing `2^-n`.
    pub fn epsilon(&self) -> f64 {
        (-(self.fraction_bits as f64)).exp2()
    }

    pub fn min_raw(&self) -> i64 {
        if self.signed {
            -(1i64 << (self.integer_bits + self.fraction_bits))
        } else {
            0
        }
    }

    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.integer_bits + self.fraction_bits)) - 1
    }

    pub fn min_value(&self) -> f64 {
        self.raw_to_f64(self.min_raw())
    }

    pub fn max_value(&self) -> f64 {
        self.raw_to_f64(self.max_raw())
    }

    fn raw_to_f64(&self, raw: i64) -> f64 {
        raw as f64 * self.epsilon()
    }

    fn saturate(&self, raw: i128) -> i64 {
        raw.clamp(self.min_raw() as i128, self.max_raw() as i128) as i64
    }

    fn scaled(&self, x: f64) -> Result<f64, FixedError> {
        if !x.is_finite() {
            return Err(FixedError::NotFinite(x));
        }
        if x < self.min_value() || x > self.max_value() {
            return Err(FixedError::OutOfRange {
                value: x,
                min: self.min_value(),
                max: self.max_value(),
            });
        }
        // Power-of-two scaling is exact.
        Ok(x * (self.fraction_bits as f64).exp2())
    }

    fn value(&self, raw: i64) -> FixedValue {
        FixedValue { format: *self, raw }
    }

    /// Largest grid point `<= x`.
    pub fn floor_to_grid(&self, x: f64) -> Result<FixedValue, FixedError> {
        Ok(self.value(self.scaled(x)?.floor() as i64))
    }

    /// Nearest grid point, ties to even raw.
    pub fn round_nearest(&self, x: f64) -> Result<FixedValue, FixedError> {
        Ok(self.value(self.scaled(x)?.round_ties_even() as i64))
    }

    /// Stochastic rounding. Always consumes exactly one uniform draw.
    pub fn round_stochastic(
        &self,
        x: f64,
        rng: &mut RandomSource,
    ) -> Result<FixedValue, FixedError> {
        let s = self.scaled(x)?;
        let lower = s.floor();
        let frac = s - lower;
        let u = rng.uniform();
        let raw = lower as i64 + (u < frac) as i64;
        Ok(self.value(raw))
    }

    pub fn round(
        &self,
        x: f64,
        mode: Rounding,
        rng: &mut RandomSource,
    ) -> Result<FixedValue, FixedError> {
        match mode {
            Rounding::Nearest => self.round_nearest(x),
            Rounding::Stochastic => self.round_stochastic(x, rng),
        }
    }

    /// Like [`round`](Self::round) but clamps out-of-range input to the
    /// nearest bound first. NaN is still an error.
    pub fn quantize(
        &self,
        x: f64,
        mode: Rounding,
        rng: &mut RandomSource,
    ) -> Result<FixedValue, FixedError> {
        if x.is_nan() {
            return Err(FixedError::NotFinite(x));
        }
        self.round(x.clamp(self.min_value(), self.max_value()), mode, rng)
    }

    /// Value with the given raw integer. Raw values outside the range
    /// saturate.
    pub fn from_raw(&self, raw: i64) -> FixedValue {
        self.value(self.saturate(raw as i128))
    }

    /// Reads an unsigned bit pattern `b_{m+n-1} … b_0`.
    pub fn from_unsigned_bits(&self, bits: u64) -> Result<FixedValue, FixedError> {
        if self.signed || bits > self.max_raw() as u64 {
            return Err(FixedError::InvalidFormat(format!("{bits:#x} in {self}")));
        }
        Ok(self.value(bits as i64))
    }
}

impl fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = if self.signed { "" } else { "u" };
        write!(f, "{s}Q{}.{}", self.integer_bits, self.fraction_bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedValue {
    format: FixedFormat,
    raw: i64,
}

impl FixedValue {
    pub fn format(&self) -> FixedFormat {
        self.format
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    /// Exact as long as the format is at most 53 bits wide.
    pub fn to_f64(&self) -> f64 {
        self.format.raw_to_f64(self.raw)
    }

    pub fn to_dyadic(&self) -> Dyadic {
        Dyadic::new(BigInt::from(self.raw), -(self.format.fraction_bits as i64))
    }

    fn same_format(&self, other: &FixedValue) -> Result<(), FixedError> {
        if self.format != other.format {
            return Err(FixedError::FormatMismatch(self.format, other.format));
        }
        Ok(())
    }

    /// Exact raw sum, saturated.
    pub fn add(&self, other: &FixedValue) -> Result<FixedValue, FixedError> {
        self.same_format(other)?;
        Ok(self
            .format
            .value(self.format.saturate(self.raw as i128 + other.raw as i128)))
    }

    pub fn sub(&self, other: &FixedValue) -> Result<FixedValue, FixedError> {
        self.same_format(other)?;
        Ok(self
            .format
            .value(self.format.saturate(self.raw as i128 - other.raw as i128)))
    }

    pub fn neg(&self) -> FixedValue {
        self.format.value(self.format.saturate(-(self.raw as i128)))
    }

    /// Exact `2n`-fraction-bit product, rounded back to `n` bits with `mode`,
    /// then saturated. Stochastic mode consumes one draw.
    pub fn mul(
        &self,
        other: &FixedValue,
        mode: Rounding,
        rng: &mut RandomSource,
    ) -> Result<FixedValue, FixedError> {
        self.same_format(other)?;
        let n = self.format.fraction_bits;
        let wide = self.raw as i128 * other.raw as i128;
        let lower = wide >> n; // floor
        let rem = wide - (lower << n);
        let raw = match mode {
            Rounding::Nearest => {
                let half = if n == 0 { 0 } else { 1i128 << (n - 1) };
                let up = n > 0 && (rem > half || (rem == half && lower & 1 == 1));
                lower + up as i128
            }
            Rounding::Stochastic => {
                let frac = rem as f64 / (n as f64).exp2();
                lower + (rng.uniform() < frac) as i128
            }
        };
        Ok(self.format.value(self.format.saturate(raw)))
    }
}

impl fmt::Display for FixedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dyadic())
    }
}

/// Shorthand for `a.add(b)`.
pub fn fixed_add(a: &FixedValue, b: &FixedValue) -> Result<FixedValue, FixedError> {
    a.add(b)
}

/// Shorthand for `a.mul(b, mode, rng)`.
pub fn fixed_mul(
    a: &FixedValue,
    b: &FixedValue,
    mode: Rounding,
    rng: &mut RandomSource,
) -> Result<FixedValue, FixedError> {
    a.mul(b, mode, rng)
}
