//! Bit-exact IEEE 754 binary interchange formats of any width.
//!
//! Values are decoded to exact [`Dyadic`] rationals and encoded back with a
//! single correctly-rounded step, so the codec never touches host floating
//! point. Subnormals decode as `s * 2^(1-bias) * f` (gradual underflow), and an
//! all-ones exponent with a nonzero fraction is NaN.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::dyadic::{Dyadic, ExtendedReal, Rational};

/// Largest width [`enumerate`] will walk.
pub const MAX_ENUMERABLE_BITS: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("pattern is {actual} bits wide but format {format} needs {expected}")]
    WidthMismatch {
        format: String,
        expected: u32,
        actual: u32,
    },
    #[error("invalid format: {0}")]
    InvalidFormat(String),
    #[error("binade exponent {n} outside the normal range [{min}, {max}]")]
    BinadeOutOfRange { n: i64, min: i64, max: i64 },
    #[error(
        "format {format} is {bits} bits wide; enumeration is limited to {MAX_ENUMERABLE_BITS}"
    )]
    TooLargeToEnumerate { format: String, bits: u32 },
    #[error("NaN has no neighbours")]
    NanInput,
    #[error("cannot parse {0:?} as a bit pattern")]
    Parse(String),
}

/// Parameters of a binary interchange format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FloatFormat {
    pub total_bits: u32,
    pub exponent_bits: u32,
    pub fraction_bits: u32,
    pub bias: u32,
}

impl FloatFormat {
    pub const HALF: FloatFormat = FloatFormat::from_parts(5, 10);
    pub const SINGLE: FloatFormat = FloatFormat::from_parts(8, 23);
    pub const DOUBLE: FloatFormat = FloatFormat::from_parts(11, 52);
    pub const QUADRUPLE: FloatFormat = FloatFormat::from_parts(15, 112);
    pub const OCTUPLE: FloatFormat = FloatFormat::from_parts(19, 236);

    /// The registered interchange formats, narrowest first.
    pub const REGISTERED: [(&'static str, FloatFormat); 5] = [
        ("half", Self::HALF),
        ("single", Self::SINGLE),
        ("double", Self::DOUBLE),
        ("quadruple", Self::QUADRUPLE),
        ("octuple", Self::OCTUPLE),
    ];

    const fn from_parts(exponent_bits: u32, fraction_bits: u32) -> Self {
        FloatFormat {
            total_bits: 1 + exponent_bits + fraction_bits,
            exponent_bits,
            fraction_bits,
            bias: (1 << (exponent_bits - 1)) - 1,
        }
    }

    /// A custom format with IEEE-style bias. Handy for toy formats such as
    /// 1/4/3 that can be enumerated exhaustively.
    pub fn new(exponent_bits: u32, fraction_bits: u32) -> Result<Self, CodecError> {
        if !(2..=30).contains(&exponent_bits) || fraction_bits == 0 || fraction_bits > 4096 {
            return Err(CodecError::InvalidFormat(format!(
                "exponent_bits={exponent_bits} fraction_bits={fraction_bits}"
            )));
        }
        Ok(Self::from_parts(exponent_bits, fraction_bits))
    }

    pub fn name(&self) -> String {
        Self::REGISTERED
            .iter()
            .find(|(_, f)| f == self)
            .map(|(n, _)| n.to_string())
            .unwrap_or_else(|| format!("e{}f{}", self.exponent_bits, self.fraction_bits))
    }

    /// Smallest normal exponent, `1 - bias`.
    pub fn min_exponent(&self) -> i64 {
        1 - self.bias as i64
    }

    /// Largest normal exponent, `bias`.
    pub fn max_exponent(&self) -> i64 {
        self.bias as i64
    }

    pub fn precision(&self) -> u32 {
        self.fraction_bits + 1
    }

    fn max_biased_exponent(&self) -> u64 {
        (1u64 << self.exponent_bits) - 1
    }

    /// True if every finite value of `self` is also a finite value of `wider`.
    pub fn embeds_into(&self, wider: &FloatFormat) -> bool {
        self.fraction_bits <= wider.fraction_bits
            && self.max_exponent() <= wider.max_exponent()
            && self.min_exponent() - self.fraction_bits as i64
                >= wider.min_exponent() - wider.fraction_bits as i64
    }
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for FloatFormat {
    type Err = CodecError;

    /// Accepts `half`, `single`, `double`, `quadruple`, `octuple`, the usual
    /// aliases (`float16`, `f32`, ...), and `e<E>f<F>` for custom formats.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let named = match lower.as_str() {
            "half" | "float16" | "f16" | "binary16" => Some(Self::HALF),
            "single" | "float32" | "f32" | "binary32" => Some(Self::SINGLE),
            "double" | "float64" | "f64" | "binary64" => Some(Self::DOUBLE),
            "quadruple" | "float128" | "binary128" => Some(Self::QUADRUPLE),
            "octuple" | "float256" | "binary256" => Some(Self::OCTUPLE),
            "toy" => Some(Self::from_parts(4, 3)),
            _ => None,
        };
        if let Some(f) = named {
            return Ok(f);
        }
        let bad = || CodecError::InvalidFormat(s.to_string());
        let rest = lower.strip_prefix('e').ok_or_else(bad)?;
        let (e, f) = rest.split_once('f').ok_or_else(bad)?;
        FloatFormat::new(e.parse().map_err(|_| bad())?, f.parse().map_err(|_| bad())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RoundingMode {
    #[default]
    NearestEven,
    TowardZero,
    TowardPositive,
    TowardNegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FloatClass {
    Zero,
    Subnormal,
    Normal,
    Infinity,
    Nan,
}

impl fmt::Display for FloatClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FloatClass::Zero => "zero",
            FloatClass::Subnormal => "subnormal",
            FloatClass::Normal => "normal",
            FloatClass::Infinity => "infinity",
            FloatClass::Nan => "nan",
        })
    }
}

/// A raw bit string of fixed width, bit `width-1` first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitPattern {
    width: u32,
    value: BigUint,
}

impl BitPattern {
    /// Masks `value` to `width` bits.
    pub fn new(width: u32, value: BigUint) -> Self {
        let mask = (BigUint::one() << width) - 1u32;
        BitPattern {
            width,
            value: value & mask,
        }
    }

    pub fn from_u64(width: u32, value: u64) -> Self {
        Self::new(width, BigUint::from(value))
    }

    pub fn zero(width: u32) -> Self {
        Self::new(width, BigUint::zero())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn to_u64(&self) -> Option<u64> {
        self.value.to_u64()
    }

    pub fn bit(&self, i: u32) -> bool {
        self.value.bit(i as u64)
    }

    pub fn to_binary(&self) -> String {
        (0..self.width)
            .rev()
            .map(|i| if self.bit(i) { '1' } else { '0' })
            .collect()
    }

    pub fn to_hex(&self) -> String {
        let digits = self.width.div_ceil(4) as usize;
        format!("0x{:0>digits$}", self.value.to_str_radix(16))
    }

    /// `S EEEEE FFFFFFFFFF` grouping for `fmt`.
    pub fn grouped(&self, fmt: &FloatFormat) -> String {
        let b = self.to_binary();
        if self.width != fmt.total_bits {
            return b;
        }
        let e = fmt.exponent_bits as usize;
        format!("{} {} {}", &b[..1], &b[1..1 + e], &b[1 + e..])
    }

    /// Parses `0x…` hex or a binary string (spaces and `_` ignored) of
    /// exactly `width` digits.
    pub fn parse(text: &str, width: u32) -> Result<Self, CodecError> {
        let err = || CodecError::Parse(text.to_string());
        let compact: String = text
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .collect();
        if let Some(hex) = compact
            .strip_prefix("0x")
            .or_else(|| compact.strip_prefix("0X"))
        {
            let v = BigUint::parse_bytes(hex.as_bytes(), 16).ok_or_else(err)?;
            if v.bits() > width as u64 {
                return Err(err());
            }
            return Ok(Self::new(width, v));
        }
        if compact.len() != width as usize || !compact.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(err());
        }
        let v = BigUint::parse_bytes(compact.as_bytes(), 2).ok_or_else(err)?;
        Ok(Self::new(width, v))
    }

    /// True if `text` looks like a pattern rather than a decimal literal.
    pub fn looks_like_pattern(text: &str, width: u32) -> bool {
        Self::parse(text, width).is_ok()
    }
}

/// `(sign, biased exponent, fraction)` read straight off the bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedFields {
    /// +1 or -1.
    pub sign: i8,
    pub biased_exponent: u64,
    /// Exact value in [0, 1), a multiple of `2^-fraction_bits`.
    pub fraction: Dyadic,
}

/// A bit pattern bundled with its format.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SoftFloat {
    format: FloatFormat,
    bits: BitPattern,
}

impl SoftFloat {
    pub fn new(bits: BitPattern, format: FloatFormat) -> Result<Self, CodecError> {
        check_width(&bits, &format)?;
        Ok(SoftFloat { format, bits })
    }

    pub fn from_value(x: &ExtendedReal, format: FloatFormat, mode: RoundingMode) -> Self {
        SoftFloat {
            bits: encode(x, &format, mode),
            format,
        }
    }

    pub fn format(&self) -> &FloatFormat {
        &self.format
    }

    pub fn bits(&self) -> &BitPattern {
        &self.bits
    }

    pub fn value(&self) -> ExtendedReal {
        decode(&self.bits, &self.format).expect("width checked at construction")
    }

    pub fn class(&self) -> FloatClass {
        classify(&self.bits, &self.format).expect("width checked at construction")
    }
}

impl fmt::Display for SoftFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.bits.grouped(&self.format))
    }
}

fn check_width(p: &BitPattern, fmt: &FloatFormat) -> Result<(), CodecError> {
    if p.width != fmt.total_bits {
        return Err(CodecError::WidthMismatch {
            format: fmt.name(),
            expected: fmt.total_bits,
            actual: p.width,
        });
    }
    Ok(())
}

fn split(p: &BitPattern, fmt: &FloatFormat) -> (bool, u64, BigUint) {
    let neg = p.bit(fmt.total_bits - 1);
    let biased = ((&p.value >> fmt.fraction_bits) & BigUint::from(fmt.max_biased_exponent()))
        .to_u64()
        .unwrap();
    let frac = &p.value & ((BigUint::one() << fmt.fraction_bits) - 1u32);
    (neg, biased, frac)
}

fn assemble(fmt: &FloatFormat, neg: bool, biased: u64, frac: BigUint) -> BitPattern {
    let v = (BigUint::from(neg as u8) << (fmt.total_bits - 1))
        | (BigUint::from(biased) << fmt.fraction_bits)
        | frac;
    BitPattern::new(fmt.total_bits, v)
}

pub fn fields(p: &BitPattern, fmt: &FloatFormat) -> Result<DecodedFields, CodecError> {
    check_width(p, fmt)?;
    let (neg, biased, frac) = split(p, fmt);
    Ok(DecodedFields {
        sign: if neg { -1 } else { 1 },
        biased_exponent: biased,
        fraction: Dyadic::new(BigInt::from(frac), -(fmt.fraction_bits as i64)),
    })
}

pub fn classify(p: &BitPattern, fmt: &FloatFormat) -> Result<FloatClass, CodecError> {
    check_width(p, fmt)?;
    let (_, biased, frac) = split(p, fmt);
    Ok(match (biased, frac.is_zero()) {
        (0, true) => FloatClass::Zero,
        (0, false) => FloatClass::Subnormal,
        (b, true) if b == fmt.max_biased_exponent() => FloatClass::Infinity,
        (b, false) if b == fmt.max_biased_exponent() => FloatClass::Nan,
        _ => FloatClass::Normal,
    })
}

/// Exact value of a pattern.
pub fn decode(p: &BitPattern, fmt: &FloatFormat) -> Result<ExtendedReal, CodecError> {
    check_width(p, fmt)?;
    let (neg, biased, frac) = split(p, fmt);
    if biased == fmt.max_biased_exponent() {
        return Ok(if !frac.is_zero() {
            ExtendedReal::NotANumber
        } else if neg {
            ExtendedReal::NegativeInfinity
        } else {
            ExtendedReal::PositiveInfinity
        });
    }
    let f = fmt.fraction_bits as i64;
    let (mant, exp) = if biased == 0 {
        (frac, fmt.min_exponent() - f)
    } else {
        (
            frac | (BigUint::one() << fmt.fraction_bits),
            biased as i64 - fmt.bias as i64 - f,
        )
    };
    let m = BigInt::from(mant);
    Ok(ExtendedReal::Finite(Dyadic::new(
        if neg { -m } else { m },
        exp,
    )))
}

pub fn canonical_nan(fmt: &FloatFormat) -> BitPattern {
    assemble(
        fmt,
        false,
        fmt.max_biased_exponent(),
        BigUint::one() << (fmt.fraction_bits - 1),
    )
}

pub fn infinity(fmt: &FloatFormat, negative: bool) -> BitPattern {
    assemble(fmt, negative, fmt.max_biased_exponent(), BigUint::zero())
}

pub fn max_finite(fmt: &FloatFormat, negative: bool) -> BitPattern {
    assemble(
        fmt,
        negative,
        fmt.max_biased_exponent() - 1,
        (BigUint::one() << fmt.fraction_bits) - 1u32,
    )
}

/// Rounds `x` into `fmt`. NaN becomes the canonical quiet NaN; exact zero
/// encodes as +0.
pub fn encode(x: &ExtendedReal, fmt: &FloatFormat, mode: RoundingMode) -> BitPattern {
    match x {
        ExtendedReal::NotANumber => canonical_nan(fmt),
        ExtendedReal::PositiveInfinity => infinity(fmt, false),
        ExtendedReal::NegativeInfinity => infinity(fmt, true),
        ExtendedReal::Finite(d) => encode_rational(&Rational::from(d), fmt, mode),
    }
}

pub fn encode_dyadic(x: &Dyadic, fmt: &FloatFormat, mode: RoundingMode) -> BitPattern {
    encode_rational(&Rational::from(x), fmt, mode)
}

/// Correctly rounds an arbitrary exact rational into `fmt`.
pub fn encode_rational(x: &Rational, fmt: &FloatFormat, mode: RoundingMode) -> BitPattern {
    let neg = x.negative;
    if x.num.is_zero() {
        return BitPattern::zero(fmt.total_bits);
    }
    let (num, den) = (&x.num, &x.den);
    // floor(log2(num/den))
    let mut e = num.bits() as i64 - den.bits() as i64;
    if cmp_scaled(num, den, e) == Ordering::Less {
        e -= 1;
    }
    let f = fmt.fraction_bits as i64;
    let quantum = e.max(fmt.min_exponent()) - f;
    // q + r/d = |x| / 2^quantum
    let (n, d) = if quantum < 0 {
        (num << (-quantum) as u64, den.clone())
    } else {
        (num.clone(), den << quantum as u64)
    };
    let (mut q, r) = n.div_rem(&d);
    let inexact = !r.is_zero();
    let up = match mode {
        RoundingMode::NearestEven => match (r << 1u32).cmp(&d) {
            Ordering::Greater => true,
            Ordering::Equal => q.is_odd(),
            Ordering::Less => false,
        },
        RoundingMode::TowardZero => false,
        RoundingMode::TowardPositive => inexact && !neg,
        RoundingMode::TowardNegative => inexact && neg,
    };
    if up {
        q += 1u32;
    }
    let hidden = BigUint::one() << fmt.fraction_bits;
    if q < hidden {
        // Subnormal, or zero after rounding down.
        return assemble(fmt, neg && !q.is_zero(), 0, q);
    }
    let mut quantum = quantum;
    if q.bits() as i64 > f + 1 {
        q >>= 1u32;
        quantum += 1;
    }
    let biased = quantum + f + fmt.bias as i64;
    if biased >= fmt.max_biased_exponent() as i64 {
        let to_inf = match mode {
            RoundingMode::NearestEven => true,
            RoundingMode::TowardZero => false,
            RoundingMode::TowardPositive => !neg,
            RoundingMode::TowardNegative => neg,
        };
        return if to_inf {
            infinity(fmt, neg)
        } else {
            max_finite(fmt, neg)
        };
    }
    assemble(fmt, neg, biased as u64, q - hidden)
}

/// Compares `num` with `den * 2^e`.
fn cmp_scaled(num: &BigUint, den: &BigUint, e: i64) -> Ordering {
    if e >= 0 {
        num.cmp(&(den << e as u64))
    } else {
        (num << (-e) as u64).cmp(den)
    }
}

/// `encode(decode(p, from), to, mode)`, keeping the sign of zeros.
pub fn convert(
    p: &BitPattern,
    from: &FloatFormat,
    to: &FloatFormat,
    mode: RoundingMode,
) -> Result<BitPattern, CodecError> {
    if classify(p, from)? == FloatClass::Zero {
        return Ok(assemble(to, p.bit(from.total_bits - 1), 0, BigUint::zero()));
    }
    Ok(encode(&decode(p, from)?, to, mode))
}

/// Smallest representable value strictly greater than `p`.
pub fn next_up(p: &BitPattern, fmt: &FloatFormat) -> Result<BitPattern, CodecError> {
    let class = classify(p, fmt)?;
    let neg = p.bit(fmt.total_bits - 1);
    let magnitude = &p.value & ((BigUint::one() << (fmt.total_bits - 1)) - 1u32);
    Ok(match (class, neg) {
        (FloatClass::Nan, _) => return Err(CodecError::NanInput),
        (FloatClass::Infinity, false) => p.clone(),
        (FloatClass::Infinity, true) => max_finite(fmt, true),
        (FloatClass::Zero, _) => BitPattern::from_u64(fmt.total_bits, 1),
        (_, false) => BitPattern::new(fmt.total_bits, &p.value + 1u32),
        (_, true) => {
            let m = magnitude - 1u32;
            if m.is_zero() {
                // nextUp(-min subnormal) is -0.
                assemble(fmt, true, 0, BigUint::zero())
            } else {
                BitPattern::new(fmt.total_bits, &p.value - 1u32)
            }
        }
    })
}

/// Largest representable value strictly less than `p`.
pub fn next_down(p: &BitPattern, fmt: &FloatFormat) -> Result<BitPattern, CodecError> {
    let flipped = |q: &BitPattern| {
        BitPattern::new(
            fmt.total_bits,
            &q.value ^ (BigUint::one() << (fmt.total_bits - 1)),
        )
    };
    check_width(p, fmt)?;
    Ok(flipped(&next_up(&flipped(p), fmt)?))
}

/// Number of representable values in `[2^n, 2^(n+1))` for a normal binade.
pub fn binade_count(fmt: &FloatFormat, n: i64) -> Result<BigUint, CodecError> {
    if n < fmt.min_exponent() || n > fmt.max_exponent() {
        return Err(CodecError::BinadeOutOfRange {
            n,
            min: fmt.min_exponent(),
            max: fmt.max_exponent(),
        });
    }
    Ok(BigUint::one() << fmt.fraction_bits)
}

/// `2^(1-bias) * 2^-fraction_bits`, the smallest positive subnormal.
pub fn smallest_positive(fmt: &FloatFormat) -> ExtendedReal {
    ExtendedReal::Finite(Dyadic::pow2(fmt.min_exponent() - fmt.fraction_bits as i64))
}

/// Every pattern of a small format with its value, in pattern order.
pub fn enumerate(fmt: &FloatFormat) -> Result<Vec<(BitPattern, ExtendedReal)>, CodecError> {
    if fmt.total_bits > MAX_ENUMERABLE_BITS {
        return Err(CodecError::TooLargeToEnumerate {
            format: fmt.name(),
            bits: fmt.total_bits,
        });
    }
    Ok((0..1u64 << fmt.total_bits)
        .map(|v| {
            let p = BitPattern::from_u64(fmt.total_bits, v);
            let x = decode(&p, fmt).expect("width matches");
            (p, x)
        })
        .collect())
}

/// Patterns of a small format in sign-magnitude order: most negative first,
/// through -0 and +0, up to +inf and finally NaNs skipped. Decoded values are
/// non-decreasing along this order.
pub fn sign_magnitude_order(fmt: &FloatFormat) -> Result<Vec<BitPattern>, CodecError> {
    let all = enumerate(fmt)?;
    let half = 1u64 << (fmt.total_bits - 1);
    let negatives = (0..half).rev().map(|m| half | m);
    let positives = 0..half;
    Ok(negatives
        .chain(positives)
        .map(|v| all[v as usize].clone())
        .filter(|(_, x)| !x.is_nan())
        .map(|(p, _)| p)
        .collect())
}

/// Counts finite positive values per binade by walking every pattern.
/// Keys are binade exponents `n`; subnormals land in binades below
/// `min_exponent`.
pub fn binade_counts_by_enumeration(
    fmt: &FloatFormat,
) -> Result<std::collections::BTreeMap<i64, u64>, CodecError> {
    let mut counts = std::collections::BTreeMap::new();
    for (_, x) in enumerate(fmt)? {
        if let ExtendedReal::Finite(d) = x {
            if d.signum() > 0 {
                *counts.entry(d.ilog2().unwrap()).or_insert(0) += 1;
            }
        }
    }
    Ok(counts)
}
