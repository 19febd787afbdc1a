//! Exact dyadic rationals (`mantissa * 2^exponent`) and the extended reals
//! built on top of them.
//!
//! Every finite binary floating-point value is a dyadic rational, so this is
//! the ground-truth number type for the codec and for the exact oracles used
//! throughout the crate. Nothing in here ever rounds, except the explicit
//! conversions to host `f64` and to a fixed number of decimal places.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// An exact value `mantissa * 2^exponent`.
///
/// The representation is canonical: the mantissa is odd, or the value is zero
/// and the exponent is 0. Derived equality is therefore value equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mantissa: BigInt,
    exponent: i64,
}

impl Dyadic {
    pub fn new(mantissa: BigInt, exponent: i64) -> Self {
        if mantissa.is_zero() {
            return Self::zero();
        }
        let tz = mantissa.trailing_zeros().unwrap_or(0);
        Dyadic {
            mantissa: mantissa >> tz,
            exponent: exponent + tz as i64,
        }
    }

    pub fn zero() -> Self {
        Dyadic {
            mantissa: BigInt::zero(),
            exponent: 0,
        }
    }

    pub fn one() -> Self {
        Dyadic {
            mantissa: BigInt::one(),
            exponent: 0,
        }
    }

    pub fn from_i64(v: i64) -> Self {
        Self::new(BigInt::from(v), 0)
    }

    /// `2^k`.
    pub fn pow2(k: i64) -> Self {
        Dyadic {
            mantissa: BigInt::one(),
            exponent: k,
        }
    }

    /// Exact value of a finite host double. Returns `None` for NaN and
    /// infinities. Both zeros map to zero.
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        let bits = x.to_bits();
        let neg = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, exp) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        let m = BigInt::from(mant);
        Some(Self::new(if neg { -m } else { m }, exp))
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.mantissa.is_negative()
    }

    /// -1, 0 or +1.
    pub fn signum(&self) -> i32 {
        match self.mantissa.sign() {
            Sign::Minus => -1,
            Sign::NoSign => 0,
            Sign::Plus => 1,
        }
    }

    pub fn abs(&self) -> Self {
        Dyadic {
            mantissa: self.mantissa.abs(),
            exponent: self.exponent,
        }
    }

    /// Multiplies by `2^k`, exactly.
    pub fn scale_pow2(&self, k: i64) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        Dyadic {
            mantissa: self.mantissa.clone(),
            exponent: self.exponent + k,
        }
    }

    /// Magnitude as an exact fraction `num / den` with `den` a power of two.
    pub fn abs_fraction(&self) -> (BigUint, BigUint) {
        let m = self.mantissa.magnitude().clone();
        if self.exponent >= 0 {
            (m << self.exponent as u64, BigUint::one())
        } else {
            (m, BigUint::one() << (-self.exponent) as u64)
        }
    }

    /// `floor(log2(|self|))`, or `None` for zero.
    pub fn ilog2(&self) -> Option<i64> {
        if self.is_zero() {
            return None;
        }
        Some(self.mantissa.magnitude().bits() as i64 - 1 + self.exponent)
    }

    /// Nearest host double (ties to even, overflow to infinity).
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let neg = self.is_negative();
        let mag = self.mantissa.magnitude();
        let bits = mag.bits() as i64;
        // Keep 64 significant bits plus a sticky bit, then let the hardware
        // round the u64 -> f64 conversion once and scale exactly.
        let (top, exp) = if bits > 62 {
            let shift = (bits - 62) as u64;
            let mut top = (mag >> shift).to_u64().unwrap();
            let lost = mag.trailing_zeros().is_some_and(|tz| tz < shift);
            if lost {
                top |= 1;
            }
            (top, self.exponent + shift as i64)
        } else {
            (mag.to_u64().unwrap(), self.exponent)
        };
        let v = round_u64_scaled(top, exp);
        if neg {
            -v
        } else {
            v
        }
    }

    /// Decimal string with exactly `places` digits after the point, rounded
    /// half to even from the exact value.
    pub fn to_decimal_places(&self, places: usize) -> String {
        let neg = self.is_negative();
        let (num, den) = self.abs_fraction();
        let scaled = num * BigUint::from(10u32).pow(places as u32);
        let (q, r) = scaled.div_rem(&den);
        let twice = r << 1u32;
        let q = match twice.cmp(&den) {
            Ordering::Greater => q + 1u32,
            Ordering::Equal if q.is_odd() => q + 1u32,
            _ => q,
        };
        let digits = q.to_str_radix(10);
        let body = if places == 0 {
            digits
        } else if digits.len() <= places {
            format!("0.{}{}", "0".repeat(places - digits.len()), digits)
        } else {
            let (int, frac) = digits.split_at(digits.len() - places);
            format!("{int}.{frac}")
        };
        if neg && body.chars().any(|c| c != '0' && c != '.') {
            format!("-{body}")
        } else {
            body
        }
    }

    /// The complete (always finite) decimal expansion.
    pub fn to_exact_decimal(&self) -> String {
        if self.exponent >= 0 {
            return (self.mantissa.clone() << self.exponent as u64).to_str_radix(10);
        }
        // m / 2^k = m * 5^k / 10^k
        let places = (-self.exponent) as usize;
        self.to_decimal_places(places)
    }
}

fn round_u64_scaled(top: u64, exp: i64) -> f64 {
    // u64 -> f64 rounds to nearest even. When the subsequent scaling lands in
    // the subnormal range that would round twice, so take the slow path.
    let approx_exp = 63 - top.leading_zeros() as i64 + exp;
    if approx_exp >= -1021 {
        let v = top as f64;
        return ldexp(v, exp);
    }
    // Subnormal result: shift to the 2^-1074 grid by hand.
    let shift = -1074 - exp;
    if shift <= 0 {
        return ldexp(top as f64, exp);
    }
    if shift >= 64 {
        // Strictly below half of 2^-1074 unless top's highest bit sits exactly
        // on it; the magnitude is < 2^(63+exp) <= 2^-1075.
        let half = shift == 64 && top > (1u64 << 63);
        return if half { f64::from_bits(1) } else { 0.0 };
    }
    let shift = shift as u32;
    let q = top >> shift;
    let rem = top & ((1u64 << shift) - 1);
    let half = 1u64 << (shift - 1);
    let up = rem > half || (rem == half && q & 1 == 1);
    f64::from_bits(q + up as u64)
}

/// `x * 2^e` for an exactly-scalable `x`, splitting the scale so no
/// intermediate overflows or flushes.
pub(crate) fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= f64::from_bits(((1000 + 1023) as u64) << 52);
        e -= 1000;
    }
    while e < -1000 {
        x *= f64::from_bits(((-1000 + 1023) as u64) << 52);
        e += 1000;
    }
    x * f64::from_bits(((e + 1023) as u64) << 52)
}

impl Default for Dyadic {
    fn default() -> Self {
        Self::zero()
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        (self - other).mantissa.sign().cmp(&Sign::NoSign)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for &Dyadic {
    type Output = Dyadic;

    fn add(self, rhs: &Dyadic) -> Dyadic {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let e = self.exponent.min(rhs.exponent);
        let a = &self.mantissa << (self.exponent - e) as u64;
        let b = &rhs.mantissa << (rhs.exponent - e) as u64;
        Dyadic::new(a + b, e)
    }
}

impl Add for Dyadic {
    type Output = Dyadic;

    fn add(self, rhs: Dyadic) -> Dyadic {
        &self + &rhs
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;

    fn neg(self) -> Dyadic {
        Dyadic {
            mantissa: -self.mantissa,
            exponent: self.exponent,
        }
    }
}

impl Neg for &Dyadic {
    type Output = Dyadic;

    fn neg(self) -> Dyadic {
        -(self.clone())
    }
}

impl Sub for &Dyadic {
    type Output = Dyadic;

    fn sub(self, rhs: &Dyadic) -> Dyadic {
        self + &(-rhs)
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;

    fn sub(self, rhs: Dyadic) -> Dyadic {
        &self - &rhs
    }
}

impl Mul for &Dyadic {
    type Output = Dyadic;

    fn mul(self, rhs: &Dyadic) -> Dyadic {
        if self.is_zero() || rhs.is_zero() {
            return Dyadic::zero();
        }
        // Product of odd mantissas is odd: already canonical.
        Dyadic {
            mantissa: &self.mantissa * &rhs.mantissa,
            exponent: self.exponent + rhs.exponent,
        }
    }
}

impl Mul for Dyadic {
    type Output = Dyadic;

    fn mul(self, rhs: Dyadic) -> Dyadic {
        &self * &rhs
    }
}

impl std::iter::Sum for Dyadic {
    fn sum<I: Iterator<Item = Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::zero(), |acc, x| &acc + &x)
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_exact_decimal())
    }
}

/// The affinely extended reals plus NaN.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExtendedReal {
    Finite(Dyadic),
    PositiveInfinity,
    NegativeInfinity,
    NotANumber,
}

impl ExtendedReal {
    pub fn is_nan(&self) -> bool {
        matches!(self, ExtendedReal::NotANumber)
    }

    pub fn as_finite(&self) -> Option<&Dyadic> {
        match self {
            ExtendedReal::Finite(d) => Some(d),
            _ => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            ExtendedReal::Finite(d) => d.to_f64(),
            ExtendedReal::PositiveInfinity => f64::INFINITY,
            ExtendedReal::NegativeInfinity => f64::NEG_INFINITY,
            ExtendedReal::NotANumber => f64::NAN,
        }
    }

    /// Ordering of non-NaN values; `None` when either side is NaN.
    pub fn partial_cmp_value(&self, other: &Self) -> Option<Ordering> {
        use ExtendedReal::*;
        match (self, other) {
            (NotANumber, _) | (_, NotANumber) => None,
            (Finite(a), Finite(b)) => Some(a.cmp(b)),
            (PositiveInfinity, PositiveInfinity) | (NegativeInfinity, NegativeInfinity) => {
                Some(Ordering::Equal)
            }
            (PositiveInfinity, _) | (_, NegativeInfinity) => Some(Ordering::Greater),
            (NegativeInfinity, _) | (_, PositiveInfinity) => Some(Ordering::Less),
        }
    }
}

impl From<Dyadic> for ExtendedReal {
    fn from(d: Dyadic) -> Self {
        ExtendedReal::Finite(d)
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(d) => write!(f, "{d}"),
            ExtendedReal::PositiveInfinity => f.write_str("+inf"),
            ExtendedReal::NegativeInfinity => f.write_str("-inf"),
            ExtendedReal::NotANumber => f.write_str("nan"),
        }
    }
}

/// An exact rational `num / den` parsed from decimal text. `den > 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rational {
    pub negative: bool,
    pub num: BigUint,
    pub den: BigUint,
}

impl Rational {
    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }
}

impl From<&Dyadic> for Rational {
    fn from(d: &Dyadic) -> Self {
        let (num, den) = d.abs_fraction();
        Rational {
            negative: d.is_negative(),
            num,
            den,
        }
    }
}

/// Parses a decimal literal such as `-12`, `0.1`, `1.5e-3` or `.25` into an
/// exact rational. Returns `None` on malformed input.
pub fn parse_decimal(text: &str) -> Option<Rational> {
    let s = text.trim();
    let (negative, s) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (mantissa, exp10) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i64>().ok()?),
        None => (s, 0),
    };
    let (int, frac) = match mantissa.find('.') {
        Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
        None => (mantissa, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let num = BigUint::parse_bytes(
        if digits.is_empty() {
            b"0"
        } else {
            digits.as_bytes()
        },
        10,
    )?;
    let scale = exp10 - frac.len() as i64;
    let ten = BigUint::from(10u32);
    let (num, den) = if scale >= 0 {
        (num * ten.pow(u32::try_from(scale).ok()?), BigUint::one())
    } else {
        (num, ten.pow(u32::try_from(-scale).ok()?))
    };
    Some(Rational { negative, num, den })
}
