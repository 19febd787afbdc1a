//! Integer-only rounding and fused multiply-add for formats no wider than
//! binary64.
//!
//! Values travel as host `f64`s that are exactly representable in the target
//! format; every operation here is done on integer significands and rounded
//! once, so host float arithmetic never influences a result. The codec's
//! big-integer path serves as the independent oracle in tests.

use crate::codec::{FloatFormat, RoundingMode};
use crate::dyadic::ldexp;

/// Binary64 as a [`FloatFormat`] would describe it; anything the kernel
/// accepts must embed into it.
pub fn supported(fmt: &FloatFormat) -> bool {
    fmt.embeds_into(&FloatFormat::DOUBLE)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Unpacked {
    Zero { neg: bool },
    Finite { neg: bool, mant: u64, exp: i32 },
    Inf { neg: bool },
    Nan,
}

fn unpack(x: f64) -> Unpacked {
    let bits = x.to_bits();
    let neg = bits >> 63 == 1;
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    match biased {
        0 if frac == 0 => Unpacked::Zero { neg },
        0 => Unpacked::Finite {
            neg,
            mant: frac,
            exp: -1074,
        },
        0x7ff if frac == 0 => Unpacked::Inf { neg },
        0x7ff => Unpacked::Nan,
        _ => Unpacked::Finite {
            neg,
            mant: frac | (1u64 << 52),
            exp: biased - 1075,
        },
    }
}

fn signed_zero(neg: bool) -> f64 {
    if neg {
        -0.0
    } else {
        0.0
    }
}

fn signed_inf(neg: bool) -> f64 {
    if neg {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    }
}

fn max_finite(fmt: &FloatFormat, neg: bool) -> f64 {
    let f = fmt.fraction_bits as i64;
    let m = (1u64 << (f + 1)) - 1;
    let v = ldexp(m as f64, fmt.max_exponent() - f);
    if neg {
        -v
    } else {
        v
    }
}

/// Rounds `(-1)^neg * (mant + s) * 2^exp` into `fmt`, where `s` is 0 when
/// `sticky` is false and some unknown value in (0, 1) when it is true.
///
/// A set sticky bit must sit at least two bits below the rounding position;
/// the fma path guarantees this by keeping ~125 significant bits.
fn round_parts(
    neg: bool,
    mant: u128,
    exp: i64,
    sticky: bool,
    fmt: &FloatFormat,
    mode: RoundingMode,
) -> f64 {
    if mant == 0 {
        debug_assert!(!sticky);
        return signed_zero(neg);
    }
    let f = fmt.fraction_bits as i64;
    let len = 128 - mant.leading_zeros() as i64;
    let top = exp + len - 1;
    let mut quantum = top.max(fmt.min_exponent()) - f;
    let shift = quantum - exp;

    let (mut q, cmp_half, inexact) = if shift <= 0 {
        debug_assert!(!sticky || shift < -1);
        ((mant << (-shift) as u32), std::cmp::Ordering::Less, sticky)
    } else if shift > 128 {
        (0u128, std::cmp::Ordering::Less, true)
    } else {
        let (q, rem) = if shift == 128 {
            (0u128, mant)
        } else {
            (mant >> shift, mant & ((1u128 << shift) - 1))
        };
        let half = 1u128 << (shift - 1);
        let ord = rem.cmp(&half).then(if sticky {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        });
        (q, ord, rem != 0 || sticky)
    };

    let up = match mode {
        RoundingMode::NearestEven => match cmp_half {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Equal => q & 1 == 1,
            std::cmp::Ordering::Less => false,
        },
        RoundingMode::TowardZero => false,
        RoundingMode::TowardPositive => inexact && !neg,
        RoundingMode::TowardNegative => inexact && neg,
    };
    q += up as u128;
    if q == 0 {
        return signed_zero(neg);
    }
    if q >> (f + 1) != 0 {
        q >>= 1;
        quantum += 1;
    }
    if q >> f != 0 && quantum + f > fmt.max_exponent() {
        let to_inf = match mode {
            RoundingMode::NearestEven => true,
            RoundingMode::TowardZero => false,
            RoundingMode::TowardPositive => !neg,
            RoundingMode::TowardNegative => neg,
        };
        return if to_inf {
            signed_inf(neg)
        } else {
            max_finite(fmt, neg)
        };
    }
    // q < 2^53 and the value is representable in binary64: exact.
    let v = ldexp(q as f64, quantum);
    if neg {
        -v
    } else {
        v
    }
}

/// Rounds a host double into `fmt`.
pub fn round_to(x: f64, fmt: &FloatFormat, mode: RoundingMode) -> f64 {
    debug_assert!(supported(fmt));
    match unpack(x) {
        Unpacked::Zero { .. } | Unpacked::Inf { .. } | Unpacked::Nan => x,
        Unpacked::Finite { neg, mant, exp } => {
            round_parts(neg, mant as u128, exp as i64, false, fmt, mode)
        }
    }
}

/// True if `x` is a value of `fmt` (NaN and infinities count).
pub fn is_representable(x: f64, fmt: &FloatFormat) -> bool {
    !x.is_finite() || round_to(x, fmt, RoundingMode::NearestEven) == x
}

/// `x * y` rounded once into `fmt`.
pub fn mul(x: f64, y: f64, fmt: &FloatFormat, mode: RoundingMode) -> f64 {
    match (unpack(x), unpack(y)) {
        (Unpacked::Nan, _) | (_, Unpacked::Nan) => f64::NAN,
        (Unpacked::Inf { .. }, Unpacked::Zero { .. })
        | (Unpacked::Zero { .. }, Unpacked::Inf { .. }) => f64::NAN,
        (Unpacked::Inf { neg: a }, other) | (other, Unpacked::Inf { neg: a }) => {
            let b = match other {
                Unpacked::Zero { neg } | Unpacked::Inf { neg } | Unpacked::Finite { neg, .. } => {
                    neg
                }
                Unpacked::Nan => unreachable!(),
            };
            signed_inf(a ^ b)
        }
        (Unpacked::Zero { neg: a }, Unpacked::Zero { neg: b })
        | (Unpacked::Zero { neg: a }, Unpacked::Finite { neg: b, .. })
        | (Unpacked::Finite { neg: a, .. }, Unpacked::Zero { neg: b }) => signed_zero(a ^ b),
        (
            Unpacked::Finite {
                neg: a,
                mant: ma,
                exp: ea,
            },
            Unpacked::Finite {
                neg: b,
                mant: mb,
                exp: eb,
            },
        ) => round_parts(
            a ^ b,
            ma as u128 * mb as u128,
            ea as i64 + eb as i64,
            false,
            fmt,
            mode,
        ),
    }
}

/// `x + y` rounded once into `fmt`.
pub fn add(x: f64, y: f64, fmt: &FloatFormat, mode: RoundingMode) -> f64 {
    fma_with(x, 1.0, y, fmt, mode)
}

/// Fused multiply-add: the exact `x * y + z`, rounded once (nearest-even).
pub fn fma(x: f64, y: f64, z: f64, fmt: &FloatFormat) -> f64 {
    fma_with(x, y, z, fmt, RoundingMode::NearestEven)
}

/// Fused multiply-add with an explicit rounding mode.
pub fn fma_with(x: f64, y: f64, z: f64, fmt: &FloatFormat, mode: RoundingMode) -> f64 {
    debug_assert!(supported(fmt));
    let (ux, uy, uz) = (unpack(x), unpack(y), unpack(z));
    if matches!(ux, Unpacked::Nan) || matches!(uy, Unpacked::Nan) || matches!(uz, Unpacked::Nan) {
        return f64::NAN;
    }
    let product = match (ux, uy) {
        (
            Unpacked::Finite {
                neg: a,
                mant: ma,
                exp: ea,
            },
            Unpacked::Finite {
                neg: b,
                mant: mb,
                exp: eb,
            },
        ) => Some((a ^ b, ma as u128 * mb as u128, ea as i64 + eb as i64)),
        _ => None,
    };
    let Some((pneg, pmant, pexp)) = product else {
        // Zero or infinite product: the host handles the special-value rules
        // exactly (no finite rounding can occur except through z).
        let p = x * y;
        if p.is_nan() {
            return f64::NAN;
        }
        if p.is_infinite() {
            return if z.is_infinite() && z.is_sign_negative() != p.is_sign_negative() {
                f64::NAN
            } else {
                p
            };
        }
        // p is a signed zero.
        return match uz {
            Unpacked::Zero { neg } if neg == p.is_sign_negative() => signed_zero(neg),
            Unpacked::Zero { .. } => signed_zero(mode == RoundingMode::TowardNegative),
            _ => round_to(z, fmt, mode),
        };
    };
    let (zneg, zmant, zexp) = match uz {
        Unpacked::Inf { .. } => return z,
        Unpacked::Zero { .. } => return round_parts(pneg, pmant, pexp, false, fmt, mode),
        Unpacked::Finite { neg, mant, exp } => (neg, mant as u128, exp as i64),
        Unpacked::Nan => unreachable!(),
    };

    // Normalise both operands so their top bit is bit 125.
    let norm = |m: u128, e: i64| {
        let s = m.leading_zeros() as i64 - 2;
        (m << s, e - s)
    };
    let (pm, pe) = norm(pmant, pexp);
    let (zm, ze) = norm(zmant, zexp);
    let ((bneg, bm, be), (sneg, sm, se)) = if pe > ze || (pe == ze && pm >= zm) {
        ((pneg, pm, pe), (zneg, zm, ze))
    } else {
        ((zneg, zm, ze), (pneg, pm, pe))
    };
    let d = be - se;
    let (small, sticky) = if d == 0 {
        (sm, false)
    } else if d >= 128 {
        (0, true)
    } else {
        (sm >> d, sm & ((1u128 << d) - 1) != 0)
    };
    let (mant, sticky) = if bneg == sneg {
        (bm + small, sticky)
    } else if sticky {
        // big - (small + s) = (big - small - 1) + (1 - s)
        (bm - small - 1, true)
    } else {
        (bm - small, false)
    };
    if mant == 0 && !sticky {
        return signed_zero(mode == RoundingMode::TowardNegative);
    }
    round_parts(bneg, mant, be, sticky, fmt, mode)
}
