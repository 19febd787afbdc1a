//! Bit-level report for one value of a binary format.

use std::fmt::Write as _;

use mixprec_core::codec::{self, BitPattern, FloatClass, FloatFormat, RoundingMode};
use mixprec_core::dyadic::{parse_decimal, Dyadic, ExtendedReal, Rational};

use crate::CliError;

/// Longest exact decimal printed before falling back to `m * 2^e`.
const MAX_EXACT_DIGITS: usize = 400;

/// Resolves `input` to a pattern: hex (`0x…`) or binary of the full width
/// (spaces allowed) is read as bits unless `force_decimal`; everything else
/// is a decimal literal, `inf`, `-inf` or `nan`.
pub fn resolve(
    input: &str,
    fmt: &FloatFormat,
    mode: RoundingMode,
    force_decimal: bool,
) -> Result<(BitPattern, Option<String>), CliError> {
    if !force_decimal {
        if let Ok(p) = BitPattern::parse(input, fmt.total_bits) {
            return Ok((p, None));
        }
    }
    let text = input.trim();
    let lower = text.to_ascii_lowercase();
    let special = match lower.trim_start_matches('+') {
        "inf" | "infinity" => Some(codec::infinity(fmt, false)),
        "-inf" | "-infinity" => Some(codec::infinity(fmt, true)),
        "nan" => Some(codec::canonical_nan(fmt)),
        _ => None,
    };
    if let Some(p) = special {
        return Ok((p, Some(format!("{text} (exact)"))));
    }
    let r = parse_decimal(text).ok_or_else(|| {
        CliError::Usage(format!(
            "cannot read {input:?} as a bit pattern or a number"
        ))
    })?;
    let p = if r.is_zero() {
        let sign = if r.negative { "1" } else { "0" };
        let bits = format!("{sign}{}", "0".repeat(fmt.total_bits as usize - 1));
        BitPattern::parse(&bits, fmt.total_bits).expect("well-formed zero")
    } else {
        codec::encode_rational(&r, fmt, mode)
    };
    let exact = match codec::decode(&p, fmt).expect("width matches") {
        ExtendedReal::Finite(d) => same_value(&r, &d),
        _ => false,
    };
    let note = if exact {
        "exact".to_string()
    } else {
        format!("rounded {}", mode_name(mode))
    };
    Ok((p, Some(format!("{text} ({note})"))))
}

fn same_value(r: &Rational, d: &Dyadic) -> bool {
    let q = Rational::from(d);
    (r.negative == q.negative || r.is_zero()) && &r.num * &q.den == &q.num * &r.den
}

pub fn mode_name(mode: RoundingMode) -> &'static str {
    match mode {
        RoundingMode::NearestEven => "nearest-even",
        RoundingMode::TowardZero => "toward-zero",
        RoundingMode::TowardPositive => "toward-positive",
        RoundingMode::TowardNegative => "toward-negative",
    }
}

pub fn parse_mode(s: &str) -> Result<RoundingMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "nearest" | "nearest-even" | "rne" => Ok(RoundingMode::NearestEven),
        "zero" | "toward-zero" | "rtz" => Ok(RoundingMode::TowardZero),
        "up" | "toward-positive" | "rtp" => Ok(RoundingMode::TowardPositive),
        "down" | "toward-negative" | "rtn" => Ok(RoundingMode::TowardNegative),
        _ => Err(format!("unknown rounding mode {s:?}")),
    }
}

fn exact_text(d: &Dyadic, negative_zero: bool) -> String {
    if d.is_zero() {
        return if negative_zero {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let digits = (-d.exponent()).max(0) as usize + d.mantissa().bits() as usize / 3;
    if digits <= MAX_EXACT_DIGITS {
        d.to_exact_decimal()
    } else {
        format!("{} * 2^{}", d.mantissa(), d.exponent())
    }
}

fn value_text(p: &BitPattern, fmt: &FloatFormat) -> String {
    let neg = p.bit(fmt.total_bits - 1);
    match codec::decode(p, fmt).expect("width matches") {
        ExtendedReal::Finite(d) => exact_text(&d, neg),
        other => other.to_string(),
    }
}

fn class_name(c: FloatClass) -> &'static str {
    match c {
        FloatClass::Zero => "zero",
        FloatClass::Subnormal => "subnormal",
        FloatClass::Normal => "normal",
        FloatClass::Infinity => "infinity",
        FloatClass::Nan => "nan",
    }
}

/// The full text report. The `bits:` line can be fed back to `inspect`.
pub fn report(
    p: &BitPattern,
    fmt: &FloatFormat,
    input_note: Option<&str>,
    places: usize,
) -> Result<String, CliError> {
    let mut out = String::new();
    let class = codec::classify(p, fmt).map_err(|e| CliError::Usage(e.to_string()))?;
    let fields = codec::fields(p, fmt).map_err(|e| CliError::Usage(e.to_string()))?;
    let w = &mut out;
    writeln!(
        w,
        "format: {} (1 sign, {} exponent, {} fraction bits, bias {})",
        fmt.name(),
        fmt.exponent_bits,
        fmt.fraction_bits,
        fmt.bias
    )
    .unwrap();
    if let Some(note) = input_note {
        writeln!(w, "input: {note}").unwrap();
    }
    writeln!(w, "bits: {}", p.grouped(fmt)).unwrap();
    writeln!(w, "hex: {}", p.to_hex()).unwrap();
    writeln!(w, "class: {}", class_name(class)).unwrap();
    writeln!(w, "sign: {}", if fields.sign < 0 { "-" } else { "+" }).unwrap();
    match class {
        FloatClass::Normal => writeln!(
            w,
            "exponent: {} (biased {})",
            fields.biased_exponent as i64 - fmt.bias as i64,
            fields.biased_exponent
        )
        .unwrap(),
        FloatClass::Subnormal | FloatClass::Zero => writeln!(
            w,
            "exponent: {} (biased 0, no implicit bit)",
            fmt.min_exponent()
        )
        .unwrap(),
        _ => writeln!(w, "exponent: all ones").unwrap(),
    }
    writeln!(w, "value: {}", value_text(p, fmt)).unwrap();
    if let ExtendedReal::Finite(d) = codec::decode(p, fmt).unwrap() {
        writeln!(w, "decimal: {}", d.to_decimal_places(places)).unwrap();
    }
    if class != FloatClass::Nan {
        let up = codec::next_up(p, fmt).unwrap();
        let down = codec::next_down(p, fmt).unwrap();
        writeln!(w, "next_up: {} = {}", up.grouped(fmt), value_text(&up, fmt)).unwrap();
        writeln!(
            w,
            "next_down: {} = {}",
            down.grouped(fmt),
            value_text(&down, fmt)
        )
        .unwrap();
    }
    Ok(out)
}
