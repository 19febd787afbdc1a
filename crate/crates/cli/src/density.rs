//! Representable values per binade `[2^n, 2^(n+1))`.

use mixprec_core::codec::{self, FloatFormat, MAX_ENUMERABLE_BITS};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Enumeration,
    Formula,
}

/// `(n, count)` rows for `n` in `[min, max]`. Formats up to 16 bits are
/// enumerated pattern by pattern, which also covers the subnormal binades;
/// wider formats use `2^fraction_bits` and accept normal binades only.
/// Defaults to the normal range.
pub fn density(
    fmt: &FloatFormat,
    min: Option<i64>,
    max: Option<i64>,
) -> Result<(Method, Vec<(i64, String)>), CliError> {
    let lo = min.unwrap_or(fmt.min_exponent());
    let hi = max.unwrap_or(fmt.max_exponent());
    if lo > hi {
        return Err(CliError::Usage(format!("empty binade range [{lo}, {hi}]")));
    }
    let lowest = fmt.min_exponent() - fmt.fraction_bits as i64;
    if fmt.total_bits <= MAX_ENUMERABLE_BITS {
        if lo < lowest || hi > fmt.max_exponent() {
            return Err(CliError::Usage(format!(
                "{} has binades {lowest}..={} only",
                fmt.name(),
                fmt.max_exponent()
            )));
        }
        let counts =
            codec::binade_counts_by_enumeration(fmt).map_err(|e| CliError::Usage(e.to_string()))?;
        let rows = (lo..=hi)
            .map(|n| (n, counts.get(&n).copied().unwrap_or(0).to_string()))
            .collect();
        return Ok((Method::Enumeration, rows));
    }
    let rows = (lo..=hi)
        .map(|n| {
            codec::binade_count(fmt, n)
                .map(|c| (n, c.to_string()))
                .map_err(|e| CliError::Usage(e.to_string()))
        })
        .collect::<Result<_, _>>()?;
    Ok((Method::Formula, rows))
}

pub fn write_csv<W: std::io::Write>(rows: &[(i64, String)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "n,count")?;
    for (n, c) in rows {
        writeln!(w, "{n},{c}")?;
    }
    Ok(())
}
