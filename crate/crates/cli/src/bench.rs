//! Square matrix multiply timings: emulated half against native single and
//! double.

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use mixprec_core::codec::{FloatFormat, RoundingMode};
use mixprec_core::linalg::kernel;
use mixprec_core::RandomSource;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchFormat {
    Half,
    Single,
    Double,
}

impl FromStr for BenchFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "half" | "float16" | "f16" => Ok(BenchFormat::Half),
            "single" | "float32" | "f32" => Ok(BenchFormat::Single),
            "double" | "float64" | "f64" => Ok(BenchFormat::Double),
            _ => Err(format!("unknown benchmark format {s:?}")),
        }
    }
}

impl fmt::Display for BenchFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchFormat::Half => "half",
            BenchFormat::Single => "single",
            BenchFormat::Double => "double",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub formats: Vec<BenchFormat>,
    pub repetitions: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![30, 50, 100, 200, 300, 400],
            formats: vec![BenchFormat::Half, BenchFormat::Single, BenchFormat::Double],
            repetitions: 5,
            warmup: 1,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(CliError::Usage("sizes must be positive".into()));
        }
        if self.formats.is_empty() {
            return Err(CliError::Usage("no formats selected".into()));
        }
        if self.repetitions < 3 {
            return Err(CliError::Usage("at least 3 repetitions are needed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub format: BenchFormat,
    pub n: usize,
    pub median_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub checksum: f64,
}

pub const CSV_HEADER: &str = "format,N,median_s,min_s,max_s,checksum";

pub fn write_csv<W: std::io::Write>(records: &[BenchRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.format, r.n, r.median_s, r.min_s, r.max_s, r.checksum
        )?;
    }
    Ok(())
}

fn multiply_half(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let h = FloatFormat::HALF;
    let ne = RoundingMode::NearestEven;
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s = kernel::add(s, kernel::mul(a[i * n + k], b[k * n + j], &h, ne), &h, ne);
            }
            c[i * n + j] = s;
        }
    }
    c
}

fn multiply_single(a: &[f32], b: &[f32], n: usize) -> Vec<f32> {
    let mut c = vec![0.0f32; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0f32;
            for k in 0..n {
                s += a[i * n + k] * b[k * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}

fn multiply_double(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[i * n + k] * b[k * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[m]
    } else {
        0.5 * (sorted[m - 1] + sorted[m])
    }
}

/// Times one `(format, N)` point. Operands are uniform in `[-1, 1)` rounded
/// into the format.
pub fn measure(format: BenchFormat, n: usize, cfg: &BenchConfig) -> BenchRecord {
    let mut rng = RandomSource::new(cfg.seed ^ (n as u64).rotate_left(32));
    let raw: Vec<f64> = (0..2 * n * n)
        .map(|_| rng.uniform_range(-1.0, 1.0))
        .collect();
    let (ra, rb) = raw.split_at(n * n);
    let run: Box<dyn Fn() -> f64> = match format {
        BenchFormat::Half => {
            let h = FloatFormat::HALF;
            let round = |v: &[f64]| -> Vec<f64> {
                v.iter()
                    .map(|&x| kernel::round_to(x, &h, RoundingMode::NearestEven))
                    .collect()
            };
            let (a, b) = (round(ra), round(rb));
            Box::new(move || multiply_half(black_box(&a), black_box(&b), n).iter().sum())
        }
        BenchFormat::Single => {
            let a: Vec<f32> = ra.iter().map(|&x| x as f32).collect();
            let b: Vec<f32> = rb.iter().map(|&x| x as f32).collect();
            Box::new(move || {
                multiply_single(black_box(&a), black_box(&b), n)
                    .iter()
                    .map(|&x| x as f64)
                    .sum()
            })
        }
        BenchFormat::Double => {
            let (a, b) = (ra.to_vec(), rb.to_vec());
            Box::new(move || {
                multiply_double(black_box(&a), black_box(&b), n)
                    .iter()
                    .sum()
            })
        }
    };
    for _ in 0..cfg.warmup {
        black_box(run());
    }
    let mut times = Vec::with_capacity(cfg.repetitions);
    let mut checksum = 0.0;
    for _ in 0..cfg.repetitions {
        let start = Instant::now();
        checksum = black_box(run());
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    BenchRecord {
        format,
        n,
        median_s: median(&times),
        min_s: times[0],
        max_s: *times.last().unwrap(),
        checksum,
    }
}

/// Every `(format, N)` pair, formats outermost.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>, CliError> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &f in &cfg.formats {
        for &n in &cfg.sizes {
            out.push(measure(f, n, cfg));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_products_agree_across_formats() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [0.5, -1.0, 0.25, 2.0];
        let want = [1.0, 3.0, 2.5, 5.0];
        assert_eq!(multiply_half(&a, &b, 2), want);
        assert_eq!(multiply_double(&a, &b, 2), want);
        let (af, bf): (Vec<f32>, Vec<f32>) = (
            a.iter().map(|&x| x as f32).collect(),
            b.iter().map(|&x| x as f32).collect(),
        );
        assert_eq!(multiply_single(&af, &bf, 2), want.map(|x| x as f32));
    }

    #[test]
    fn records_are_ordered_and_checksums_deterministic() {
        let cfg = BenchConfig {
            sizes: vec![1, 8],
            repetitions: 3,
            warmup: 0,
            ..BenchConfig::default()
        };
        let r1 = run_bench(&cfg).unwrap();
        let r2 = run_bench(&cfg).unwrap();
        assert_eq!(r1.len(), 6);
        for (x, y) in r1.iter().zip(&r2) {
            assert!(x.min_s <= x.median_s && x.median_s <= x.max_s);
            assert_eq!(x.checksum.to_bits(), y.checksum.to_bits());
        }
        let mut csv = Vec::new();
        write_csv(&r1, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("format,N,median_s,min_s,max_s,checksum\nhalf,1,"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = BenchConfig {
            repetitions: 2,
            ..BenchConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.repetitions = 3;
        cfg.sizes = vec![0];
        assert!(cfg.validate().is_err());
        assert!("quad".parse::<BenchFormat>().is_err());
    }
}
