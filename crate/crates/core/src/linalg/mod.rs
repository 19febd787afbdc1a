//! Mixed-precision dense matrix algebra.
//!
//! Every result is produced by the integer kernel in [`kernel`]: products and
//! sums are rounded exactly where the chosen policy says and nowhere else.
//! [`gemm_oracle`] computes the same products with exact dyadic arithmetic and
//! is the reference for [`error_norms`].

pub mod kernel;

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::codec::{self, FloatFormat, RoundingMode};
use crate::dyadic::{parse_decimal, Dyadic};
use crate::random::RandomSource;

pub use kernel::{fma, round_to};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("format {0} is not supported by the matrix kernels (half, single or double only)")]
    UnsupportedFormat(String),
    #[error("value {value} at index {index} is not representable in {format}")]
    NotRepresentable {
        value: f64,
        index: usize,
        format: String,
    },
    #[error("accumulation format {accumulate} is narrower than input format {input}")]
    NarrowAccumulator { input: String, accumulate: String },
    #[error("matrix file: {0}")]
    Parse(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for LinalgError {
    fn from(e: std::io::Error) -> Self {
        LinalgError::Io(e.to_string())
    }
}

fn check_format(fmt: &FloatFormat) -> Result<(), LinalgError> {
    if !kernel::supported(fmt) {
        return Err(LinalgError::UnsupportedFormat(fmt.name()));
    }
    Ok(())
}

/// Dense row-major matrix whose elements are all values of `format`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    format: FloatFormat,
    data: Vec<f64>,
}

impl Matrix {
    /// Wraps `data`, which must already be representable in `format`.
    pub fn new(
        rows: usize,
        cols: usize,
        format: FloatFormat,
        data: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        check_format(&format)?;
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} elements for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, &v)| !kernel::is_representable(v, &format))
        {
            return Err(LinalgError::NotRepresentable {
                value,
                index,
                format: format.name(),
            });
        }
        Ok(Matrix {
            rows,
            cols,
            format,
            data,
        })
    }

    /// Rounds arbitrary doubles into `format` (nearest-even).
    pub fn from_f64(
        rows: usize,
        cols: usize,
        format: FloatFormat,
        data: &[f64],
    ) -> Result<Self, LinalgError> {
        check_format(&format)?;
        let rounded = data
            .iter()
            .map(|&x| round_to(x, &format, RoundingMode::NearestEven))
            .collect();
        Self::new(rows, cols, format, rounded)
    }

    pub fn zeros(rows: usize, cols: usize, format: FloatFormat) -> Result<Self, LinalgError> {
        Self::new(rows, cols, format, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize, format: FloatFormat) -> Result<Self, LinalgError> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::new(n, n, format, data)
    }

    /// Uniform entries in `[lo, hi)`, rounded into `format`.
    pub fn random_uniform(
        rows: usize,
        cols: usize,
        format: FloatFormat,
        lo: f64,
        hi: f64,
        rng: &mut RandomSource,
    ) -> Result<Self, LinalgError> {
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.uniform_range(lo, hi))
            .collect();
        Self::from_f64(rows, cols, format, &data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn format(&self) -> FloatFormat {
        self.format
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            format: self.format,
            data,
        }
    }

    /// Exact re-tagging into a format that contains every current value.
    pub fn widen(&self, to: FloatFormat) -> Result<Matrix, LinalgError> {
        check_format(&to)?;
        if !self.format.embeds_into(&to) {
            return Err(LinalgError::UnsupportedFormat(format!(
                "{} -> {}",
                self.format, to
            )));
        }
        Ok(Matrix {
            format: to,
            ..self.clone()
        })
    }

    /// Rounds every element into `to` (nearest-even).
    pub fn round_into(&self, to: FloatFormat) -> Result<Matrix, LinalgError> {
        Self::from_f64(self.rows, self.cols, to, &self.data)
    }

    pub fn to_exact(&self) -> ExactMatrix {
        ExactMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&x| Dyadic::from_f64(x).expect("finite matrix entry"))
                .collect(),
        }
    }

    /// Reads the CSV layout written by [`write_csv`](Self::write_csv). Values
    /// are parsed as exact decimals and rounded once into the declared
    /// format.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Matrix, LinalgError> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| LinalgError::Parse("empty input".into()))??;
        let (format, rows, cols) = parse_header(&header)?;
        let mut data = Vec::with_capacity(rows * cols);
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            for field in line.split(',') {
                let r = parse_decimal(field)
                    .ok_or_else(|| LinalgError::Parse(format!("bad number {field:?}")))?;
                let bits = codec::encode_rational(&r, &format, RoundingMode::NearestEven);
                data.push(
                    codec::decode(&bits, &format)
                        .expect("width matches")
                        .to_f64(),
                );
            }
        }
        Matrix::new(rows, cols, format, data)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), LinalgError> {
        let name = match self.format {
            f if f == FloatFormat::HALF => "half",
            f if f == FloatFormat::SINGLE => "single",
            f if f == FloatFormat::DOUBLE => "double",
            other => return Err(LinalgError::UnsupportedFormat(other.name())),
        };
        writeln!(w, "# format={name} rows={} cols={}", self.rows, self.cols)?;
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|x| format!("{x:?}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

fn parse_header(header: &str) -> Result<(FloatFormat, usize, usize), LinalgError> {
    let bad = || LinalgError::Parse(format!("bad header {header:?}"));
    let body = header.trim().strip_prefix('#').ok_or_else(bad)?;
    let (mut format, mut rows, mut cols) = (None, None, None);
    for kv in body.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(bad)?;
        match k {
            "format" => {
                format = Some(match v {
                    "half" => FloatFormat::HALF,
                    "single" => FloatFormat::SINGLE,
                    "double" => FloatFormat::DOUBLE,
                    _ => return Err(bad()),
                })
            }
            "rows" => rows = Some(v.parse().map_err(|_| bad())?),
            "cols" => cols = Some(v.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        }
    }
    Ok((
        format.ok_or_else(bad)?,
        rows.ok_or_else(bad)?,
        cols.ok_or_else(bad)?,
    ))
}

/// A matrix of exact values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Dyadic>,
}

impl ExactMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Dyadic>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} elements for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(ExactMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Dyadic] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> &Dyadic {
        &self.data[i * self.cols + j]
    }
}

/// Which formats a mixed-precision product reads, accumulates and writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccumulationPolicy {
    pub input_format: FloatFormat,
    pub accumulate_format: FloatFormat,
    pub final_format: FloatFormat,
}

impl AccumulationPolicy {
    pub fn new(
        input: FloatFormat,
        accumulate: FloatFormat,
        output: FloatFormat,
    ) -> Result<Self, LinalgError> {
        for f in [&input, &accumulate, &output] {
            check_format(f)?;
        }
        if !input.embeds_into(&accumulate) {
            return Err(LinalgError::NarrowAccumulator {
                input: input.name(),
                accumulate: accumulate.name(),
            });
        }
        Ok(AccumulationPolicy {
            input_format: input,
            accumulate_format: accumulate,
            final_format: output,
        })
    }

    /// float16 operands, float32 accumulation and result.
    pub fn half_into_single() -> Self {
        Self::new(FloatFormat::HALF, FloatFormat::SINGLE, FloatFormat::SINGLE).unwrap()
    }
}

fn check_product(a: &Matrix, b: &Matrix) -> Result<(), LinalgError> {
    if a.cols != b.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "{}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(())
}

/// `C = A B` with each `c_ij` accumulated by chained fused multiply-adds in
/// the accumulation format (k ascending), then rounded once into the final
/// format.
pub fn gemm_mixed(
    a: &Matrix,
    b: &Matrix,
    policy: &AccumulationPolicy,
) -> Result<Matrix, LinalgError> {
    check_product(a, b)?;
    for m in [a, b] {
        if m.format != policy.input_format {
            return Err(LinalgError::UnsupportedFormat(format!(
                "operand is {} but the policy reads {}",
                m.format, policy.input_format
            )));
        }
    }
    let acc = policy.accumulate_format;
    let out = policy.final_format;
    let bt = b.transpose();
    let mut data = Vec::with_capacity(a.rows * b.cols);
    for i in 0..a.rows {
        let row = a.row(i);
        for j in 0..b.cols {
            let col = bt.row(j);
            // Operands widen exactly: input embeds into the accumulator.
            let sum = row
                .iter()
                .zip(col)
                .fold(0.0, |s, (&x, &y)| fma(x, y, s, &acc));
            data.push(round_to(sum, &out, RoundingMode::NearestEven));
        }
    }
    Ok(Matrix {
        rows: a.rows,
        cols: b.cols,
        format: out,
        data,
    })
}

/// `C = A B` entirely in `format`: every product and every partial sum is
/// rounded.
pub fn gemm_uniform(a: &Matrix, b: &Matrix, format: FloatFormat) -> Result<Matrix, LinalgError> {
    check_product(a, b)?;
    check_format(&format)?;
    let (a, b) = (a.round_into(format)?, b.round_into(format)?);
    let bt = b.transpose();
    let mode = RoundingMode::NearestEven;
    let mut data = Vec::with_capacity(a.rows * b.cols);
    for i in 0..a.rows {
        let row = a.row(i);
        for j in 0..b.cols {
            let col = bt.row(j);
            let sum = row.iter().zip(col).fold(0.0, |s, (&x, &y)| {
                kernel::add(s, kernel::mul(x, y, &format, mode), &format, mode)
            });
            data.push(sum);
        }
    }
    Ok(Matrix {
        rows: a.rows,
        cols: b.cols,
        format,
        data,
    })
}

/// Exact `A B`, no rounding anywhere.
pub fn gemm_oracle(a: &Matrix, b: &Matrix) -> Result<ExactMatrix, LinalgError> {
    check_product(a, b)?;
    let (ea, eb) = (a.to_exact(), b.to_exact());
    let mut data = Vec::with_capacity(a.rows * b.cols);
    for i in 0..a.rows {
        for j in 0..b.cols {
            data.push((0..a.cols).map(|k| ea.get(i, k) * eb.get(k, j)).sum());
        }
    }
    ExactMatrix::new(a.rows, b.cols, data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub max_abs: f64,
    /// `||X - R||_F / ||R||_F`, or the absolute norm when `R = 0`.
    pub frobenius_rel: f64,
}

/// Error of a computed matrix against an exact reference. The differences
/// are formed exactly and only then converted to doubles.
pub fn error_norms(x: &Matrix, reference: &ExactMatrix) -> Result<ErrorNorms, LinalgError> {
    if x.rows != reference.rows || x.cols != reference.cols {
        return Err(LinalgError::DimensionMismatch(format!(
            "{}x{} against {}x{}",
            x.rows, x.cols, reference.rows, reference.cols
        )));
    }
    let mut max_abs = 0.0f64;
    let mut err_sq = 0.0f64;
    let mut ref_sq = 0.0f64;
    for (&v, r) in x.data.iter().zip(&reference.data) {
        let e = match Dyadic::from_f64(v) {
            Some(d) => (&d - r).abs().to_f64(),
            None => f64::INFINITY,
        };
        max_abs = max_abs.max(e);
        err_sq += e * e;
        let rf = r.to_f64();
        ref_sq += rf * rf;
    }
    let frob = err_sq.sqrt();
    let frobenius_rel = if ref_sq == 0.0 {
        frob
    } else {
        frob / ref_sq.sqrt()
    };
    Ok(ErrorNorms {
        max_abs,
        frobenius_rel,
    })
}
