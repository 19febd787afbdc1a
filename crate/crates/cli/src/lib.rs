//! Library behind the `mixprec` binary. Each subcommand has a module that
//! does the work and returns plain data, so tests can drive it without a
//! process.

pub mod bench;
pub mod config;
pub mod density;
pub mod inspect;
pub mod pcm;
pub mod train;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use mixprec_core::FloatFormat;

use crate::bench::{BenchConfig, BenchFormat};
use crate::config::{parse_list, Config};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Divergence(String),
    #[error("solver did not converge: {0}")]
    Stagnation(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Stagnation(_) => 5,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mixprec", version, about = "Mixed-precision numerics toolkit")]
pub struct Cli {
    /// Seed for every random stream; overrides a `seed` key in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Flat `key=value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bit-level report for a pattern (0x..., binary) or a decimal value.
    Inspect {
        /// Hex (0x...) or full-width binary pattern, or a decimal number.
        #[arg(allow_hyphen_values = true)]
        input: String,
        /// half, single, double, quadruple, octuple, or eEfF.
        #[arg(long, default_value = "single")]
        format: FloatFormat,
        /// Rounding for decimal input: nearest, zero, up, down.
        #[arg(long, default_value = "nearest", value_parser = inspect::parse_mode)]
        rounding: mixprec_core::RoundingMode,
        /// Digits after the point on the `decimal:` line.
        #[arg(long, default_value_t = 20)]
        places: usize,
        /// Read the input as a number even if it looks like a bit pattern.
        #[arg(long)]
        decimal: bool,
    },
    /// Time square matrix products in half (emulated), single and double.
    Bench {
        /// Comma-separated N values.
        #[arg(long)]
        sizes: Option<String>,
        /// Comma-separated subset of half,single,double.
        #[arg(long)]
        formats: Option<String>,
        /// Timed repetitions per size, at least 3 (default 5).
        #[arg(long)]
        reps: Option<usize>,
        /// Untimed runs before timing (default 1).
        #[arg(long)]
        warmup: Option<usize>,
    },
    /// Count representable values per binade.
    Density {
        /// half, single, double, quadruple, octuple, toy, or eEfF.
        #[arg(long, default_value = "single")]
        format: FloatFormat,
        /// Lowest unbiased exponent (default: the smallest normal one).
        #[arg(long, allow_hyphen_values = true)]
        min: Option<i64>,
        /// Highest unbiased exponent (default: the largest one).
        #[arg(long, allow_hyphen_values = true)]
        max: Option<i64>,
    },
    /// Train a small classifier under a precision policy.
    Train {
        /// Config file; same as --config.
        file: Option<PathBuf>,
    },
    /// Crossbar scalar experiments and the mixed-precision solver.
    Pcm {
        /// Config file; same as --config.
        file: Option<PathBuf>,
    },
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn pick_config(
    global: Option<&Path>,
    positional: Option<&Path>,
) -> Result<Option<(Config, PathBuf)>, CliError> {
    let path = match (global, positional) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Usage(
                "config given twice with different paths".into(),
            ));
        }
        (a, b) => a.or(b),
    };
    path.map(|p| {
        let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::load(p).map(|c| (c, base))
    })
    .transpose()
}

fn with_seed(c: Config, seed: Option<u64>) -> Config {
    match seed {
        Some(s) => c.with("seed", &s.to_string()),
        None => c,
    }
}

fn bench_config(
    cli: &Cli,
    sizes: &Option<String>,
    formats: &Option<String>,
    reps: Option<usize>,
    warmup: Option<usize>,
) -> Result<BenchConfig, CliError> {
    let mut cfg = BenchConfig::default();
    if let Some((mut c, _)) = pick_config(cli.config.as_deref(), None)? {
        if let Some(v) = c.take_list("sizes")? {
            cfg.sizes = v;
        }
        if let Some(v) = c.take_list("formats")? {
            cfg.formats = v;
        }
        cfg.repetitions = c.take_or("repetitions", cfg.repetitions)?;
        cfg.warmup = c.take_or("warmup", cfg.warmup)?;
        cfg.seed = c.take_or("seed", cfg.seed)?;
        c.finish()?;
    }
    let usage = |e: String| CliError::Usage(e);
    if let Some(s) = sizes {
        cfg.sizes = parse_list(s).map_err(usage)?;
    }
    if let Some(f) = formats {
        cfg.formats = parse_list::<BenchFormat>(f).map_err(usage)?;
    }
    cfg.repetitions = reps.unwrap_or(cfg.repetitions);
    cfg.warmup = warmup.unwrap_or(cfg.warmup);
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    Ok(cfg)
}

fn no_config(cli: &Cli, name: &str) -> Result<(), CliError> {
    match cli.config {
        Some(_) => Err(CliError::Usage(format!("{name} takes no config file"))),
        None => Ok(()),
    }
}

/// Runs one parsed command line, writing results to `--out` or stdout and
/// progress to stderr.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Inspect {
            input,
            format,
            rounding,
            places,
            decimal,
        } => {
            no_config(cli, "inspect")?;
            let (p, note) = inspect::resolve(input, format, *rounding, *decimal)?;
            let text = inspect::report(&p, format, note.as_deref(), *places)?;
            let mut out = open_out(cli.out.as_deref())?;
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
        Command::Bench {
            sizes,
            formats,
            reps,
            warmup,
        } => {
            let cfg = bench_config(cli, sizes, formats, *reps, *warmup)?;
            let records = bench::run_bench(&cfg)?;
            let mut out = open_out(cli.out.as_deref())?;
            bench::write_csv(&records, &mut out)?;
            out.flush()?;
        }
        Command::Density { format, min, max } => {
            no_config(cli, "density")?;
            let (_, rows) = density::density(format, *min, *max)?;
            let mut out = open_out(cli.out.as_deref())?;
            density::write_csv(&rows, &mut out)?;
            out.flush()?;
        }
        Command::Train { file } => {
            let (c, base) =
                pick_config(cli.config.as_deref(), file.as_deref())?.unwrap_or_default();
            let spec = train::TrainSpec::from_config(with_seed(c, cli.seed), &base)?;
            let report = spec.run()?;
            let mut out = open_out(cli.out.as_deref())?;
            report.write_csv(&mut out)?;
            out.flush()?;
            if let Some(e) = &report.diverged {
                return Err(CliError::Divergence(e.to_string()));
            }
            if let Some(last) = report.epochs.last() {
                eprintln!(
                    "epochs={} loss={:.6e} test_accuracy={:.4}",
                    last.epoch, last.loss, last.test_accuracy
                );
            }
        }
        Command::Pcm { file } => {
            let (c, _) = pick_config(cli.config.as_deref(), file.as_deref())?.unwrap_or_default();
            let spec = pcm::PcmSpec::from_config(with_seed(c, cli.seed))?;
            let mut out = open_out(cli.out.as_deref())?;
            let result = spec.run(&mut out, &mut io::stderr().lock())?;
            out.flush()?;
            if let Some(r) = result {
                pcm::check_status(&r)?;
            }
        }
    }
    Ok(())
}
