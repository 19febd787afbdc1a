//! Training runs driven by a config file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use mixprec_core::training::{
    self, blobs, moons, Activation, Dataset, MlpModel, PrecisionPolicy, Split, Storage,
    TrainConfig, TrainingReport,
};
use mixprec_core::{FixedFormat, RandomSource, Rounding};

use crate::config::{Config, Flag};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Blobs {
        per_class: usize,
        classes: usize,
        radius: f64,
        spread: f64,
    },
    Moons {
        per_class: usize,
        noise: f64,
    },
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub policy: PrecisionPolicy,
    pub train: TrainConfig,
    pub dataset: DatasetSpec,
    pub test_fraction: f64,
    pub seed: u64,
}

struct StorageArg(Storage);

impl FromStr for StorageArg {
    type Err = String;

    /// `float16`, `float32`, or `fixed(m,n)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "float16" | "half" => return Ok(StorageArg(Storage::Float16)),
            "float32" | "single" => return Ok(StorageArg(Storage::Float32)),
            _ => {}
        }
        let inner = t
            .strip_prefix("fixed(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| format!("unknown storage {s:?}; use float16, float32 or fixed(m,n)"))?;
        let (m, n) = inner
            .split_once(',')
            .ok_or_else(|| format!("bad fixed format {s:?}"))?;
        let m = m
            .trim()
            .parse()
            .map_err(|_| format!("bad fixed format {s:?}"))?;
        let n = n
            .trim()
            .parse()
            .map_err(|_| format!("bad fixed format {s:?}"))?;
        FixedFormat::signed(m, n)
            .map(|f| StorageArg(Storage::Fixed(f)))
            .map_err(|e| e.to_string())
    }
}

struct RoundingArg(Rounding);

impl FromStr for RoundingArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nearest" => Ok(RoundingArg(Rounding::Nearest)),
            "stochastic" => Ok(RoundingArg(Rounding::Stochastic)),
            _ => Err(format!("unknown rounding {s:?}")),
        }
    }
}

struct ActivationArg(Activation);

impl FromStr for ActivationArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(ActivationArg(Activation::Relu)),
            "tanh" => Ok(ActivationArg(Activation::Tanh)),
            _ => Err(format!("unknown activation {s:?}")),
        }
    }
}

struct ClipArg(Option<f64>);

impl FromStr for ClipArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(ClipArg(None));
        }
        s.parse()
            .map(|v| ClipArg(Some(v)))
            .map_err(|_| format!("bad clip threshold {s:?}"))
    }
}

impl TrainSpec {
    /// Reads a training config. Relative CSV paths resolve against
    /// `base_dir`.
    pub fn from_config(mut c: Config, base_dir: &Path) -> Result<TrainSpec, CliError> {
        let defaults = TrainConfig::default();
        let layer_sizes = c
            .take_list("layer_sizes")?
            .unwrap_or_else(|| vec![2, 16, 3]);
        let activation = c
            .take::<ActivationArg>("activation")?
            .map_or(Activation::Relu, |a| a.0);
        let storage = c
            .take::<StorageArg>("storage")?
            .map_or(Storage::Float32, |s| s.0);
        let rounding = c
            .take::<RoundingArg>("rounding")?
            .map_or(Rounding::Nearest, |r| r.0);
        let policy = PrecisionPolicy {
            storage,
            rounding,
            loss_scale_exponent: c.take_or("loss_scale_exponent", 0)?,
            master_copy: c.take_or("master_copy", Flag(false))?.0,
            accumulate_widened: c.take_or("accumulate_widened", Flag(true))?.0,
            clip_threshold: c.take_or("clip_threshold", ClipArg(None))?.0,
        };
        policy
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let train = TrainConfig {
            epochs: c.take_or("epochs", defaults.epochs)?,
            batch_size: c.take_or("batch_size", defaults.batch_size)?,
            learning_rate: c.take_or("learning_rate", defaults.learning_rate)?,
        };
        if train.batch_size == 0 || train.learning_rate.is_nan() || train.learning_rate < 0.0 {
            return Err(CliError::Usage(
                "batch_size must be positive and learning_rate non-negative".into(),
            ));
        }
        let kind: String = c.take_or("dataset", "blobs".to_string())?;
        let per_class = c.take_or("samples_per_class", 200)?;
        let dataset = match kind.as_str() {
            "blobs" => DatasetSpec::Blobs {
                per_class,
                classes: c.take_or("classes", 3)?,
                radius: c.take_or("radius", 2.5)?,
                spread: c.take_or("spread", 0.6)?,
            },
            "moons" => DatasetSpec::Moons {
                per_class,
                noise: c.take_or("noise", 0.1)?,
            },
            "csv" => {
                let path: PathBuf = c
                    .take("path")?
                    .ok_or_else(|| CliError::Usage("dataset=csv needs path=<file>".into()))?;
                DatasetSpec::Csv(base_dir.join(path))
            }
            other => return Err(CliError::Usage(format!("unknown dataset {other:?}"))),
        };
        let test_fraction = c.take_or("test_fraction", 0.25)?;
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(CliError::Usage(format!("test_fraction {test_fraction}")));
        }
        let seed = c.take_or("seed", 0)?;
        c.finish()?;
        Ok(TrainSpec {
            layer_sizes,
            activation,
            policy,
            train,
            dataset,
            test_fraction,
            seed,
        })
    }

    fn load_data(&self, rng: &mut RandomSource) -> Result<Split, CliError> {
        let data = match &self.dataset {
            DatasetSpec::Blobs {
                per_class,
                classes,
                radius,
                spread,
            } => blobs(*per_class, *classes, *radius, *spread, rng),
            DatasetSpec::Moons { per_class, noise } => moons(*per_class, *noise, rng),
            DatasetSpec::Csv(path) => {
                let f = std::fs::File::open(path)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                Dataset::from_csv(std::io::BufReader::new(f))
                    .map_err(|e| CliError::Data(e.to_string()))?
            }
        };
        if data.n_features != self.layer_sizes[0]
            || data.n_classes > *self.layer_sizes.last().unwrap()
        {
            return Err(CliError::Data(format!(
                "dataset has {} features and {} classes; layer_sizes is {:?}",
                data.n_features, data.n_classes, self.layer_sizes
            )));
        }
        Ok(data.split(self.test_fraction, rng))
    }

    /// Generates the data, initializes the model and trains, all from one
    /// seeded stream.
    pub fn run(&self) -> Result<TrainingReport, CliError> {
        let mut rng = RandomSource::new(self.seed);
        let split = self.load_data(&mut rng)?;
        let mut model = MlpModel::new(&self.layer_sizes, self.activation, self.policy, &mut rng)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(training::train(&mut model, &split, &self.train, &mut rng))
    }
}
