//! Small synthetic classification tasks and a CSV loader.

use std::f64::consts::PI;
use std::io::BufRead;

use super::TrainError;
use crate::random::RandomSource;

/// Row-major features with one integer label per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub n_features: usize,
    pub n_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        n_features: usize,
        n_classes: usize,
    ) -> Result<Self, TrainError> {
        if n_features == 0 || features.len() != labels.len() * n_features {
            return Err(TrainError::Data(format!(
                "{} feature values for {} samples of width {n_features}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(TrainError::Data(format!(
                "label {l} with only {n_classes} classes"
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(TrainError::Data("non-finite feature".into()));
        }
        Ok(Dataset {
            features,
            labels,
            n_features,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices
                .iter()
                .flat_map(|&i| self.sample(i).to_vec())
                .collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_features: self.n_features,
            n_classes: self.n_classes,
        }
    }

    /// Shuffled split with `test_fraction` of the samples held out.
    pub fn split(&self, test_fraction: f64, rng: &mut RandomSource) -> Split {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        rng.shuffle(&mut idx);
        let n_test = ((self.len() as f64) * test_fraction).round() as usize;
        Split {
            test: self.subset(&idx[..n_test]),
            train: self.subset(&idx[n_test..]),
        }
    }

    /// Reads `f_1,…,f_d,label` rows. Blank lines, `#` comments and a
    /// non-numeric header row are skipped.
    pub fn from_csv<R: BufRead>(reader: R) -> Result<Dataset, TrainError> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut width = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| TrainError::Data(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            let Ok(values) = parsed else {
                if width.is_none() && features.is_empty() {
                    continue;
                }
                return Err(TrainError::Data(format!(
                    "line {}: not numeric",
                    lineno + 1
                )));
            };
            let (label, feats) = values
                .split_last()
                .filter(|(_, f)| !f.is_empty())
                .ok_or_else(|| {
                    TrainError::Data(format!(
                        "line {}: need at least one feature and a label",
                        lineno + 1
                    ))
                })?;
            if *width.get_or_insert(feats.len()) != feats.len() {
                return Err(TrainError::Data(format!("line {}: ragged row", lineno + 1)));
            }
            if *label < 0.0 || label.fract() != 0.0 {
                return Err(TrainError::Data(format!(
                    "line {}: bad label {label}",
                    lineno + 1
                )));
            }
            features.extend_from_slice(feats);
            labels.push(*label as usize);
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        Dataset::new(features, labels, width.unwrap_or(0), n_classes)
    }
}

/// Isotropic Gaussian clusters with centres evenly spaced on a circle.
pub fn blobs(
    per_class: usize,
    classes: usize,
    radius: f64,
    spread: f64,
    rng: &mut RandomSource,
) -> Dataset {
    let mut features = Vec::with_capacity(per_class * classes * 2);
    let mut labels = Vec::with_capacity(per_class * classes);
    for _ in 0..per_class {
        for c in 0..classes {
            let angle = 2.0 * PI * c as f64 / classes as f64;
            features.push(radius * angle.cos() + rng.normal(0.0, spread));
            features.push(radius * angle.sin() + rng.normal(0.0, spread));
            labels.push(c);
        }
    }
    Dataset::new(features, labels, 2, classes).expect("generated data is valid")
}

/// Two interleaved half circles.
pub fn moons(per_class: usize, noise: f64, rng: &mut RandomSource) -> Dataset {
    let mut features = Vec::with_capacity(per_class * 4);
    let mut labels = Vec::with_capacity(per_class * 2);
    for _ in 0..per_class {
        let t = PI * rng.uniform();
        features.push(t.cos() + rng.normal(0.0, noise));
        features.push(t.sin() + rng.normal(0.0, noise));
        labels.push(0);
        let t = PI * rng.uniform();
        features.push(1.0 - t.cos() + rng.normal(0.0, noise));
        features.push(0.5 - t.sin() + rng.normal(0.0, noise));
        labels.push(1);
    }
    Dataset::new(features, labels, 2, 2).expect("generated data is valid")
}
