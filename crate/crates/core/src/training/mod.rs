//! Fully connected classifiers trained under a [`PrecisionPolicy`].
//!
//! Parameters, activations and gradients live in the storage format. Float
//! storage routes every matrix product through [`crate::linalg::gemm_mixed`];
//! fixed-point storage forms exact products and quantizes the results with
//! the policy's rounding. Softmax and the loss are always single precision.

pub mod data;
pub mod reference;

use std::fmt;

use thiserror::Error;

use crate::codec::{FloatFormat, RoundingMode};
use crate::fixed::{FixedError, FixedFormat, Rounding};
use crate::linalg::{self, kernel, AccumulationPolicy, LinalgError, Matrix};
use crate::random::RandomSource;

pub use data::{blobs, moons, Dataset, Split};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("loss scale 2^{0} overflows the storage format")]
    ScaleTooLarge(u32),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fixed(#[from] FixedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Storage {
    Float16,
    Float32,
    Fixed(FixedFormat),
}

impl Storage {
    pub fn float_format(&self) -> Option<FloatFormat> {
        match self {
            Storage::Float16 => Some(FloatFormat::HALF),
            Storage::Float32 => Some(FloatFormat::SINGLE),
            Storage::Fixed(_) => None,
        }
    }
}

impl fmt::Display for Storage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Storage::Float16 => write!(f, "float16"),
            Storage::Float32 => write!(f, "float32"),
            Storage::Fixed(q) => write!(f, "fixed({},{})", q.integer_bits, q.fraction_bits),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionPolicy {
    pub storage: Storage,
    /// Stochastic rounding is only accepted with fixed-point storage.
    pub rounding: Rounding,
    /// The loss is multiplied by `2^k` before backpropagation.
    pub loss_scale_exponent: u32,
    pub master_copy: bool,
    pub accumulate_widened: bool,
    pub clip_threshold: Option<f64>,
}

impl PrecisionPolicy {
    pub fn float32() -> Self {
        PrecisionPolicy {
            storage: Storage::Float32,
            rounding: Rounding::Nearest,
            loss_scale_exponent: 0,
            master_copy: false,
            accumulate_widened: true,
            clip_threshold: None,
        }
    }

    /// float16 everywhere, none of the three techniques.
    pub fn float16_plain() -> Self {
        PrecisionPolicy {
            storage: Storage::Float16,
            accumulate_widened: false,
            ..Self::float32()
        }
    }

    /// float16 storage with a float32 master copy, loss scale 2^4 and
    /// float32 accumulation.
    pub fn float16_mixed() -> Self {
        PrecisionPolicy {
            storage: Storage::Float16,
            loss_scale_exponent: 4,
            master_copy: true,
            accumulate_widened: true,
            ..Self::float32()
        }
    }

    pub fn fixed(format: FixedFormat, rounding: Rounding) -> Self {
        PrecisionPolicy {
            storage: Storage::Fixed(format),
            rounding,
            ..Self::float32()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.rounding == Rounding::Stochastic && !matches!(self.storage, Storage::Fixed(_)) {
            return Err(TrainError::InvalidPolicy(
                "stochastic rounding needs fixed-point storage".into(),
            ));
        }
        if let Some(t) = self.clip_threshold {
            if !(t > 0.0 && t.is_finite()) {
                return Err(TrainError::InvalidPolicy(format!("clip threshold {t}")));
            }
        }
        Ok(())
    }

    fn accumulate_format(&self) -> Option<FloatFormat> {
        let storage = self.storage.float_format()?;
        Some(if self.accumulate_widened {
            FloatFormat::SINGLE
        } else {
            storage
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => (z > 0.0) as u8 as f64,
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }

    fn apply_f32(&self, z: f32) -> f32 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }
}

/// One affine layer; weights are `inputs x outputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn weight(&self, input: usize, output: usize) -> f64 {
        self.weights[input * self.outputs + output]
    }

    fn len(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Gradients in the storage format, still carrying the `2^k` loss scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub scale_exponent: u32,
    /// Entries that are zero here but nonzero in the float64 reference.
    pub zero_flushed: usize,
}

/// Values kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub batch: usize,
    /// `activations[0]` is the stored input; the last entry holds the logits.
    pub activations: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
    pub probabilities: Vec<f32>,
    pub labels: Vec<usize>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    sizes: Vec<usize>,
    activation: Activation,
    policy: PrecisionPolicy,
    layers: Vec<Layer>,
    master: Option<Vec<Layer>>,
}

impl MlpModel {
    /// Uniform Glorot initialization, rounded to nearest into storage.
    pub fn new(
        sizes: &[usize],
        activation: Activation,
        policy: PrecisionPolicy,
        rng: &mut RandomSource,
    ) -> Result<Self, TrainError> {
        let layers = Self::check_sizes(sizes)?
            .map(|(i, o)| {
                let limit = (6.0 / (i + o) as f64).sqrt();
                Layer {
                    inputs: i,
                    outputs: o,
                    weights: (0..i * o)
                        .map(|_| rng.uniform_range(-limit, limit))
                        .collect(),
                    biases: vec![0.0; o],
                }
            })
            .collect();
        Self::from_layers(sizes, activation, policy, layers)
    }

    pub fn zeros(
        sizes: &[usize],
        activation: Activation,
        policy: PrecisionPolicy,
    ) -> Result<Self, TrainError> {
        let layers = Self::check_sizes(sizes)?
            .map(|(i, o)| Layer {
                inputs: i,
                outputs: o,
                weights: vec![0.0; i * o],
                biases: vec![0.0; o],
            })
            .collect();
        Self::from_layers(sizes, activation, policy, layers)
    }

    /// Uses the given parameters after rounding them to nearest into
    /// storage. The master copy starts equal to the stored values.
    pub fn from_layers(
        sizes: &[usize],
        activation: Activation,
        policy: PrecisionPolicy,
        layers: Vec<Layer>,
    ) -> Result<Self, TrainError> {
        policy.validate()?;
        let shapes: Vec<_> = Self::check_sizes(sizes)?.collect();
        if shapes.len() != layers.len()
            || shapes.iter().zip(&layers).any(|(&(i, o), l)| {
                l.inputs != i || l.outputs != o || l.weights.len() != i * o || l.biases.len() != o
            })
        {
            return Err(TrainError::Shape(
                "layers do not match the layer sizes".into(),
            ));
        }
        let mut model = MlpModel {
            sizes: sizes.to_vec(),
            activation,
            policy,
            layers: Vec::new(),
            master: None,
        };
        let mut nearest = RandomSource::new(0);
        let layers = layers
            .into_iter()
            .map(|l| {
                Ok(Layer {
                    weights: model.store_all(&l.weights, Rounding::Nearest, &mut nearest)?,
                    biases: model.store_all(&l.biases, Rounding::Nearest, &mut nearest)?,
                    ..l
                })
            })
            .collect::<Result<Vec<_>, TrainError>>()?;
        if layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .any(|v| !v.is_finite())
        {
            return Err(TrainError::InvalidPolicy(
                "parameters overflow the storage format".into(),
            ));
        }
        model.master = policy.master_copy.then(|| layers.clone());
        model.layers = layers;
        Ok(model)
    }

    fn check_sizes(
        sizes: &[usize],
    ) -> Result<impl Iterator<Item = (usize, usize)> + '_, TrainError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(TrainError::Shape(format!("layer sizes {sizes:?}")));
        }
        Ok(sizes.windows(2).map(|w| (w[0], w[1])))
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn policy(&self) -> &PrecisionPolicy {
        &self.policy
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn master(&self) -> Option<&[Layer]> {
        self.master.as_deref()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    fn classes(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Rounds one value into storage. Float storage always rounds to
    /// nearest-even; fixed storage saturates and uses `mode`.
    fn store(&self, x: f64, mode: Rounding, rng: &mut RandomSource) -> Result<f64, TrainError> {
        match self.policy.storage {
            Storage::Fixed(q) => Ok(q.quantize(x, mode, rng)?.to_f64()),
            s => Ok(kernel::round_to(
                x,
                &s.float_format().unwrap(),
                RoundingMode::NearestEven,
            )),
        }
    }

    fn store_all(
        &self,
        xs: &[f64],
        mode: Rounding,
        rng: &mut RandomSource,
    ) -> Result<Vec<f64>, TrainError> {
        xs.iter().map(|&x| self.store(x, mode, rng)).collect()
    }

    /// `a (m x k) * b (k x n)`. Float storage: mixed GEMM, result in the
    /// accumulation format. Fixed storage: exact float64 sums of grid values.
    fn matmul(
        &self,
        a: &[f64],
        m: usize,
        k: usize,
        b: &[f64],
        n: usize,
    ) -> Result<Vec<f64>, TrainError> {
        match (
            self.policy.storage.float_format(),
            self.policy.accumulate_format(),
        ) {
            (Some(s), Some(acc)) => {
                let am = Matrix::new(m, k, s, a.to_vec())?;
                let bm = Matrix::new(k, n, s, b.to_vec())?;
                let p = AccumulationPolicy::new(s, acc, acc)?;
                Ok(linalg::gemm_mixed(&am, &bm, &p)?.data().to_vec())
            }
            _ => {
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for (kk, &x) in a[i * k..(i + 1) * k].iter().enumerate() {
                        for j in 0..n {
                            out[i * n + j] += x * b[kk * n + j];
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    fn accumulate_add(&self, x: f64, y: f64) -> f64 {
        match self.policy.accumulate_format() {
            Some(acc) => kernel::add(x, y, &acc, RoundingMode::NearestEven),
            None => x + y,
        }
    }

    fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let mut t = vec![0.0; data.len()];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = data[i * cols + j];
            }
        }
        t
    }

    /// Forward pass on a batch (`x` is `labels.len() x inputs`). Stochastic
    /// fixed-point rounding draws from `rng`.
    pub fn forward(
        &self,
        x: &[f64],
        labels: &[usize],
        rng: &mut RandomSource,
    ) -> Result<ForwardPass, TrainError> {
        let batch = labels.len();
        if x.len() != batch * self.sizes[0] {
            return Err(TrainError::Shape(format!(
                "{} feature values for {batch} samples of width {}",
                x.len(),
                self.sizes[0]
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= self.classes()) {
            return Err(TrainError::Shape(format!(
                "label {l} for {} outputs",
                self.classes()
            )));
        }
        let mode = self.policy.rounding;
        let mut activations = vec![self.store_all(x, Rounding::Nearest, rng)?];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let a = activations.last().unwrap();
            let mut z = self.matmul(a, batch, layer.inputs, &layer.weights, layer.outputs)?;
            for (idx, v) in z.iter_mut().enumerate() {
                *v = self.store(
                    self.accumulate_add(*v, layer.biases[idx % layer.outputs]),
                    mode,
                    rng,
                )?;
            }
            let out = if l + 1 < self.layers.len() {
                match self.activation {
                    Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
                    Activation::Tanh => z
                        .iter()
                        .map(|&v| self.store((v as f32).tanh() as f64, mode, rng))
                        .collect::<Result<_, _>>()?,
                }
            } else {
                z.clone()
            };
            pre_activations.push(z);
            activations.push(out);
        }
        let (probabilities, loss) =
            softmax_cross_entropy(activations.last().unwrap(), labels, self.classes());
        if !loss.is_finite() {
            return Err(TrainError::Divergence(format!("loss is {loss}")));
        }
        Ok(ForwardPass {
            batch,
            activations,
            pre_activations,
            probabilities,
            labels: labels.to_vec(),
            loss: loss as f64,
        })
    }

    /// Backpropagates `2^k` times the loss of `pass`.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        rng: &mut RandomSource,
    ) -> Result<Gradients, TrainError> {
        let k = self.policy.loss_scale_exponent;
        let mode = self.policy.rounding;
        let batch = pass.batch;
        let classes = self.classes();
        let scale = 2f32.powi(k as i32);
        let overflow = |v: &[f64]| v.iter().any(|x| !x.is_finite());

        let mut delta = Vec::with_capacity(batch * classes);
        for (idx, &p) in pass.probabilities.iter().enumerate() {
            let y = (pass.labels[idx / classes] == idx % classes) as u8 as f32;
            delta.push(self.store(((p - y) / batch as f32 * scale) as f64, mode, rng)?);
        }
        if overflow(&delta) {
            return Err(TrainError::ScaleTooLarge(k));
        }

        let n = self.layers.len();
        let mut weights = vec![Vec::new(); n];
        let mut biases = vec![Vec::new(); n];
        let ones = vec![1.0; batch];
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let a_t = Self::transpose(&pass.activations[l], batch, layer.inputs);
            let gw = self.matmul(&a_t, layer.inputs, batch, &delta, layer.outputs)?;
            let gb = self.matmul(&ones, 1, batch, &delta, layer.outputs)?;
            weights[l] = self.store_all(&gw, mode, rng)?;
            biases[l] = self.store_all(&gb, mode, rng)?;
            if overflow(&weights[l]) || overflow(&biases[l]) {
                return Err(TrainError::ScaleTooLarge(k));
            }
            if l > 0 {
                let w_t = Self::transpose(&layer.weights, layer.inputs, layer.outputs);
                let back = self.matmul(&delta, batch, layer.outputs, &w_t, layer.inputs)?;
                let back = self.store_all(&back, mode, rng)?;
                let z = &pass.pre_activations[l - 1];
                let a = &pass.activations[l];
                let mut next = Vec::with_capacity(back.len());
                for (idx, &d) in back.iter().enumerate() {
                    let slope = match self.activation {
                        Activation::Relu => (z[idx] > 0.0) as u8 as f64,
                        Activation::Tanh => {
                            let t = a[idx] as f32;
                            self.store((1.0 - t * t) as f64, mode, rng)?
                        }
                    };
                    // Both factors are storage values, so the float64
                    // product is exact and `store` rounds it once.
                    next.push(self.store(d * slope, mode, rng)?);
                }
                if overflow(&next) {
                    return Err(TrainError::ScaleTooLarge(k));
                }
                delta = next;
            }
        }

        let wide = reference::gradients(
            &self.layers,
            self.activation,
            &pass.activations[0],
            &pass.labels,
            k,
        );
        let zero_flushed = weights
            .iter()
            .chain(&biases)
            .flatten()
            .zip(wide.weights.iter().chain(&wide.biases).flatten())
            .filter(|(&g, &r)| g == 0.0 && r != 0.0)
            .count();
        Ok(Gradients {
            weights,
            biases,
            scale_exponent: k,
            zero_flushed,
        })
    }

    /// Unscales, clips, and applies one SGD step. Returns the number of
    /// clipped gradient entries.
    pub fn optimizer_step(
        &mut self,
        grads: &Gradients,
        learning_rate: f64,
        rng: &mut RandomSource,
    ) -> Result<usize, TrainError> {
        if grads.weights.len() != self.layers.len()
            || self
                .layers
                .iter()
                .zip(&grads.weights)
                .any(|(l, g)| l.weights.len() != g.len())
            || self
                .layers
                .iter()
                .zip(&grads.biases)
                .any(|(l, g)| l.biases.len() != g.len())
        {
            return Err(TrainError::Shape("gradients do not match the model".into()));
        }
        let unscale = 2f64.powi(-(grads.scale_exponent as i32));
        let mut clipped = 0;
        let mut prepare = |g: f64| {
            let g = g * unscale;
            match self.policy.clip_threshold {
                Some(t) if g.abs() > t => {
                    clipped += 1;
                    t.copysign(g)
                }
                _ => g,
            }
        };
        let grads: Vec<(Vec<f64>, Vec<f64>)> = grads
            .weights
            .iter()
            .zip(&grads.biases)
            .map(|(gw, gb)| {
                (
                    gw.iter().map(|&g| prepare(g)).collect(),
                    gb.iter().map(|&g| prepare(g)).collect(),
                )
            })
            .collect();

        let lr32 = learning_rate as f32;
        let mode = self.policy.rounding;
        let mut layers = self.layers.clone();
        let mut master = self.master.clone();
        if let Some(master) = master.as_mut() {
            let update = |p: &mut [f64], g: &[f64]| {
                for (p, &g) in p.iter_mut().zip(g) {
                    *p = (*p as f32 - lr32 * g as f32) as f64;
                }
            };
            for ((m, layer), (gw, gb)) in master.iter_mut().zip(&mut layers).zip(&grads) {
                update(&mut m.weights, gw);
                update(&mut m.biases, gb);
                layer.weights = self.store_all(&m.weights, mode, rng)?;
                layer.biases = self.store_all(&m.biases, mode, rng)?;
            }
        } else {
            for (layer, (gw, gb)) in layers.iter_mut().zip(&grads) {
                for (p, &g) in layer.weights.iter_mut().zip(gw) {
                    *p = self.storage_update(*p, g, learning_rate, rng)?;
                }
                for (p, &g) in layer.biases.iter_mut().zip(gb) {
                    *p = self.storage_update(*p, g, learning_rate, rng)?;
                }
            }
        }
        self.layers = layers;
        self.master = master;
        Ok(clipped)
    }

    /// `p - lr * g` in storage arithmetic.
    fn storage_update(
        &self,
        p: f64,
        g: f64,
        lr: f64,
        rng: &mut RandomSource,
    ) -> Result<f64, TrainError> {
        match self.policy.storage {
            Storage::Fixed(q) => {
                let step = q.quantize(lr * g, self.policy.rounding, rng)?;
                Ok(q.quantize(p, Rounding::Nearest, rng)?.sub(&step)?.to_f64())
            }
            s => {
                let f = s.float_format().unwrap();
                let ne = RoundingMode::NearestEven;
                let step = kernel::mul(
                    kernel::round_to(lr, &f, ne),
                    kernel::round_to(g, &f, ne),
                    &f,
                    ne,
                );
                Ok(kernel::add(p, -step, &f, ne))
            }
        }
    }

    /// Argmax predictions with single-precision arithmetic on the stored
    /// parameters.
    pub fn predict(&self, x: &[f64]) -> Vec<usize> {
        let batch = x.len() / self.sizes[0];
        let logits = self.logits_f32(x, batch);
        let c = self.classes();
        (0..batch)
            .map(|i| {
                let row = &logits[i * c..(i + 1) * c];
                (0..c).fold(0, |best, j| if row[j] > row[best] { j } else { best })
            })
            .collect()
    }

    fn logits_f32(&self, x: &[f64], batch: usize) -> Vec<f32> {
        let mut a: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0f32; batch * layer.outputs];
            for i in 0..batch {
                for j in 0..layer.outputs {
                    let mut s = layer.biases[j] as f32;
                    for k in 0..layer.inputs {
                        s += a[i * layer.inputs + k] * layer.weight(k, j) as f32;
                    }
                    z[i * layer.outputs + j] = s;
                }
            }
            if l + 1 < self.layers.len() {
                z.iter_mut()
                    .for_each(|v| *v = self.activation.apply_f32(*v));
            }
            a = z;
        }
        a
    }

    /// Mean cross-entropy over a dataset, single precision.
    pub fn loss_f32(&self, data: &Dataset) -> f64 {
        let logits: Vec<f64> = self
            .logits_f32(&data.features, data.len())
            .into_iter()
            .map(f64::from)
            .collect();
        softmax_cross_entropy(&logits, &data.labels, self.classes()).1 as f64
    }
}

/// Row-wise softmax and mean cross-entropy, both in f32.
fn softmax_cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> (Vec<f32>, f32) {
    let mut probs = Vec::with_capacity(logits.len());
    let mut total = 0f32;
    for (i, &y) in labels.iter().enumerate() {
        let row: Vec<f32> = logits[i * classes..(i + 1) * classes]
            .iter()
            .map(|&v| v as f32)
            .collect();
        let m = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let e: Vec<f32> = row.iter().map(|&v| (v - m).exp()).collect();
        let s: f32 = e.iter().sum();
        probs.extend(e.iter().map(|&v| v / s));
        total += s.ln() - (row[y] - m);
    }
    (probs, total / labels.len().max(1) as f32)
}

/// Fraction of correct argmax predictions.
pub fn evaluate(model: &MlpModel, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let correct = model
        .predict(&data.features)
        .iter()
        .zip(&data.labels)
        .filter(|(p, l)| p == l)
        .count();
    correct as f64 / data.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training-set loss after the epoch.
    pub loss: f64,
    pub test_accuracy: f64,
    pub zero_flushed: usize,
    pub clipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    /// Row 0 evaluates the initial model.
    pub epochs: Vec<EpochRecord>,
    pub diverged: Option<TrainError>,
}

impl TrainingReport {
    pub fn final_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |r| r.test_accuracy)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "epoch,loss,test_accuracy,zero_flushed_count,clipped_count"
        )?;
        for r in &self.epochs {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{},{}",
                r.epoch, r.loss, r.test_accuracy, r.zero_flushed, r.clipped
            )?;
        }
        Ok(())
    }
}

/// Minibatch SGD. Deterministic given `rng`. A divergence stops training and
/// is recorded in the report next to the epochs completed so far.
pub fn train(
    model: &mut MlpModel,
    data: &Split,
    cfg: &TrainConfig,
    rng: &mut RandomSource,
) -> TrainingReport {
    let mut report = TrainingReport {
        epochs: vec![EpochRecord {
            epoch: 0,
            loss: model.loss_f32(&data.train),
            test_accuracy: evaluate(model, &data.test),
            zero_flushed: 0,
            clipped: 0,
        }],
        diverged: None,
    };
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let batch_size = cfg.batch_size.max(1);
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let (mut flushed, mut clipped) = (0, 0);
        for chunk in order.chunks(batch_size) {
            let batch = data.train.subset(chunk);
            let step = model
                .forward(&batch.features, &batch.labels, rng)
                .and_then(|pass| model.backward(&pass, rng))
                .and_then(|g| {
                    flushed += g.zero_flushed;
                    model.optimizer_step(&g, cfg.learning_rate, rng)
                });
            match step {
                Ok(c) => clipped += c,
                Err(e) => {
                    report.diverged = Some(e);
                    return report;
                }
            }
        }
        let loss = model.loss_f32(&data.train);
        report.epochs.push(EpochRecord {
            epoch,
            loss,
            test_accuracy: evaluate(model, &data.test),
            zero_flushed: flushed,
            clipped,
        });
        if !loss.is_finite() {
            report.diverged = Some(TrainError::Divergence(format!(
                "loss is {loss} after epoch {epoch}"
            )));
            return report;
        }
    }
    report
}

/// The bundled task: three well separated Gaussian blobs, 200 samples per
/// class, a quarter held out.
pub fn synthetic_task(seed: u64) -> Split {
    let mut rng = RandomSource::new(seed);
    blobs(200, 3, 2.5, 0.6, &mut rng).split(0.25, &mut rng)
}

#[cfg(test)]
mod tests;
