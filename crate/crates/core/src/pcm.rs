//! Simulated phase-change-memory crossbars.
//!
//! A device stores a conductance with a frozen multiplicative programming
//! error and is read with fresh multiplicative noise on every access. Each
//! logical element is stored on `K` devices whose outputs are averaged. The
//! hybrid solver uses the crossbar for the cheap inner iterations and exact
//! float64 residuals for the outer refinement loop.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::DMatrix;
use thiserror::Error;

use crate::random::RandomSource;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcmError {
    #[error("invalid device model: {0}")]
    InvalidModel(String),
    #[error("target {value} at index {index} is outside [0, 1]")]
    OutOfRange { value: f64, index: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is singular or ill-conditioned (condition estimate {0:e})")]
    IllConditioned(f64),
    #[error("the symmetric part of the matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Conditioning limit accepted by the solver.
pub const MAX_CONDITION: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcmDeviceModel {
    /// Relative std of the programming error.
    pub write_noise_sigma: f64,
    /// Relative std of each read.
    pub read_noise_sigma: f64,
    pub conductance_range: (f64, f64),
}

impl Default for PcmDeviceModel {
    fn default() -> Self {
        PcmDeviceModel {
            write_noise_sigma: 0.02,
            read_noise_sigma: 0.01,
            conductance_range: (0.0, 1.25),
        }
    }
}

impl PcmDeviceModel {
    pub fn noiseless() -> Self {
        PcmDeviceModel {
            write_noise_sigma: 0.0,
            read_noise_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PcmError> {
        let (lo, hi) = self.conductance_range;
        if !(self.write_noise_sigma >= 0.0 && self.read_noise_sigma >= 0.0) {
            return Err(PcmError::InvalidModel(
                "noise sigmas must be non-negative".into(),
            ));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(PcmError::InvalidModel(format!(
                "conductance range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// A `rows x cols` array with `K` devices per element.
#[derive(Debug, Clone, PartialEq)]
pub struct PcmArray {
    rows: usize,
    cols: usize,
    replicas: usize,
    /// Indexed `[(i * cols + j) * K + k]`.
    conductances: Vec<f64>,
    model: PcmDeviceModel,
}

impl PcmArray {
    /// Programs `targets` (row-major, each in `[0, 1]`) onto `K` devices
    /// each.
    pub fn program(
        targets: &[f64],
        rows: usize,
        cols: usize,
        replicas: usize,
        model: PcmDeviceModel,
        rng: &mut RandomSource,
    ) -> Result<PcmArray, PcmError> {
        model.validate()?;
        if replicas == 0 {
            return Err(PcmError::InvalidConfig("K must be at least 1".into()));
        }
        if targets.len() != rows * cols {
            return Err(PcmError::Shape(format!(
                "{} targets for a {rows}x{cols} array",
                targets.len()
            )));
        }
        if let Some((index, &value)) = targets
            .iter()
            .enumerate()
            .find(|(_, t)| !(0.0..=1.0).contains(*t))
        {
            return Err(PcmError::OutOfRange { value, index });
        }
        let (lo, hi) = model.conductance_range;
        let mut conductances = Vec::with_capacity(targets.len() * replicas);
        for &t in targets {
            for _ in 0..replicas {
                let g = if model.write_noise_sigma == 0.0 {
                    t
                } else {
                    t * (1.0 + model.write_noise_sigma * rng.standard_normal())
                };
                conductances.push(g.clamp(lo, hi));
            }
        }
        Ok(PcmArray {
            rows,
            cols,
            replicas,
            conductances,
            model,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn model(&self) -> &PcmDeviceModel {
        &self.model
    }

    /// The `K` stored conductances of element `(i, j)`.
    pub fn devices(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.cols + j) * self.replicas;
        &self.conductances[start..start + self.replicas]
    }

    /// `y_i = mean_k sum_j g_ijk (1 + eta) x_j`, with fresh read noise per
    /// device and the result delivered as single-precision values.
    pub fn analog_matvec(&self, x: &[f64], rng: &mut RandomSource) -> Result<Vec<f64>, PcmError> {
        if x.len() != self.cols {
            return Err(PcmError::Shape(format!(
                "vector of length {} for {} columns",
                x.len(),
                self.cols
            )));
        }
        let sigma = self.model.read_noise_sigma;
        let mut y = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let mut total = 0.0;
            for (j, &xj) in x.iter().enumerate() {
                for &g in self.devices(i, j) {
                    let read = if sigma == 0.0 {
                        g
                    } else {
                        g * (1.0 + sigma * rng.standard_normal())
                    };
                    total += read * xj;
                }
            }
            y.push((total / self.replicas as f64) as f32 as f64);
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTrial {
    pub beta: f64,
    pub gamma: f64,
    pub estimate: f64,
}

impl ScalarTrial {
    pub fn error(&self) -> f64 {
        self.estimate - self.beta * self.gamma
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExperimentResult {
    pub replicas: usize,
    pub trials: Vec<ScalarTrial>,
    pub mean: f64,
    /// Sample standard deviation of the errors.
    pub std_dev: f64,
}

impl ScalarExperimentResult {
    pub fn errors(&self) -> Vec<f64> {
        self.trials.iter().map(ScalarTrial::error).collect()
    }

    pub const CSV_HEADER: &'static str = "trial,K,beta,gamma,estimate,error";

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        self.write_csv_rows(w)
    }

    /// The data rows of [`write_csv`](Self::write_csv) without the header.
    pub fn write_csv_rows<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for (n, t) in self.trials.iter().enumerate() {
            writeln!(
                w,
                "{n},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.replicas,
                t.beta,
                t.gamma,
                t.estimate,
                t.error()
            )?;
        }
        Ok(())
    }
}

/// Multiplies uniform `beta, gamma` in `[0, 1]` on a freshly programmed
/// `1 x 1` array with `K` devices, `trials` times.
pub fn scalar_experiment(
    replicas: usize,
    trials: usize,
    model: PcmDeviceModel,
    rng: &mut RandomSource,
) -> Result<ScalarExperimentResult, PcmError> {
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let beta = rng.uniform();
        let gamma = rng.uniform();
        let array = PcmArray::program(&[beta], 1, 1, replicas, model, rng)?;
        let estimate = array.analog_matvec(&[gamma], rng)?[0];
        out.push(ScalarTrial {
            beta,
            gamma,
            estimate,
        });
    }
    let errors: Vec<f64> = out.iter().map(ScalarTrial::error).collect();
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(ScalarExperimentResult {
        replicas,
        trials: out,
        mean,
        std_dev: var.sqrt(),
    })
}

/// A signed matrix stored as a differential pair `scale * (G+ - G-)`.
#[derive(Debug, Clone)]
pub struct Crossbar {
    positive: PcmArray,
    negative: PcmArray,
    scale: f64,
}

impl Crossbar {
    pub fn program(
        a: &[f64],
        n_rows: usize,
        n_cols: usize,
        replicas: usize,
        model: PcmDeviceModel,
        rng: &mut RandomSource,
    ) -> Result<Crossbar, PcmError> {
        if a.len() != n_rows * n_cols {
            return Err(PcmError::Shape(format!(
                "{} entries for {n_rows}x{n_cols}",
                a.len()
            )));
        }
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let pos: Vec<f64> = a.iter().map(|&v| v.max(0.0) / scale).collect();
        let neg: Vec<f64> = a.iter().map(|&v| (-v).max(0.0) / scale).collect();
        Ok(Crossbar {
            positive: PcmArray::program(&pos, n_rows, n_cols, replicas, model, rng)?,
            negative: PcmArray::program(&neg, n_rows, n_cols, replicas, model, rng)?,
            scale,
        })
    }

    pub fn matvec(&self, x: &[f64], rng: &mut RandomSource) -> Result<Vec<f64>, PcmError> {
        let p = self.positive.analog_matvec(x, rng)?;
        let q = self.negative.analog_matvec(x, rng)?;
        Ok(p.iter()
            .zip(&q)
            .map(|(a, b)| self.scale * (a - b))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub replicas: usize,
    pub model: PcmDeviceModel,
    /// Target for `||b - A x|| / ||b||`.
    pub tolerance: f64,
    pub max_outer: usize,
    pub inner_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            replicas: 4,
            model: PcmDeviceModel::default(),
            tolerance: 1e-10,
            max_outer: 50,
            inner_iterations: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// The residual stopped decreasing; the best iterate is returned.
    Stagnated,
    MaxOuterReached,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OperationCounts {
    /// Signed (differential pair) analog products.
    pub analog_matvecs: usize,
    /// float64 operations in the outer loop.
    pub digital_flops: usize,
    pub residual_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub status: SolveStatus,
    pub outer_iterations: usize,
    /// Relative residual before the first and after every outer iteration.
    pub residual_history: Vec<f64>,
    pub counts: OperationCounts,
}

impl SolveResult {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,relative_residual")?;
        for (i, r) in self.residual_history.iter().enumerate() {
            writeln!(w, "{i},{r:.16e}")?;
        }
        Ok(())
    }
}

pub fn solve_count_operations(result: &SolveResult) -> OperationCounts {
    result.counts
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Iterative refinement around a crossbar-only Richardson inner solver.
#[derive(Debug, Clone)]
pub struct HybridSolver {
    n: usize,
    a: Vec<f64>,
    crossbar: Crossbar,
    step: f64,
    condition: f64,
    config: SolverConfig,
}

impl HybridSolver {
    /// Checks conditioning, picks the Richardson step, and programs the
    /// crossbar once.
    pub fn new(
        a: &[f64],
        n: usize,
        config: SolverConfig,
        rng: &mut RandomSource,
    ) -> Result<Self, PcmError> {
        if n == 0 || a.len() != n * n {
            return Err(PcmError::Shape(format!(
                "{} entries for an {n}x{n} system",
                a.len()
            )));
        }
        if config.inner_iterations == 0 || config.max_outer == 0 || config.replicas == 0 {
            return Err(PcmError::InvalidConfig(
                "K, inner_iterations and max_outer must be positive".into(),
            ));
        }
        if !(config.tolerance > 0.0) {
            return Err(PcmError::InvalidConfig(format!(
                "tolerance {}",
                config.tolerance
            )));
        }
        config.model.validate()?;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(PcmError::Shape("non-finite matrix entry".into()));
        }
        let m = DMatrix::from_row_slice(n, n, a);
        let sv = m.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        let condition = if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        };
        if !(condition < MAX_CONDITION) {
            return Err(PcmError::IllConditioned(condition));
        }
        let h = (&m + m.transpose()) * 0.5;
        let eig = h.symmetric_eigenvalues();
        let (lmin, lmax) = (eig.min(), eig.max());
        if lmin <= 0.0 {
            return Err(PcmError::NotPositiveDefinite);
        }
        // Symmetric: the optimal Richardson step. Otherwise a step that
        // contracts whenever the symmetric part is positive definite.
        let step = if m == m.transpose() {
            2.0 / (lmin + lmax)
        } else {
            lmin / (smax * smax)
        };
        let crossbar = Crossbar::program(a, n, n, config.replicas, config.model, rng)?;
        Ok(HybridSolver {
            n,
            a: a.to_vec(),
            crossbar,
            step,
            condition,
            config,
        })
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    /// `iterations` Richardson steps on `A d = r` from `d = 0`, using only
    /// crossbar products.
    fn richardson(
        &self,
        r: &[f64],
        iterations: usize,
        counts: &mut OperationCounts,
        rng: &mut RandomSource,
    ) -> Result<Vec<f64>, PcmError> {
        let mut d: Vec<f64> = r.iter().map(|v| self.step * v).collect();
        for _ in 1..iterations {
            let ad = self.crossbar.matvec(&d, rng)?;
            counts.analog_matvecs += 1;
            for ((di, &ri), &adi) in d.iter_mut().zip(r).zip(&ad) {
                *di += self.step * (ri - adi);
            }
        }
        Ok(d)
    }

    fn residual(&self, b: &[f64], x: &[f64], counts: &mut OperationCounts) -> Vec<f64> {
        counts.residual_evaluations += 1;
        counts.digital_flops += 2 * self.n * self.n;
        (0..self.n)
            .map(|i| {
                let row = &self.a[i * self.n..(i + 1) * self.n];
                b[i] - row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>()
            })
            .collect()
    }

    pub fn solve(&self, b: &[f64], rng: &mut RandomSource) -> Result<SolveResult, PcmError> {
        if b.len() != self.n {
            return Err(PcmError::Shape(format!(
                "right-hand side of length {}",
                b.len()
            )));
        }
        let n = self.n;
        let b_norm = norm(b);
        let mut counts = OperationCounts::default();
        let mut x = vec![0.0; n];
        if b_norm == 0.0 {
            return Ok(SolveResult {
                x,
                status: SolveStatus::Converged,
                outer_iterations: 0,
                residual_history: vec![0.0],
                counts,
            });
        }
        // x starts at zero, so the first residual is b itself.
        let mut r = b.to_vec();
        let mut history = vec![1.0];
        let mut status = SolveStatus::MaxOuterReached;
        let mut outer = 0;
        while outer < self.config.max_outer {
            if *history.last().unwrap() <= self.config.tolerance {
                status = SolveStatus::Converged;
                break;
            }
            outer += 1;
            let d = self.richardson(&r, self.config.inner_iterations, &mut counts, rng)?;
            let candidate: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
            counts.digital_flops += n;
            let r_new = self.residual(b, &candidate, &mut counts);
            let rel = norm(&r_new) / b_norm;
            counts.digital_flops += 2 * n;
            history.push(rel);
            if rel >= history[history.len() - 2] {
                status = SolveStatus::Stagnated;
                break;
            }
            x = candidate;
            r = r_new;
        }
        if status == SolveStatus::MaxOuterReached
            && *history.last().unwrap() <= self.config.tolerance
        {
            status = SolveStatus::Converged;
        }
        Ok(SolveResult {
            x,
            status,
            outer_iterations: outer,
            residual_history: history,
            counts,
        })
    }

    /// The crossbar-only answer: Richardson from zero with no digital
    /// correction.
    pub fn analog_only(
        &self,
        b: &[f64],
        iterations: usize,
        rng: &mut RandomSource,
    ) -> Result<Vec<f64>, PcmError> {
        if b.len() != self.n {
            return Err(PcmError::Shape(format!(
                "right-hand side of length {}",
                b.len()
            )));
        }
        self.richardson(b, iterations.max(1), &mut OperationCounts::default(), rng)
    }
}

/// Programs `a` and runs the refinement loop on `A x = b`.
pub fn mixed_precision_solve(
    a: &[f64],
    n: usize,
    b: &[f64],
    config: SolverConfig,
    rng: &mut RandomSource,
) -> Result<SolveResult, PcmError> {
    HybridSolver::new(a, n, config, rng)?.solve(b, rng)
}

/// `Q diag(lambda) Q^T` for a random orthogonal `Q`; the first half of the
/// spectrum is `low`, the rest `high`. Exactly symmetric.
pub fn spd_test_matrix(n: usize, low: f64, high: f64, rng: &mut RandomSource) -> Vec<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
    let q = g.qr().q();
    let d = DMatrix::from_fn(n, n, |i, j| match (i == j, i < n / 2) {
        (false, _) => 0.0,
        (true, true) => low,
        (true, false) => high,
    });
    let a = &q * d * q.transpose();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    out
}
