//! Crossbar experiments driven by a config file.

use std::io::Write;

use mixprec_core::pcm::{
    self, HybridSolver, PcmDeviceModel, SolveResult, SolveStatus, SolverConfig,
};
use mixprec_core::RandomSource;

use crate::config::Config;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    /// One or more replica counts, 1x1 multiplications each.
    Scalar { replicas: Vec<usize>, trials: usize },
    Solve {
        n: usize,
        low_eigenvalue: f64,
        high_eigenvalue: f64,
        analog_iterations: usize,
        solver: SolverConfig,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcmSpec {
    pub experiment: Experiment,
    pub model: PcmDeviceModel,
    pub seed: u64,
}

impl PcmSpec {
    pub fn from_config(mut c: Config) -> Result<PcmSpec, CliError> {
        let d = PcmDeviceModel::default();
        let model = PcmDeviceModel {
            write_noise_sigma: c.take_or("write_sigma", d.write_noise_sigma)?,
            read_noise_sigma: c.take_or("read_sigma", d.read_noise_sigma)?,
            conductance_range: (
                c.take_or("g_min", d.conductance_range.0)?,
                c.take_or("g_max", d.conductance_range.1)?,
            ),
        };
        model
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let kind: String = c.take_or("experiment", "scalar".to_string())?;
        let experiment = match kind.as_str() {
            "scalar" => {
                let replicas = c.take_list("K")?.unwrap_or_else(|| vec![4]);
                if replicas.is_empty() || replicas.contains(&0) {
                    return Err(CliError::Usage("K values must be positive".into()));
                }
                Experiment::Scalar {
                    replicas,
                    trials: c.take_or("trials", 1024)?,
                }
            }
            "solve" => {
                let s = SolverConfig::default();
                let k: Vec<usize> = c.take_list("K")?.unwrap_or_else(|| vec![s.replicas]);
                if k.len() != 1 {
                    return Err(CliError::Usage("the solver takes a single K".into()));
                }
                Experiment::Solve {
                    n: c.take_or("n", 100)?,
                    low_eigenvalue: c.take_or("low_eigenvalue", 1.0)?,
                    high_eigenvalue: c.take_or("high_eigenvalue", 4.0)?,
                    analog_iterations: c.take_or("analog_iterations", 100)?,
                    solver: SolverConfig {
                        replicas: k[0],
                        model,
                        tolerance: c.take_or("tol", s.tolerance)?,
                        max_outer: c.take_or("max_outer", s.max_outer)?,
                        inner_iterations: c.take_or("inner_iterations", s.inner_iterations)?,
                    },
                }
            }
            other => return Err(CliError::Usage(format!("unknown experiment {other:?}"))),
        };
        let seed = c.take_or("seed", 0)?;
        c.finish()?;
        Ok(PcmSpec {
            experiment,
            model,
            seed,
        })
    }

    /// Writes the CSV to `out` and a short summary to `log`.
    pub fn run(
        &self,
        out: &mut dyn Write,
        log: &mut dyn Write,
    ) -> Result<Option<SolveResult>, CliError> {
        let mut rng = RandomSource::new(self.seed);
        match &self.experiment {
            Experiment::Scalar { replicas, trials } => {
                writeln!(out, "{}", pcm::ScalarExperimentResult::CSV_HEADER)?;
                for &k in replicas {
                    let r = pcm::scalar_experiment(k, *trials, self.model, &mut rng)
                        .map_err(|e| CliError::Usage(e.to_string()))?;
                    r.write_csv_rows(&mut *out)?;
                    writeln!(
                        log,
                        "K={k} trials={trials} mean={:.6e} std={:.6e}",
                        r.mean, r.std_dev
                    )?;
                }
                Ok(None)
            }
            Experiment::Solve {
                n,
                low_eigenvalue,
                high_eigenvalue,
                analog_iterations,
                solver,
            } => {
                let a = pcm::spd_test_matrix(*n, *low_eigenvalue, *high_eigenvalue, &mut rng);
                let b: Vec<f64> = (0..*n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
                let s = HybridSolver::new(&a, *n, *solver, &mut rng)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                let result = s
                    .solve(&b, &mut rng)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                result.write_csv(&mut *out)?;
                let analog = s
                    .analog_only(&b, *analog_iterations, &mut rng)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                let diff = analog
                    .iter()
                    .zip(&result.x)
                    .map(|(p, q)| (p - q).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let size = result.x.iter().map(|q| q * q).sum::<f64>().sqrt();
                let c = result.counts;
                writeln!(
                    log,
                    "status={:?} outer={} residual={:.3e} analog_matvecs={} digital_flops={} analog_only_error={:.3e}",
                    result.status,
                    result.outer_iterations,
                    result.final_residual(),
                    c.analog_matvecs,
                    c.digital_flops,
                    diff / size.max(f64::MIN_POSITIVE)
                )?;
                Ok(Some(result))
            }
        }
    }
}

/// Maps a finished solve to the CLI outcome.
pub fn check_status(result: &SolveResult) -> Result<(), CliError> {
    match result.status {
        SolveStatus::Converged => Ok(()),
        other => Err(CliError::Stagnation(format!(
            "{other:?} after {} outer iterations, relative residual {:.3e}",
            result.outer_iterations,
            result.final_residual()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(text: &str) -> Result<PcmSpec, CliError> {
        PcmSpec::from_config(Config::parse(text).unwrap())
    }

    #[test]
    fn zero_noise_scalar_run_has_zero_errors() {
        let s = spec("write_sigma=0\nread_sigma=0\ntrials=50\n").unwrap();
        let (mut out, mut log) = (Vec::new(), Vec::new());
        s.run(&mut out, &mut log).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("trial,K,beta,gamma,estimate,error"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 50);
        for row in rows {
            let err: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
            assert!(err.abs() < 1e-7);
        }
    }

    #[test]
    fn sweep_emits_all_replica_counts() {
        let s = spec("K=1,4,16\ntrials=10\n").unwrap();
        let (mut out, mut log) = (Vec::new(), Vec::new());
        s.run(&mut out, &mut log).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 31);
        assert_eq!(String::from_utf8(log).unwrap().lines().count(), 3);
    }

    #[test]
    fn small_solve_converges() {
        let s = spec("experiment=solve\nn=20\nseed=3\n").unwrap();
        let (mut out, mut log) = (Vec::new(), Vec::new());
        let r = s.run(&mut out, &mut log).unwrap().unwrap();
        check_status(&r).unwrap();
        assert!(String::from_utf8(out)
            .unwrap()
            .starts_with("iteration,relative_residual\n0,1.0"));
    }

    #[test]
    fn exhausted_budget_is_stagnation() {
        let s = spec("experiment=solve\nn=20\nmax_outer=1\n").unwrap();
        let r = s.run(&mut Vec::new(), &mut Vec::new()).unwrap().unwrap();
        assert!(matches!(check_status(&r), Err(CliError::Stagnation(_))));
    }

    #[test]
    fn bad_configs() {
        for text in [
            "experiment=fft",
            "K=0",
            "experiment=solve\nK=1,4",
            "read_sigma=-1",
            "g_min=2\ng_max=1",
            "bogus=1",
        ] {
            assert!(matches!(spec(text), Err(CliError::Usage(_))), "{text}");
        }
    }
}
