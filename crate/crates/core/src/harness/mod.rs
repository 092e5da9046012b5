//! Batch experiments: many independent trials, aggregated per shot count.
//!
//! Each trial draws its true state, its measurement noise and its estimator
//! randomness from three streams derived from the master seed and the trial
//! index. Trials run on a worker pool and are reduced in trial order, so the
//! output does not depend on the number of workers.

pub mod config;
pub mod table;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adaptive::{run_adaptive, run_static, IterationRecord, RunFailure};
use crate::backend::{
    load_record, MeasurementBackend, NoiseModel, OutcomeCounts, SimulatedBackend,
};
use crate::bloch::{random_state, BlochVector, StateKind};
use crate::error::{QstError, Result};
use crate::sgqt::{run_sgqt, SgqtConfig};

pub use config::{BackendSpec, Ensemble, ExperimentSpec, Method};
pub use table::{compare, summarize, AggregateRow, Comparison, TrialRow};

/// Environment variable holding the worker count. Unset or 0 means one
/// worker per core.
pub const WORKERS_ENV: &str = "AQST_WORKERS";

/// Largest tolerated fraction of failed trials.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Random streams owned by a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    State = 0,
    Backend = 1,
    Estimator = 2,
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one stream of one trial. For a fixed master seed the map is
/// injective: the index `3·trial + stream` is scaled by an odd constant and
/// passed through the splitmix finalizer, both bijections on `u64`.
pub fn sub_seed(master: u64, trial: usize, stream: Stream) -> u64 {
    let index = (trial as u64)
        .wrapping_mul(3)
        .wrapping_add(stream as u64 + 1);
    splitmix64(master.wrapping_add(index.wrapping_mul(GOLDEN)))
}

pub fn worker_count_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    /// Known for simulated backends and for replay with a fixed ensemble.
    pub truth: Option<BlochVector>,
    pub records: Vec<IterationRecord>,
    /// Counts served to the estimator, in order.
    pub log: Vec<OutcomeCounts>,
}

#[derive(Debug, Clone)]
pub struct TrialError {
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialError>,
    pub aggregate: Vec<AggregateRow>,
}

impl ExperimentResult {
    pub fn trial_rows(&self, spec: &ExperimentSpec) -> Vec<TrialRow> {
        trial_rows(&self.trials, spec)
    }
}

pub fn trial_rows(trials: &[TrialResult], spec: &ExperimentSpec) -> Vec<TrialRow> {
    let rnd = |x: Option<f64>| x.map(table::round_sig10).unwrap_or(f64::NAN);
    trials
        .iter()
        .flat_map(|t| {
            t.records.iter().map(move |r| TrialRow {
                trial: t.trial,
                iteration: r.iteration,
                shots: r.shots,
                infidelity: rnd(r.infidelity),
                credible_volume: rnd(r.credible_volume),
                ess: rnd(r.ess),
                resampled: r.resampled,
                estimate: [
                    table::round_sig10(r.estimate.x()),
                    table::round_sig10(r.estimate.y()),
                    table::round_sig10(r.estimate.z()),
                ],
                method: spec.method.to_string(),
                ensemble: spec.ensemble.label().to_string(),
            })
        })
        .collect()
}

fn draw_truth(spec: &ExperimentSpec, trial: usize) -> BlochVector {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(spec.run.seed, trial, Stream::State));
    match spec.ensemble {
        Ensemble::Pure => random_state(StateKind::Pure, &mut rng),
        Ensemble::Mixed => random_state(StateKind::Mixed, &mut rng),
        Ensemble::Fixed(r) => r,
    }
}

/// Runs one trial. Infidelity is scored against the prepared state, before
/// any noise channel.
pub fn run_trial(
    spec: &ExperimentSpec,
    trial: usize,
) -> std::result::Result<TrialResult, RunFailure> {
    let early = |source| RunFailure {
        records: Vec::new(),
        source,
    };
    let (mut backend, truth): (Box<dyn MeasurementBackend>, Option<BlochVector>) = match &spec
        .backend
    {
        BackendSpec::Replay(path) => {
            let truth = match spec.ensemble {
                Ensemble::Fixed(r) => Some(r),
                _ => None,
            };
            (Box::new(load_record(path).map_err(early)?), truth)
        }
        kind => {
            let truth = draw_truth(spec, trial);
            let noise = match kind {
                BackendSpec::Depolarizing(l) => NoiseModel::Depolarizing(*l),
                _ => NoiseModel::Ideal,
            };
            let rng = ChaCha8Rng::seed_from_u64(sub_seed(spec.run.seed, trial, Stream::Backend));
            (
                Box::new(SimulatedBackend::new(truth, noise, rng).map_err(early)?),
                Some(truth),
            )
        }
    };
    let seed = sub_seed(spec.run.seed, trial, Stream::Estimator);
    let records = match spec.method {
        Method::Adaptive | Method::Static => {
            let config = crate::adaptive::RunConfig {
                seed,
                ..spec.run.clone()
            };
            if spec.method == Method::Adaptive {
                run_adaptive(&config, backend.as_mut(), truth.as_ref())?
            } else {
                run_static(&config, backend.as_mut(), truth.as_ref())?
            }
        }
        Method::Sgqt => {
            let config = SgqtConfig {
                seed,
                ..spec.sgqt.clone()
            };
            run_sgqt(&config, backend.as_mut(), truth.as_ref())?
        }
    };
    Ok(TrialResult {
        trial,
        truth,
        records,
        log: backend.log().to_vec(),
    })
}

/// [`run_experiment_on`] with the worker count from [`WORKERS_ENV`].
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_experiment_on(spec, worker_count_from_env())
}

/// Runs every trial on `workers` threads (0 for one per core) and
/// aggregates the successful ones. Failed trials are dropped with a warning;
/// more than 10% failures is an error.
pub fn run_experiment_on(spec: &ExperimentSpec, workers: usize) -> Result<ExperimentResult> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| QstError::InvalidArgument(format!("worker pool: {e}")))?;
    let outcomes: Vec<_> = pool.install(|| {
        (0..spec.trials)
            .into_par_iter()
            .map(|i| run_trial(spec, i))
            .collect()
    });

    let mut trials = Vec::with_capacity(spec.trials);
    let mut failures = Vec::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(t) => trials.push(t),
            Err(e) => {
                log::warn!(
                    "trial {i} failed after {} records: {}",
                    e.records.len(),
                    e.source
                );
                failures.push(TrialError {
                    trial: i,
                    message: e.source.to_string(),
                });
            }
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * spec.trials as f64 || trials.is_empty() {
        return Err(QstError::TooManyFailures {
            failed: failures.len(),
            total: spec.trials,
        });
    }
    let aggregate = summarize(&trial_rows(&trials, spec))?;
    Ok(ExperimentResult {
        trials,
        failures,
        aggregate,
    })
}

/// `foo.csv` → `foo.trials.csv`.
pub fn trials_path(out: &Path) -> PathBuf {
    out.with_extension("trials.csv")
}

/// Writes the aggregate CSV to `out` and the per-trial CSV next to it.
pub fn write_outputs(result: &ExperimentResult, spec: &ExperimentSpec, out: &Path) -> Result<()> {
    std::fs::write(out, table::format_aggregate(&result.aggregate))?;
    std::fs::write(
        trials_path(out),
        table::format_trials(&result.trial_rows(spec)),
    )?;
    Ok(())
}
