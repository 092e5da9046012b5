//! The tomography loop.
//!
//! Iteration 0 measures the three Pauli axes, builds the Gaussian prior and
//! samples the particle cloud from it. Every later iteration measures in the
//! current triad, absorbs each axis batch into the posterior, resamples if
//! the effective sample size dropped below the threshold, and re-estimates.
//! The adaptive schedule then turns the triad so its third axis points
//! along the new estimate, i.e. one operator diagonalizes `ρ̂`; the static
//! schedule keeps the Pauli triad throughout.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::backend::MeasurementBackend;
use crate::bloch::{bloch_fidelity, bloch_infidelity, BlochVector};
use crate::error::{QstError, Result};
use crate::filter::{credible_volume, ParticleCloud};
use crate::prior::{build_prior, sample_prior_cloud, CHI2_3DOF_99, DEFAULT_EPSILON};
use crate::resample::{liu_west_resample, ResampleParams};

/// Estimates shorter than this keep the previous triad.
pub const DEGENERATE_ESTIMATE_NORM: f64 = 1e-6;

/// Orthonormal, right-handed measurement frame. Column `i` is the axis of
/// the `i`-th operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementTriad(Matrix3<f64>);

impl MeasurementTriad {
    pub fn pauli() -> Self {
        MeasurementTriad(Matrix3::identity())
    }

    /// Accepts a rotation matrix, checked to 1e-9.
    pub fn from_rotation(m: Matrix3<f64>) -> Result<Self> {
        let ortho = (m.transpose() * m - Matrix3::identity()).amax();
        let det = m.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(QstError::InvalidArgument(format!(
                "not a rotation: ‖RᵀR − I‖∞ = {ortho}, det = {det}"
            )));
        }
        Ok(MeasurementTriad(m))
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn axis(&self, i: usize) -> Vector3<f64> {
        self.0.column(i).into_owned()
    }

    /// The operator aligned with the estimate.
    pub fn diagonal_axis(&self) -> Vector3<f64> {
        self.axis(2)
    }
}

impl Default for MeasurementTriad {
    fn default() -> Self {
        Self::pauli()
    }
}

/// Triad whose third axis is `r/‖r‖`. The first axis comes from the canonical
/// basis vector least aligned with `r` (lowest index on ties), made
/// orthogonal; the second is `u × e₁`.
pub fn triad_from_estimate(r: &BlochVector, previous: &MeasurementTriad) -> MeasurementTriad {
    let norm = r.norm();
    if norm < DEGENERATE_ESTIMATE_NORM {
        return *previous;
    }
    let u = r.vector() / norm;
    let mut pick = 0;
    for i in 1..3 {
        if u[i].abs() < u[pick].abs() {
            pick = i;
        }
    }
    let e = Vector3::ith(pick, 1.0);
    let e1 = (e - u * u.dot(&e)).normalize();
    let e2 = u.cross(&e1);
    MeasurementTriad(Matrix3::from_columns(&[e1, e2, u]))
}

/// Which triad axes are measured in each post-prior iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// `N₀` shots on each of the three axes.
    #[default]
    AllThreeAxes,
    /// `N₀` shots on the diagonalizing axis only.
    DiagonalOnly,
}

impl Schedule {
    pub fn axes(&self) -> &'static [usize] {
        match self {
            Schedule::AllThreeAxes => &[0, 1, 2],
            Schedule::DiagonalOnly => &[2],
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::AllThreeAxes => "all-three",
            Schedule::DiagonalOnly => "diagonal-only",
        })
    }
}

impl std::str::FromStr for Schedule {
    type Err = QstError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-three" | "all-three-axes" => Ok(Schedule::AllThreeAxes),
            "diagonal-only" | "diagonal" => Ok(Schedule::DiagonalOnly),
            other => Err(QstError::InvalidArgument(format!(
                "unknown schedule {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Number of particles `K`.
    pub particles: usize,
    /// Shots per measured axis per iteration, `N₀`.
    pub shots_per_axis: u64,
    /// Iterations including the prior stage.
    pub iterations: usize,
    pub resample: ResampleParams,
    /// Resample when ESS < fraction · K.
    pub ess_threshold: f64,
    pub schedule: Schedule,
    pub epsilon: f64,
    /// χ²₃ quantile of the credible region.
    pub credible_s: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            particles: 1000,
            shots_per_axis: 50,
            iterations: 60,
            resample: ResampleParams::default(),
            ess_threshold: 0.5,
            schedule: Schedule::AllThreeAxes,
            epsilon: DEFAULT_EPSILON,
            credible_s: CHI2_3DOF_99,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(QstError::InvalidArgument(m));
        if self.particles < 2 {
            return bad(format!("need at least 2 particles, got {}", self.particles));
        }
        if self.shots_per_axis < 1 {
            return bad("shots per axis must be at least 1".into());
        }
        if self.iterations < 1 {
            return bad("need at least 1 iteration".into());
        }
        if !(0.0..=1.0).contains(&self.ess_threshold) {
            return bad(format!(
                "ESS threshold {} outside [0, 1]",
                self.ess_threshold
            ));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.credible_s > 0.0) {
            return bad(format!(
                "credible quantile must be positive, got {}",
                self.credible_s
            ));
        }
        Ok(())
    }

    /// Shots consumed by one post-prior iteration.
    pub fn shots_per_iteration(&self) -> u64 {
        self.shots_per_axis * self.schedule.axes().len() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub triad: MeasurementTriad,
    /// Cumulative shots consumed up to and including this iteration.
    pub shots: u64,
    pub estimate: BlochVector,
    /// Present when the true state is known.
    pub infidelity: Option<f64>,
    /// Credible-region volume of the posterior; absent for point estimators.
    pub credible_volume: Option<f64>,
    pub ess: Option<f64>,
    pub resampled: bool,
}

/// A run that stopped early. Records up to the failure are kept.
#[derive(Debug, Error)]
#[error("run aborted after {} iterations: {source}", records.len())]
pub struct RunFailure {
    pub records: Vec<IterationRecord>,
    #[source]
    pub source: QstError,
}

impl RunFailure {
    fn new(records: Vec<IterationRecord>, source: QstError) -> Self {
        RunFailure { records, source }
    }
}

pub(crate) fn score(estimate: &BlochVector, truth: Option<&BlochVector>) -> Option<f64> {
    truth.map(|t| {
        let infid = bloch_infidelity(t, estimate);
        log::debug!(
            "infidelity 1-sqrt(F) = {infid:.6e}, 1-F = {:.6e}",
            1.0 - bloch_fidelity(t, estimate)
        );
        infid
    })
}

/// Adaptive schedule: the triad follows the running estimate.
pub fn run_adaptive(
    config: &RunConfig,
    backend: &mut dyn MeasurementBackend,
    truth: Option<&BlochVector>,
) -> std::result::Result<Vec<IterationRecord>, RunFailure> {
    run(config, backend, truth, true)
}

/// Same pipeline with the Pauli triad held fixed.
pub fn run_static(
    config: &RunConfig,
    backend: &mut dyn MeasurementBackend,
    truth: Option<&BlochVector>,
) -> std::result::Result<Vec<IterationRecord>, RunFailure> {
    run(config, backend, truth, false)
}

fn run(
    config: &RunConfig,
    backend: &mut dyn MeasurementBackend,
    truth: Option<&BlochVector>,
    adaptive: bool,
) -> std::result::Result<Vec<IterationRecord>, RunFailure> {
    let mut records = Vec::with_capacity(config.iterations);
    if let Err(e) = config.validate() {
        return Err(RunFailure::new(records, e));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n0 = config.shots_per_axis;

    let mut prior_stage = || -> Result<ParticleCloud> {
        let x = backend.measure(&Vector3::x(), n0)?;
        let y = backend.measure(&Vector3::y(), n0)?;
        let z = backend.measure(&Vector3::z(), n0)?;
        let prior = build_prior(&x, &y, &z, config.epsilon)?;
        sample_prior_cloud(&prior, config.particles, &mut rng)
    };
    let mut cloud = match prior_stage() {
        Ok(c) => c,
        Err(e) => return Err(RunFailure::new(records, e)),
    };

    let mut triad = MeasurementTriad::pauli();
    let mut shots = 3 * n0;
    let mut estimate = cloud.mean();
    records.push(IterationRecord {
        iteration: 0,
        triad,
        shots,
        estimate,
        infidelity: score(&estimate, truth),
        credible_volume: Some(credible_volume(&cloud.covariance(), config.credible_s)),
        ess: Some(cloud.effective_sample_size()),
        resampled: false,
    });

    for iteration in 1..config.iterations {
        if adaptive {
            triad = triad_from_estimate(&estimate, &triad);
        }
        for &i in config.schedule.axes() {
            let step = backend
                .measure(&triad.axis(i), n0)
                .and_then(|counts| cloud.update(&counts));
            if let Err(e) = step {
                return Err(RunFailure::new(records, e));
            }
            shots += n0;
        }
        let ess = cloud.effective_sample_size();
        let resampled = ess < config.ess_threshold * cloud.len() as f64;
        if resampled {
            cloud = match liu_west_resample(&cloud, config.resample, &mut rng) {
                Ok(c) => c,
                Err(e) => return Err(RunFailure::new(records, e)),
            };
        }
        estimate = cloud.mean();
        records.push(IterationRecord {
            iteration,
            triad,
            shots,
            estimate,
            infidelity: score(&estimate, truth),
            credible_volume: Some(credible_volume(&cloud.covariance(), config.credible_s)),
            ess: Some(ess),
            resampled,
        });
    }
    Ok(records)
}
