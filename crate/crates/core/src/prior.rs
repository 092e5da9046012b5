//! Empirical Gaussian prior from an initial round of Pauli measurements.
//!
//! `N₀` shots on each of σx, σy, σz give the mean `r̂_j = (n⁺ − n⁻)/N₀` and
//! the standard error of each component as a diagonal covariance. The
//! constant `ε` keeps the covariance nonsingular when a component saturates
//! at ±1.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::backend::{OutcomeCounts, AXIS_MATCH_TOL};
use crate::bloch::BlochVector;
use crate::error::{QstError, Result};
use crate::filter::{credible_volume, ParticleCloud};
use crate::resample::BallSampler;

/// Default variance floor `ε`.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// 99% quantile of χ² with 3 degrees of freedom.
pub const CHI2_3DOF_99: f64 = 11.345;

/// χ²₃ quantile for an arbitrary credible level in `(0, 1)`.
pub fn chi2_quantile_3dof(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(QstError::InvalidArgument(format!(
            "credible level {level} outside (0, 1)"
        )));
    }
    let chi2 = ChiSquared::new(3.0).expect("3 degrees of freedom is valid");
    Ok(chi2.inverse_cdf(level))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    raw_mean: Vector3<f64>,
    mean: BlochVector,
    cov: Matrix3<f64>,
    epsilon: f64,
    shots_per_axis: u64,
}

impl GaussianPrior {
    /// Prior with an explicit mean and diagonal variances. `variances` must
    /// already include the floor, so each entry has to be at least `epsilon`.
    pub fn new(
        mean: BlochVector,
        variances: Vector3<f64>,
        epsilon: f64,
        shots_per_axis: u64,
    ) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(QstError::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if variances.iter().any(|&v| !(v >= epsilon) || !v.is_finite()) {
            return Err(QstError::InvalidArgument(format!(
                "prior variances {variances:?} must be finite and at least epsilon"
            )));
        }
        Ok(GaussianPrior {
            raw_mean: *mean.vector(),
            mean,
            cov: Matrix3::from_diagonal(&variances),
            epsilon,
            shots_per_axis,
        })
    }

    /// Mean projected into the Bloch ball; used for sampling.
    pub fn mean(&self) -> &BlochVector {
        &self.mean
    }

    /// Mean before projection, possibly outside the ball.
    pub fn raw_mean(&self) -> &Vector3<f64> {
        &self.raw_mean
    }

    pub fn covariance(&self) -> &Matrix3<f64> {
        &self.cov
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn shots_per_axis(&self) -> u64 {
        self.shots_per_axis
    }

    /// Credible ellipsoid around the raw (unprojected) estimate.
    pub fn ellipsoid(&self, s: f64) -> CredibleEllipsoid {
        CredibleEllipsoid {
            center: self.raw_mean,
            cov: self.cov,
            s,
        }
    }
}

/// `{x : (x − c)ᵀ Σ⁻¹ (x − c) ≤ s}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CredibleEllipsoid {
    pub center: Vector3<f64>,
    pub cov: Matrix3<f64>,
    pub s: f64,
}

impl CredibleEllipsoid {
    pub fn contains(&self, point: &Vector3<f64>) -> bool {
        let d = point - self.center;
        match self.cov.try_inverse() {
            Some(inv) => (d.transpose() * inv * d)[(0, 0)] <= self.s,
            None => false,
        }
    }

    pub fn volume(&self) -> f64 {
        credible_volume(&self.cov, self.s)
    }

    pub fn diameters(&self) -> Vector3<f64> {
        ellipsoid_diameters(&self.cov, self.s)
    }
}

fn check_pauli(counts: &OutcomeCounts, axis: Vector3<f64>, name: &str) -> Result<()> {
    if (counts.axis() - axis).amax() > AXIS_MATCH_TOL {
        return Err(QstError::InvalidArgument(format!(
            "{name} counts were not measured along the Pauli {name} axis"
        )));
    }
    Ok(())
}

/// Builds the prior from one tally per Pauli axis, all with the same `N₀ ≥ 2`.
pub fn build_prior(
    x: &OutcomeCounts,
    y: &OutcomeCounts,
    z: &OutcomeCounts,
    epsilon: f64,
) -> Result<GaussianPrior> {
    check_pauli(x, Vector3::x(), "x")?;
    check_pauli(y, Vector3::y(), "y")?;
    check_pauli(z, Vector3::z(), "z")?;
    let shots = x.shots();
    if y.shots() != shots || z.shots() != shots {
        return Err(QstError::InvalidArgument(
            "prior counts must share the same shots per axis".into(),
        ));
    }
    if shots < 2 {
        return Err(QstError::InvalidArgument(format!(
            "prior needs at least 2 shots per axis, got {shots}"
        )));
    }
    let n0 = shots as f64;
    let mut raw = Vector3::zeros();
    let mut var = Vector3::zeros();
    for (j, c) in [x, y, z].into_iter().enumerate() {
        let (plus, minus) = (c.n_plus() as f64, c.n_minus() as f64);
        let r = (plus - minus) / n0;
        raw[j] = r;
        var[j] =
            (plus * (1.0 - r).powi(2) + minus * (-1.0 - r).powi(2)) / (n0 * (n0 - 1.0)) + epsilon;
    }
    let mut prior = GaussianPrior::new(BlochVector::project(raw), var, epsilon, shots)?;
    prior.raw_mean = raw;
    Ok(prior)
}

/// Per-axis diameters `2·sqrt(s·Σ_ii)`.
pub fn ellipsoid_diameters(cov: &Matrix3<f64>, s: f64) -> Vector3<f64> {
    Vector3::from_fn(|i, _| 2.0 * (s * cov[(i, i)].max(0.0)).sqrt())
}

pub fn ellipsoid_diameter(prior: &GaussianPrior, s: f64) -> Vector3<f64> {
    ellipsoid_diameters(&prior.cov, s)
}

/// `K` equally weighted particles from the prior, kept inside the ball with
/// the same per-axis truncated sampler the resampler uses.
pub fn sample_prior_cloud<R: Rng + ?Sized>(
    prior: &GaussianPrior,
    k: usize,
    rng: &mut R,
) -> Result<ParticleCloud> {
    if k == 0 {
        return Err(QstError::InvalidArgument(
            "need at least one particle".into(),
        ));
    }
    let sampler = BallSampler::new(&prior.cov);
    let center = *prior.mean.vector();
    ParticleCloud::uniform((0..k).map(|_| sampler.sample(&center, rng)).collect())
}
