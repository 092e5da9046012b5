//! Weighted-particle posterior over the Bloch ball.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::backend::OutcomeCounts;
use crate::bloch::{plus_probability, BlochVector};
use crate::error::{QstError, Result};

/// Tolerance on `Σ w_k = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub location: BlochVector,
    pub weight: f64,
}

/// Posterior approximation `Pr(r) ≈ Σ_k w_k δ(r − r_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    particles: Vec<Particle>,
    iteration: u64,
}

impl ParticleCloud {
    /// Cloud with uniform weights `1/K`.
    pub fn uniform(locations: Vec<BlochVector>) -> Result<Self> {
        if locations.is_empty() {
            return Err(QstError::InvalidArgument(
                "a cloud needs at least one particle".into(),
            ));
        }
        let w = 1.0 / locations.len() as f64;
        Ok(ParticleCloud {
            particles: locations
                .into_iter()
                .map(|location| Particle {
                    location,
                    weight: w,
                })
                .collect(),
            iteration: 0,
        })
    }

    /// Cloud from explicit weights; they are normalized here.
    pub fn weighted(particles: Vec<Particle>) -> Result<Self> {
        if particles.is_empty() {
            return Err(QstError::InvalidArgument(
                "a cloud needs at least one particle".into(),
            ));
        }
        if particles
            .iter()
            .any(|p| !(p.weight >= 0.0) || !p.weight.is_finite())
        {
            return Err(QstError::InvalidArgument(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = particles.iter().map(|p| p.weight).sum();
        if total <= 0.0 {
            return Err(QstError::InvalidArgument("weights sum to zero".into()));
        }
        Ok(ParticleCloud {
            particles: particles
                .into_iter()
                .map(|p| Particle {
                    location: p.location,
                    weight: p.weight / total,
                })
                .collect(),
            iteration: 0,
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub(crate) fn set_iteration(&mut self, iteration: u64) {
        self.iteration = iteration;
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.weight)
    }

    pub fn update(&mut self, counts: &OutcomeCounts) -> Result<()> {
        let log_l: Vec<f64> = self
            .particles
            .iter()
            .map(|p| log_likelihood(&p.location, counts))
            .collect();
        self.reweight(&log_l)
    }

    /// Multiplies each weight by `exp(log_l[k])` and renormalizes, shifting by
    /// the largest log-weight first so nothing underflows.
    pub fn reweight(&mut self, log_l: &[f64]) -> Result<()> {
        assert_eq!(log_l.len(), self.particles.len());
        let log_w: Vec<f64> = self
            .particles
            .iter()
            .zip(log_l)
            .map(|(p, l)| p.weight.ln() + l)
            .collect();
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY || max.is_nan() {
            return Err(QstError::DegeneratePosterior);
        }
        let shifted: Vec<f64> = log_w.iter().map(|lw| (lw - max).exp()).collect();
        let total: f64 = shifted.iter().sum();
        for (p, w) in self.particles.iter_mut().zip(shifted) {
            p.weight = w / total;
        }
        self.iteration += 1;
        Ok(())
    }

    pub fn effective_sample_size(&self) -> f64 {
        effective_sample_size(self)
    }

    pub fn mean(&self) -> BlochVector {
        bme(self)
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        weighted_covariance(self)
    }
}

/// Log-likelihood of a tally at a candidate state, dropping the multinomial
/// coefficient (it is the same for every particle).
pub fn log_likelihood(r: &BlochVector, counts: &OutcomeCounts) -> f64 {
    let p = plus_probability(r, counts.axis());
    xlogy(counts.n_plus() as f64, p) + xlogy(counts.n_minus() as f64, 1.0 - p)
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Bayes rule on a copy of the cloud; locations are untouched.
pub fn bayes_update(cloud: &ParticleCloud, counts: &OutcomeCounts) -> Result<ParticleCloud> {
    let mut next = cloud.clone();
    next.update(counts)?;
    Ok(next)
}

/// `1 / Σ w_k²`.
pub fn effective_sample_size(cloud: &ParticleCloud) -> f64 {
    let sum_sq: f64 = cloud.particles.iter().map(|p| p.weight * p.weight).sum();
    (1.0 / sum_sq).clamp(1.0, cloud.len() as f64)
}

/// Bayesian mean estimate `Σ_k w_k r_k`.
pub fn bme(cloud: &ParticleCloud) -> BlochVector {
    let mean = weighted_mean(cloud);
    // convex combination, so only rounding can push it past the sphere
    BlochVector::project(mean)
}

fn weighted_mean(cloud: &ParticleCloud) -> Vector3<f64> {
    cloud.particles.iter().fold(Vector3::zeros(), |acc, p| {
        acc + p.location.vector() * p.weight
    })
}

pub fn weighted_covariance(cloud: &ParticleCloud) -> Matrix3<f64> {
    let mean = weighted_mean(cloud);
    let mut cov = Matrix3::zeros();
    for p in &cloud.particles {
        let d = p.location.vector() - mean;
        cov += d * d.transpose() * p.weight;
    }
    (cov + cov.transpose()) * 0.5
}

/// Volume of `{x : (x − μ)ᵀ Σ⁻¹ (x − μ) ≤ s}`, i.e. `(4π/3)·s^{3/2}·sqrt(det Σ)`.
pub fn credible_volume(cov: &Matrix3<f64>, s: f64) -> f64 {
    let det = cov.determinant().max(0.0);
    4.0 * PI / 3.0 * s.powf(1.5) * det.sqrt()
}
