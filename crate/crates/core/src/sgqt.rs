//! Self-guided tomography baseline.
//!
//! A pure-state candidate `(θ, φ)` climbs the measured fidelity with SPSA:
//! both coordinates are perturbed at once by `±c_k·Δ` (Rademacher `Δ`), the
//! fidelity is estimated at the two perturbed candidates by measuring along
//! their Bloch axes, and the finite difference drives a step of size `a_k`.
//! The candidate is always pure, so mixed targets are out of its reach.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptive::{score, IterationRecord, MeasurementTriad, RunFailure};
use crate::backend::MeasurementBackend;
use crate::bloch::{random_direction, BlochVector};
use crate::error::{QstError, Result};

/// Spherical angles of a pure state, `θ ∈ [0, π]`, `φ ∈ [0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureStateParams {
    theta: f64,
    phi: f64,
}

impl PureStateParams {
    /// Any real angles; they are folded back into range through the Bloch
    /// vector they describe.
    pub fn new(theta: f64, phi: f64) -> Self {
        Self::from_direction(&Vector3::new(
            theta.sin() * phi.cos(),
            theta.sin() * phi.sin(),
            theta.cos(),
        ))
    }

    pub fn from_direction(v: &Vector3<f64>) -> Self {
        let u = v.normalize();
        let theta = u.z.clamp(-1.0, 1.0).acos();
        let mut phi = u.y.atan2(u.x);
        if phi < 0.0 {
            phi += TAU;
        }
        if phi >= TAU {
            phi -= TAU;
        }
        PureStateParams { theta, phi }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn axis(&self) -> Vector3<f64> {
        Vector3::new(
            self.theta.sin() * self.phi.cos(),
            self.theta.sin() * self.phi.sin(),
            self.theta.cos(),
        )
    }

    pub fn bloch(&self) -> BlochVector {
        BlochVector::project(self.axis())
    }

    fn shifted(&self, d_theta: f64, d_phi: f64) -> Self {
        Self::new(self.theta + d_theta, self.phi + d_phi)
    }
}

/// Gain schedules `a_k = a₀/(k+1+A)^α` and `c_k = c₀/(k+1)^γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpsaGains {
    pub a0: f64,
    pub big_a: f64,
    pub alpha: f64,
    pub c0: f64,
    pub gamma: f64,
}

/// `a₀ = 3`, `A = 0`, `α = 1`, `c₀ = 0.1`, `γ = 1/6`, the asymptotically
/// optimal SPSA exponents with gains sized for a fidelity objective in `[0, 1]`.
impl Default for SpsaGains {
    fn default() -> Self {
        SpsaGains {
            a0: 3.0,
            big_a: 0.0,
            alpha: 1.0,
            c0: 0.1,
            gamma: 1.0 / 6.0,
        }
    }
}

impl SpsaGains {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a0 >= 0.0
            && self.big_a >= 0.0
            && self.c0 > 0.0
            && self.alpha > 0.5
            && self.alpha <= 1.0
            && self.gamma > 0.0
            && self.gamma <= 0.5;
        if ok {
            Ok(())
        } else {
            Err(QstError::InvalidArgument(format!(
                "invalid SPSA gains {self:?}"
            )))
        }
    }

    pub fn step(&self, k: usize) -> f64 {
        self.a0 / (k as f64 + 1.0 + self.big_a).powf(self.alpha)
    }

    pub fn perturbation(&self, k: usize) -> f64 {
        self.c0 / (k as f64 + 1.0).powf(self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgqtConfig {
    pub gains: SpsaGains,
    /// Split evenly between the two perturbed evaluations.
    pub shots_per_iteration: u64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SgqtConfig {
    fn default() -> Self {
        SgqtConfig {
            gains: SpsaGains::default(),
            shots_per_iteration: 50,
            iterations: 200,
            seed: 0,
        }
    }
}

/// Fraction of `+` outcomes along the candidate axis, an unbiased estimate
/// of `(1 + n·r)/2`.
pub fn estimated_fidelity(
    params: &PureStateParams,
    backend: &mut dyn MeasurementBackend,
    shots: u64,
) -> Result<f64> {
    Ok(backend.measure(&params.axis(), shots)?.frequency())
}

/// SPSA gradient estimate of `objective` at `params`, given the perturbation
/// signs and size.
pub fn spsa_gradient(
    params: &PureStateParams,
    delta: (f64, f64),
    c: f64,
    mut objective: impl FnMut(&PureStateParams) -> Result<f64>,
) -> Result<(f64, f64)> {
    let plus = objective(&params.shifted(c * delta.0, c * delta.1))?;
    let minus = objective(&params.shifted(-c * delta.0, -c * delta.1))?;
    let diff = (plus - minus) / (2.0 * c);
    // Rademacher signs are their own inverses
    Ok((diff * delta.0, diff * delta.1))
}

fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Runs SPSA ascent on the measured fidelity from a random pure start.
/// Each record reports the candidate after that iteration's step.
pub fn run_sgqt(
    config: &SgqtConfig,
    backend: &mut dyn MeasurementBackend,
    truth: Option<&BlochVector>,
) -> std::result::Result<Vec<IterationRecord>, RunFailure> {
    let mut records = Vec::with_capacity(config.iterations);
    let fail = |records, source| RunFailure { records, source };
    if let Err(e) = config.gains.validate() {
        return Err(fail(records, e));
    }
    if config.shots_per_iteration < 2 || config.iterations < 1 {
        return Err(fail(
            records,
            QstError::InvalidArgument("SGQT needs at least 2 shots and 1 iteration".into()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut candidate = PureStateParams::from_direction(&random_direction(&mut rng));
    let half = config.shots_per_iteration / 2;
    let other_half = config.shots_per_iteration - half;
    let mut shots = 0;

    for k in 0..config.iterations {
        let delta = (rademacher(&mut rng), rademacher(&mut rng));
        let c = config.gains.perturbation(k);
        let mut first = true;
        let grad = spsa_gradient(&candidate, delta, c, |p| {
            let n = if first { half } else { other_half };
            first = false;
            estimated_fidelity(p, backend, n)
        });
        let (g_theta, g_phi) = match grad {
            Ok(g) => g,
            Err(e) => return Err(fail(records, e)),
        };
        let a = config.gains.step(k);
        candidate = candidate.shifted(a * g_theta, a * g_phi);
        shots += config.shots_per_iteration;
        let estimate = candidate.bloch();
        records.push(IterationRecord {
            iteration: k + 1,
            triad: MeasurementTriad::pauli(),
            shots,
            estimate,
            infidelity: score(&estimate, truth),
            credible_volume: None,
            ess: None,
            resampled: false,
        });
    }
    Ok(records)
}
