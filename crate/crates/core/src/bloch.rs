//! Single-qubit state representations.
//!
//! A qubit state is stored canonically as its Bloch vector `r` with
//! `‖r‖ ≤ 1`; the density matrix `ρ = ½(I + r·σ)` is built on demand for
//! trace-based checks. Pure states sit on the unit sphere, the maximally
//! mixed state at the origin.

use nalgebra::{Complex, Matrix2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{QstError, Result};

pub type C64 = Complex<f64>;

/// Norm slack accepted from callers before a vector is rejected as unphysical.
pub const NORM_REJECT_TOL: f64 = 1e-9;

/// Structural tolerance for Hermiticity, trace and eigenvalue checks.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Bloch vector of a qubit state. Always satisfies `‖r‖ ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector(Vector3<f64>);

impl BlochVector {
    pub const ORIGIN: BlochVector = BlochVector(Vector3::new(0.0, 0.0, 0.0));

    /// Validates `‖r‖ ≤ 1`. Vectors overshooting the sphere by no more than
    /// [`NORM_REJECT_TOL`] are rescaled onto it.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm > 1.0 + NORM_REJECT_TOL {
            return Err(QstError::InvalidState { norm });
        }
        if norm > 1.0 {
            Ok(BlochVector(v / norm))
        } else {
            Ok(BlochVector(v))
        }
    }

    /// Projects any nonzero vector outside the ball onto the sphere.
    pub fn project(v: Vector3<f64>) -> Self {
        let norm = v.norm();
        if norm > 1.0 {
            BlochVector(v / norm)
        } else {
            BlochVector(v)
        }
    }

    pub(crate) fn new_unchecked(v: Vector3<f64>) -> Self {
        debug_assert!(v.norm() <= 1.0 + 1e-9, "norm {}", v.norm());
        BlochVector(v)
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// `tr(ρ²) = (1 + ‖r‖²)/2`.
    pub fn purity(&self) -> f64 {
        0.5 * (1.0 + self.0.norm_squared())
    }

    pub fn to_density(&self) -> DensityMatrix {
        bloch_to_density(self)
    }
}

impl From<BlochVector> for Vector3<f64> {
    fn from(r: BlochVector) -> Self {
        r.0
    }
}

/// Outcome label of a two-outcome projective measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Plus,
    Minus,
}

/// One projector `(I ± n·σ)/2` of a measurement along the unit axis `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementAxis {
    n: Vector3<f64>,
    outcome: Outcome,
}

impl MeasurementAxis {
    /// Normalizes `n`; rejects the zero vector.
    pub fn new(n: Vector3<f64>, outcome: Outcome) -> Result<Self> {
        Ok(MeasurementAxis {
            n: unit_axis(n)?,
            outcome,
        })
    }

    pub fn direction(&self) -> &Vector3<f64> {
        &self.n
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    /// Projector matrix onto the outcome eigenstate.
    pub fn projector(&self) -> Matrix2<C64> {
        let sign = match self.outcome {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        };
        bloch_matrix(&(self.n * sign))
    }
}

/// Normalizes a measurement direction.
pub fn unit_axis(n: Vector3<f64>) -> Result<Vector3<f64>> {
    let norm = n.norm();
    if !norm.is_finite() || norm < 1e-12 {
        return Err(QstError::InvalidArgument(format!(
            "measurement axis must be nonzero, got norm {norm}"
        )));
    }
    Ok(n / norm)
}

/// Hermitian, unit-trace, positive semidefinite 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Matrix2<C64>);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and both eigenvalues ≥ 0, each to
    /// [`STRUCTURE_TOL`].
    pub fn from_matrix(m: Matrix2<C64>) -> Result<Self> {
        let off = (m[(0, 1)] - m[(1, 0)].conj()).norm();
        let diag_im = m[(0, 0)].im.abs().max(m[(1, 1)].im.abs());
        if off > STRUCTURE_TOL || diag_im > STRUCTURE_TOL {
            return Err(QstError::InvalidDensityMatrix(
                "matrix is not Hermitian".into(),
            ));
        }
        let trace = m[(0, 0)].re + m[(1, 1)].re;
        if (trace - 1.0).abs() > STRUCTURE_TOL {
            return Err(QstError::InvalidDensityMatrix(format!(
                "trace is {trace}, expected 1"
            )));
        }
        let d = DensityMatrix(m);
        let (lo, _) = d.eigenvalues();
        if lo < -STRUCTURE_TOL {
            return Err(QstError::InvalidDensityMatrix(format!(
                "negative eigenvalue {lo}"
            )));
        }
        Ok(d)
    }

    pub fn matrix(&self) -> &Matrix2<C64> {
        &self.0
    }

    /// Eigenvalues in ascending order, from the trace/determinant closed form.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let a = self.0[(0, 0)].re;
        let d = self.0[(1, 1)].re;
        let b = self.0[(0, 1)];
        let half_tr = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        (half_tr - disc, half_tr + disc)
    }

    pub fn determinant(&self) -> f64 {
        (self.0[(0, 0)] * self.0[(1, 1)] - self.0[(0, 1)] * self.0[(1, 0)]).re
    }

    pub fn trace_product(&self, other: &DensityMatrix) -> f64 {
        (self.0 * other.0).trace().re
    }

    pub fn purity(&self) -> f64 {
        self.trace_product(self)
    }

    pub fn to_bloch(&self) -> Result<BlochVector> {
        density_to_bloch(self)
    }
}

fn bloch_matrix(r: &Vector3<f64>) -> Matrix2<C64> {
    let half = 0.5;
    Matrix2::new(
        C64::new(half * (1.0 + r.z), 0.0),
        C64::new(half * r.x, -half * r.y),
        C64::new(half * r.x, half * r.y),
        C64::new(half * (1.0 - r.z), 0.0),
    )
}

/// `ρ = ½(I + r·σ)`.
pub fn bloch_to_density(r: &BlochVector) -> DensityMatrix {
    DensityMatrix(bloch_matrix(&r.0))
}

/// Inverse of [`bloch_to_density`]: `r_j = tr(ρ σ_j)`.
pub fn density_to_bloch(rho: &DensityMatrix) -> Result<BlochVector> {
    let m = DensityMatrix::from_matrix(rho.0)?.0;
    let x = 2.0 * m[(0, 1)].re;
    let y = -2.0 * m[(0, 1)].im;
    let z = m[(0, 0)].re - m[(1, 1)].re;
    BlochVector::new(x, y, z)
}

/// Born-rule probability `tr(Π ρ) = (1 ± n·r)/2` of an axis outcome.
///
/// The minus outcome is computed as `1 - p(+)`, which makes the two
/// probabilities sum to exactly 1 in floating point.
pub fn born_probability(r: &BlochVector, axis: &MeasurementAxis) -> f64 {
    let plus = plus_probability(r, &axis.n);
    match axis.outcome {
        Outcome::Plus => plus,
        Outcome::Minus => 1.0 - plus,
    }
}

/// `(1 + n·r)/2` for a unit axis, clamped to `[0, 1]`.
pub fn plus_probability(r: &BlochVector, n: &Vector3<f64>) -> f64 {
    (0.5 * (1.0 + n.dot(&r.0))).clamp(0.0, 1.0)
}

/// Squared (Uhlmann) fidelity via the qubit closed form
/// `tr(ρσ) + 2·sqrt(det ρ · det σ)`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    let det = (rho.determinant() * sigma.determinant()).max(0.0);
    (rho.trace_product(sigma) + 2.0 * det.sqrt()).clamp(0.0, 1.0)
}

/// Infidelity `1 - sqrt(F)`, zero iff the states coincide.
pub fn infidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    (1.0 - fidelity(rho, sigma).sqrt()).clamp(0.0, 1.0)
}

/// Squared fidelity evaluated directly on Bloch vectors.
pub fn bloch_fidelity(r: &BlochVector, s: &BlochVector) -> f64 {
    let overlap = 0.5 * (1.0 + r.0.dot(&s.0));
    let det_r = 0.25 * (1.0 - r.0.norm_squared());
    let det_s = 0.25 * (1.0 - s.0.norm_squared());
    (overlap + 2.0 * (det_r * det_s).max(0.0).sqrt()).clamp(0.0, 1.0)
}

/// [`infidelity`] without building density matrices.
pub fn bloch_infidelity(r: &BlochVector, s: &BlochVector) -> f64 {
    (1.0 - bloch_fidelity(r, s).sqrt()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    /// Uniform on the unit sphere.
    Pure,
    /// Uniform in the open unit ball.
    Mixed,
}

pub fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

pub fn random_state<R: Rng + ?Sized>(kind: StateKind, rng: &mut R) -> BlochVector {
    let dir = random_direction(rng);
    match kind {
        StateKind::Pure => BlochVector(dir),
        StateKind::Mixed => {
            let u: f64 = rng.random();
            BlochVector(dir * u.cbrt())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn z_axis(outcome: Outcome) -> MeasurementAxis {
        MeasurementAxis::new(Vector3::z(), outcome).unwrap()
    }

    #[test]
    fn maximally_mixed_is_half_identity() {
        let rho = bloch_to_density(&BlochVector::ORIGIN);
        assert_eq!(*rho.matrix(), Matrix2::identity() * C64::new(0.5, 0.0));
    }

    #[test]
    fn z_eigenstate_is_diag_one_zero() {
        let rho = bloch_to_density(&BlochVector::new(0.0, 0.0, 1.0).unwrap());
        assert_eq!(rho.matrix()[(0, 0)].re, 1.0);
        assert_eq!(rho.matrix()[(1, 1)].re, 0.0);
        assert_eq!(rho.matrix()[(0, 1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn eigenvalues_of_unit_vector_are_zero_and_one() {
        let rho = bloch_to_density(&BlochVector::new(0.6, 0.0, 0.8).unwrap());
        let (lo, hi) = rho.eigenvalues();
        assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_vectors_outside_ball() {
        assert!(matches!(
            BlochVector::new(0.0, 0.0, 1.0 + 1e-8),
            Err(QstError::InvalidState { .. })
        ));
        // within the slack it is pulled back onto the sphere
        let r = BlochVector::new(0.0, 0.0, 1.0 + 1e-10).unwrap();
        assert!(r.norm() <= 1.0);
    }

    #[test]
    fn density_to_bloch_of_diag_quarter_three_quarters() {
        let m = Matrix2::new(
            C64::new(0.25, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.75, 0.0),
        );
        let r = density_to_bloch(&DensityMatrix::from_matrix(m).unwrap()).unwrap();
        assert_abs_diff_eq!(r.z(), -0.5, epsilon = 1e-15);
        assert_eq!(r.x(), 0.0);
        assert_eq!(r.y(), 0.0);
        let mixed = DensityMatrix::from_matrix(Matrix2::identity() * C64::new(0.5, 0.0)).unwrap();
        assert_eq!(density_to_bloch(&mixed).unwrap(), BlochVector::ORIGIN);
    }

    #[test]
    fn malformed_density_matrices_are_rejected() {
        let non_hermitian = Matrix2::new(
            C64::new(0.5, 0.0),
            C64::new(0.1, 0.0),
            C64::new(0.2, 0.0),
            C64::new(0.5, 0.0),
        );
        assert!(DensityMatrix::from_matrix(non_hermitian).is_err());
        let bad_trace = Matrix2::identity() * C64::new(0.6, 0.0);
        assert!(DensityMatrix::from_matrix(bad_trace).is_err());
        let negative = Matrix2::new(
            C64::new(1.2, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(-0.2, 0.0),
        );
        assert!(DensityMatrix::from_matrix(negative).is_err());
    }

    #[test]
    fn round_trip_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..100 {
            let kind = if i % 2 == 0 {
                StateKind::Pure
            } else {
                StateKind::Mixed
            };
            let r = random_state(kind, &mut rng);
            let back = density_to_bloch(&bloch_to_density(&r)).unwrap();
            assert!((back.vector() - r.vector()).amax() < 1e-12);
            let rho = bloch_to_density(&r);
            let rho2 = bloch_to_density(&back);
            assert!((rho.matrix() - rho2.matrix())
                .iter()
                .all(|c| c.norm() < 1e-12));
        }
    }

    #[test]
    fn born_probability_examples() {
        let up = BlochVector::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(born_probability(&up, &z_axis(Outcome::Plus)), 1.0);
        let axis = MeasurementAxis::new(Vector3::new(1.0, 2.0, -0.5), Outcome::Minus).unwrap();
        assert_eq!(born_probability(&BlochVector::ORIGIN, &axis), 0.5);
        let r = BlochVector::new(0.6, 0.0, 0.8).unwrap();
        assert_abs_diff_eq!(
            born_probability(&r, &z_axis(Outcome::Plus)),
            0.9,
            epsilon = 1e-15
        );
    }

    #[test]
    fn infidelity_examples() {
        let up = bloch_to_density(&BlochVector::new(0.0, 0.0, 1.0).unwrap());
        let down = bloch_to_density(&BlochVector::new(0.0, 0.0, -1.0).unwrap());
        let mixed = bloch_to_density(&BlochVector::ORIGIN);
        assert_eq!(infidelity(&up, &up), 0.0);
        assert_abs_diff_eq!(infidelity(&up, &down), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            infidelity(&mixed, &up),
            0.292_893_218_813_452_4,
            epsilon = 1e-12
        );
    }

    #[test]
    fn random_state_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            assert_abs_diff_eq!(
                random_state(StateKind::Pure, &mut rng).norm(),
                1.0,
                epsilon = 1e-12
            );
            assert!(random_state(StateKind::Mixed, &mut rng).norm() < 1.0);
        }
    }

    #[test]
    fn mixed_mean_radius_is_three_quarters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| random_state(StateKind::Mixed, &mut rng).norm())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.75).abs() < 0.01, "mean radius {mean}");
    }
}
