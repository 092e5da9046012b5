//! Liu–West resampling that only ever produces valid states.
//!
//! Each output particle starts from an ancestor drawn by weight, shrunk
//! toward the cloud mean by `a`. Noise with covariance `h²·Cov` (where
//! `a² + h² = 1`) is then added one principal axis at a time, each
//! coordinate drawn from a normal truncated to the norm budget the earlier
//! coordinates left over. The result stays inside the Bloch ball by
//! construction instead of being clipped back onto it afterwards.
//!
//! The per-axis scheme is not the joint Gaussian conditioned on the ball;
//! it depends on axis order, which is widest-first.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};

use crate::bloch::BlochVector;
use crate::error::{QstError, Result};
use crate::filter::{bme, weighted_covariance, ParticleCloud};

/// Intervals whose normal mass falls below this collapse to the bound
/// nearest the mean.
pub const MIN_INTERVAL_MASS: f64 = 1e-15;

/// Default shrinkage `a`.
pub const DEFAULT_SHRINKAGE: f64 = 0.1;

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Normal `N(mean, std)` restricted and renormalized to `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    mean: f64,
    std: f64,
    lower: f64,
    upper: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, std: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(std > 0.0) || !std.is_finite() {
            return Err(QstError::InvalidArgument(format!(
                "std must be positive, got {std}"
            )));
        }
        if !(lower <= upper) || !mean.is_finite() {
            return Err(QstError::InvalidArgument(format!(
                "invalid truncation [{lower}, {upper}] around {mean}"
            )));
        }
        Ok(TruncatedNormal {
            mean,
            std,
            lower,
            upper,
        })
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// Inverse-CDF draw consuming exactly one uniform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u)
    }

    /// Maps a uniform `u ∈ [0, 1)` through the truncated inverse CDF.
    pub fn quantile(&self, u: f64) -> f64 {
        let mut a = (self.lower - self.mean) / self.std;
        let mut b = (self.upper - self.mean) / self.std;
        // work in the lower tail where Φ keeps relative precision
        let mirrored = a > 0.0;
        if mirrored {
            (a, b) = (-b, -a);
        }
        let (pa, pb) = (std_normal_cdf(a), std_normal_cdf(b));
        let mass = pb - pa;
        if !(mass >= MIN_INTERVAL_MASS) {
            return self.mean.clamp(self.lower, self.upper);
        }
        let z = std_normal_quantile(pa + u * mass).clamp(a, b);
        let z = if mirrored { -z } else { z };
        (self.mean + self.std * z).clamp(self.lower, self.upper)
    }
}

/// Draws from the truncated normal described by `spec`.
pub fn truncated_normal_sample<R: Rng + ?Sized>(spec: &TruncatedNormal, rng: &mut R) -> f64 {
    spec.sample(rng)
}

/// Shrinkage `a ∈ [0, 1]` and its kernel width `h = sqrt(1 − a²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleParams {
    a: f64,
}

impl ResampleParams {
    pub fn new(a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(QstError::InvalidArgument(format!(
                "resampling a={a} outside [0, 1]"
            )));
        }
        Ok(ResampleParams { a })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn h(&self) -> f64 {
        (1.0 - self.a * self.a).sqrt()
    }
}

impl Default for ResampleParams {
    fn default() -> Self {
        ResampleParams {
            a: DEFAULT_SHRINKAGE,
        }
    }
}

/// Gaussian noise model expressed in its principal frame, sampled axis by
/// axis inside the unit ball.
#[derive(Debug, Clone)]
pub struct BallSampler {
    /// Columns are principal axes, widest first.
    frame: Matrix3<f64>,
    stds: Vector3<f64>,
}

impl BallSampler {
    pub fn new(cov: &Matrix3<f64>) -> Self {
        let eig = SymmetricEigen::new((cov + cov.transpose()) * 0.5);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let lambdas = Vector3::from_fn(|i, _| eig.eigenvalues[order[i]].max(0.0));
        if lambdas.iter().all(|&l| l == 0.0) {
            return BallSampler {
                frame: Matrix3::identity(),
                stds: Vector3::zeros(),
            };
        }
        let frame = Matrix3::from_columns(&[
            eig.eigenvectors.column(order[0]).into_owned(),
            eig.eigenvectors.column(order[1]).into_owned(),
            eig.eigenvectors.column(order[2]).into_owned(),
        ]);
        BallSampler {
            frame,
            stds: lambdas.map(f64::sqrt),
        }
    }

    pub fn frame(&self) -> &Matrix3<f64> {
        &self.frame
    }

    pub fn stds(&self) -> &Vector3<f64> {
        &self.stds
    }

    /// One draw centred at `center`. Coordinate `j` in the principal frame is
    /// truncated to `±sqrt(1 − Σ_{l<j} τ_l²)`.
    pub fn sample<R: Rng + ?Sized>(&self, center: &Vector3<f64>, rng: &mut R) -> BlochVector {
        let target = self.frame.transpose() * center;
        let mut tau = Vector3::zeros();
        let mut budget = 1.0f64;
        for j in 0..3 {
            let bound = budget.max(0.0).sqrt();
            tau[j] = if self.stds[j] > 0.0 {
                TruncatedNormal {
                    mean: target[j],
                    std: self.stds[j],
                    lower: -bound,
                    upper: bound,
                }
                .sample(rng)
            } else {
                target[j].clamp(-bound, bound)
            };
            budget -= tau[j] * tau[j];
        }
        // ‖V τ‖ = ‖τ‖ ≤ 1 up to rounding in the rotation
        BlochVector::project(self.frame * tau)
    }
}

struct Kernel {
    mean: Vector3<f64>,
    ancestors: WeightedIndex<f64>,
    sampler: BallSampler,
    a: f64,
}

impl Kernel {
    fn new(cloud: &ParticleCloud, params: ResampleParams) -> Result<Self> {
        let mean = *bme(cloud).vector();
        let h2 = 1.0 - params.a * params.a;
        let cov = weighted_covariance(cloud) * h2;
        let ancestors = WeightedIndex::new(cloud.weights())
            .map_err(|e| QstError::InvalidArgument(format!("bad particle weights: {e}")))?;
        Ok(Kernel {
            mean,
            ancestors,
            sampler: BallSampler::new(&cov),
            a: params.a,
        })
    }

    fn shrunk_ancestor<R: Rng + ?Sized>(&self, cloud: &ParticleCloud, rng: &mut R) -> Vector3<f64> {
        let k = self.ancestors.sample(rng);
        let r = cloud.particles()[k].location.vector();
        if self.a == 1.0 {
            *r
        } else {
            r * self.a + self.mean * (1.0 - self.a)
        }
    }
}

/// Draws `count` valid particles from the Liu–West kernel of `cloud`.
pub fn resample_locations<R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    params: ResampleParams,
    count: usize,
    rng: &mut R,
) -> Result<Vec<BlochVector>> {
    let kernel = Kernel::new(cloud, params)?;
    Ok((0..count)
        .map(|_| {
            let center = kernel.shrunk_ancestor(cloud, rng);
            kernel.sampler.sample(&center, rng)
        })
        .collect())
}

/// Replaces the cloud with `K` equally weighted valid particles.
pub fn liu_west_resample<R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    params: ResampleParams,
    rng: &mut R,
) -> Result<ParticleCloud> {
    let locations = resample_locations(cloud, params, cloud.len(), rng)?;
    let mut next = ParticleCloud::uniform(locations)?;
    next.set_iteration(cloud.iteration());
    Ok(next)
}

/// Outcome of the clip-and-project comparison resampler.
#[derive(Debug, Clone)]
pub struct ClippedResample {
    pub locations: Vec<BlochVector>,
    /// Draws that landed outside the ball before being projected onto it.
    pub invalid_before_projection: usize,
}

/// Plain Gaussian Liu–West kernel followed by projection of invalid draws
/// onto the sphere. Kept as a baseline to measure how often the untruncated
/// kernel leaves the ball; not used by the estimators.
pub fn clip_and_project_resample<R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    params: ResampleParams,
    count: usize,
    rng: &mut R,
) -> Result<ClippedResample> {
    let kernel = Kernel::new(cloud, params)?;
    let mut invalid = 0;
    let locations = (0..count)
        .map(|_| {
            let center = kernel.shrunk_ancestor(cloud, rng);
            let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let draw = center + kernel.sampler.frame * z.component_mul(&kernel.sampler.stds);
            if draw.norm() > 1.0 {
                invalid += 1;
            }
            BlochVector::project(draw)
        })
        .collect();
    Ok(ClippedResample {
        locations,
        invalid_before_projection: invalid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{random_direction, random_state, StateKind};
    use crate::filter::Particle;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_cloud(k: usize, kind: StateKind, seed: u64) -> ParticleCloud {
        let mut r = rng(seed);
        let particles = (0..k)
            .map(|_| Particle {
                location: random_state(kind, &mut r),
                weight: r.random::<f64>() + 0.01,
            })
            .collect();
        ParticleCloud::weighted(particles).unwrap()
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(TruncatedNormal::new(0.0, 0.0, -1.0, 1.0).is_err());
        assert!(TruncatedNormal::new(0.0, 1.0, 1.0, -1.0).is_err());
        assert!(ResampleParams::new(1.1).is_err());
        assert!(ResampleParams::new(-0.1).is_err());
        let p = ResampleParams::new(0.6).unwrap();
        assert_abs_diff_eq!(p.a() * p.a() + p.h() * p.h(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn samples_stay_in_bounds() {
        let mut r = rng(1);
        let specs = [
            TruncatedNormal::new(0.0, 1.0, -1.0, 1.0).unwrap(),
            TruncatedNormal::new(5.0, 0.1, -0.2, 0.3).unwrap(),
            TruncatedNormal::new(-3.0, 2.0, 0.9, 0.95).unwrap(),
            TruncatedNormal::new(0.999, 1e-4, -1.0, 1.0).unwrap(),
            TruncatedNormal::new(0.0, 1.0, 0.5, 0.5).unwrap(),
        ];
        for spec in &specs {
            for _ in 0..10_000 {
                let x = spec.sample(&mut r);
                assert!(x >= spec.lower && x <= spec.upper, "{x} outside {spec:?}");
            }
        }
    }

    #[test]
    fn negligible_mass_returns_nearest_bound() {
        let far_right = TruncatedNormal::new(50.0, 1.0, -1.0, 1.0).unwrap();
        assert_eq!(far_right.quantile(0.3), 1.0);
        let far_left = TruncatedNormal::new(-50.0, 1.0, -1.0, 1.0).unwrap();
        assert_eq!(far_left.quantile(0.9), -1.0);
    }

    #[test]
    fn deep_tail_interval_is_sampled_accurately() {
        // both bounds ~6σ above the mean: mirrored into the lower tail
        let spec = TruncatedNormal::new(0.0, 1.0, 6.0, 6.5).unwrap();
        let mut r = rng(2);
        let n = 20_000;
        let mean = (0..n).map(|_| spec.sample(&mut r)).sum::<f64>() / n as f64;
        // E[X | X > 6] ≈ φ(6)/(1-Φ(6)) ≈ 6.1568 (Mills ratio); the 6.5 cap trims it slightly
        assert!(mean > 6.0 && mean < 6.2, "{mean}");
    }

    #[test]
    fn symmetric_truncation_has_zero_mean() {
        let spec = TruncatedNormal::new(0.0, 0.7, -0.5, 0.5).unwrap();
        let mut r = rng(3);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| spec.sample(&mut r)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * (var / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn a_equal_one_returns_ancestors() {
        let cloud = random_cloud(200, StateKind::Mixed, 4);
        let out =
            liu_west_resample(&cloud, ResampleParams::new(1.0).unwrap(), &mut rng(5)).unwrap();
        let originals: Vec<_> = cloud.particles().iter().map(|p| p.location).collect();
        for p in out.particles() {
            assert!(originals.contains(&p.location));
        }
    }

    #[test]
    fn a_equal_zero_centres_on_cloud_mean() {
        let cloud = random_cloud(300, StateKind::Mixed, 6);
        let mean = *bme(&cloud).vector();
        let params = ResampleParams::new(0.0).unwrap();
        let locs = resample_locations(&cloud, params, 50_000, &mut rng(7)).unwrap();
        let out_mean = locs
            .iter()
            .fold(Vector3::zeros(), |acc, l| acc + l.vector())
            / locs.len() as f64;
        // truncation pulls the spread-out draws slightly inward, never outward
        assert!((out_mean - mean).norm() < 0.05, "{out_mean} vs {mean}");
    }

    #[test]
    fn zero_covariance_keeps_shrunk_ancestor() {
        let p = BlochVector::new(0.3, -0.2, 0.5).unwrap();
        let cloud = ParticleCloud::uniform(vec![p; 5]).unwrap();
        let out =
            liu_west_resample(&cloud, ResampleParams::new(0.1).unwrap(), &mut rng(8)).unwrap();
        for q in out.particles() {
            assert!((q.location.vector() - p.vector()).amax() < 1e-15);
            assert_eq!(q.weight, 0.2);
        }
    }

    #[test]
    fn interior_cloud_preserves_first_two_moments() {
        let mut r = rng(9);
        let locations: Vec<BlochVector> = (0..100_000)
            .map(|_| {
                let dir = random_direction(&mut r);
                let u: f64 = r.random();
                BlochVector::new_unchecked(dir * 0.3 * u.cbrt())
            })
            .collect();
        let cloud = ParticleCloud::uniform(locations).unwrap();
        let out =
            liu_west_resample(&cloud, ResampleParams::new(0.98).unwrap(), &mut rng(10)).unwrap();
        let (m0, m1) = (bme(&cloud), bme(&out));
        let (c0, c1) = (weighted_covariance(&cloud), weighted_covariance(&out));
        assert!((m0.vector() - m1.vector()).amax() < 2e-3);
        assert!((c0 - c1).amax() < 1e-3, "{c0} vs {c1}");
    }

    #[test]
    fn outputs_are_deterministic_under_seed() {
        let cloud = random_cloud(100, StateKind::Pure, 11);
        let params = ResampleParams::default();
        let a = liu_west_resample(&cloud, params, &mut rng(12)).unwrap();
        let b = liu_west_resample(&cloud, params, &mut rng(12)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn every_output_is_a_valid_state(seed in any::<u64>(), a in 0.0f64..=1.0, pure in any::<bool>()) {
            let kind = if pure { StateKind::Pure } else { StateKind::Mixed };
            let cloud = random_cloud(64, kind, seed);
            let out = liu_west_resample(&cloud, ResampleParams::new(a).unwrap(), &mut rng(seed ^ 1)).unwrap();
            prop_assert_eq!(out.len(), 64);
            for p in out.particles() {
                prop_assert!(p.location.norm() <= 1.0 + 1e-12);
                prop_assert_eq!(p.weight, 1.0 / 64.0);
            }
        }

        #[test]
        fn truncated_draw_within_bounds(mean in -5.0f64..5.0, std in 1e-6f64..3.0, lo in -2.0f64..2.0, width in 0.0f64..2.0, u in 0.0f64..1.0) {
            let spec = TruncatedNormal::new(mean, std, lo, lo + width).unwrap();
            let x = spec.quantile(u);
            prop_assert!(x >= lo && x <= lo + width);
        }
    }
}
