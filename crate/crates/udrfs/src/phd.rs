//! Intensity-function (PHD) filters: the standard two-step and single-step
//! recursions, the static detected/undetected split, the dynamic tagged
//! recursion, and the peak-picking state estimators.
//!
//! Every recursion is written once against [`IntensityBackend`], which the
//! Gaussian-mixture and finite-grid representations both implement. The
//! measurement update carries the usual first-order approximation; the
//! prediction step and all split/merge identities are exact algebra and are
//! asserted to near machine precision in the tests.

use nalgebra::{DMatrix, DVector};

use crate::model::symmetrize;
use crate::model::{
    BaseState, FiniteModel, GaussianComponent, GaussianMixture, ScenarioModel, UDState, UDTag,
};
use crate::{real, Scalar};

/// One candidate state estimate location, with its intensity value and a
/// stable index used for deterministic tie-breaking.
#[derive(Debug, Clone)]
pub struct Peak<S: Scalar> {
    pub base: BaseState<S>,
    pub value: S,
    pub ord: usize,
}

/// Representation-specific intensity operations the recursions are written
/// against.
pub trait IntensityBackend<S: Scalar> {
    type Intensity: Clone;
    type Meas: Clone;

    fn zero(&self) -> Self::Intensity;
    fn add(&self, a: &Self::Intensity, b: &Self::Intensity) -> Self::Intensity;
    fn scale(&self, a: &Self::Intensity, c: S) -> Self::Intensity;
    /// Total mass `D[1]`.
    fn mass(&self, a: &Self::Intensity) -> S;
    /// Survival-weighted mass `D[p_S]`.
    fn survivor_mass(&self, a: &Self::Intensity) -> S;
    /// Appearance intensity.
    fn birth(&self) -> Self::Intensity;
    /// Survival-and-motion map `x -> D[p_S M_x]`.
    fn propagate(&self, a: &Self::Intensity) -> Self::Intensity;
    /// Missed-detection scaling `p_D^c(x) a(x)`.
    fn miss_scale(&self, a: &Self::Intensity) -> Self::Intensity;
    /// Detection term for one measurement: `(p_D L_z a, a[p_D L_z])`.
    fn detect(&self, a: &Self::Intensity, z: &Self::Meas) -> (Self::Intensity, S);
    /// Clutter intensity at a measurement.
    fn kappa(&self, z: &Self::Meas) -> S;
    fn is_finite(&self, a: &Self::Intensity) -> bool;
    /// Candidate maxima, sorted by value descending then stable index.
    fn peaks(&self, a: &Self::Intensity) -> Vec<Peak<S>>;
}

/// Gaussian-mixture backend over a continuous scenario model. Detection and
/// survival probabilities are constants here; the grid backend carries the
/// per-point profiles.
pub struct GmBackend<'a, S: Scalar> {
    pub model: &'a ScenarioModel<S>,
}

impl<'a, S: Scalar> IntensityBackend<S> for GmBackend<'a, S> {
    type Intensity = GaussianMixture<S>;
    type Meas = DVector<S>;

    fn zero(&self) -> GaussianMixture<S> {
        GaussianMixture::empty()
    }

    fn add(&self, a: &GaussianMixture<S>, b: &GaussianMixture<S>) -> GaussianMixture<S> {
        a.merged_with(b)
    }

    fn scale(&self, a: &GaussianMixture<S>, c: S) -> GaussianMixture<S> {
        a.scaled(c)
    }

    fn mass(&self, a: &GaussianMixture<S>) -> S {
        a.mass()
    }

    fn survivor_mass(&self, a: &GaussianMixture<S>) -> S {
        a.mass() * self.model.motion.p_survive
    }

    fn birth(&self) -> GaussianMixture<S> {
        self.model.birth.clone()
    }

    fn propagate(&self, a: &GaussianMixture<S>) -> GaussianMixture<S> {
        let f = &self.model.motion.transition;
        let q = &self.model.motion.process_noise;
        GaussianMixture::new(
            a.components
                .iter()
                .map(|c| GaussianComponent {
                    weight: c.weight * self.model.motion.p_survive,
                    mean: f * &c.mean,
                    cov: symmetrize(&(f * &c.cov * f.transpose() + q)),
                })
                .collect(),
        )
    }

    fn miss_scale(&self, a: &GaussianMixture<S>) -> GaussianMixture<S> {
        a.scaled(S::one() - self.model.measurement.p_detect)
    }

    fn detect(&self, a: &GaussianMixture<S>, z: &DVector<S>) -> (GaussianMixture<S>, S) {
        let h = &self.model.measurement.observation;
        let r = &self.model.measurement.noise;
        let p_d = self.model.measurement.p_detect;
        let mut comps = Vec::with_capacity(a.components.len());
        let mut total = S::zero();
        for c in &a.components {
            let innov_cov = symmetrize(&(h * &c.cov * h.transpose() + r));
            let chol = nalgebra::Cholesky::new(innov_cov.clone())
                .expect("innovation covariance must be positive definite");
            let predicted = h * &c.mean;
            let q = crate::model::gaussian_pdf(z, &predicted, &innov_cov);
            let gain = &c.cov * h.transpose() * chol.inverse();
            let mean = &c.mean + &gain * (z - &predicted);
            let dim = c.mean.len();
            let cov = symmetrize(&((DMatrix::identity(dim, dim) - &gain * h) * &c.cov));
            let weight = c.weight * p_d * q;
            total += weight;
            comps.push(GaussianComponent { weight, mean, cov });
        }
        (GaussianMixture::new(comps), total)
    }

    fn kappa(&self, z: &DVector<S>) -> S {
        self.model.clutter.intensity(z)
    }

    fn is_finite(&self, a: &GaussianMixture<S>) -> bool {
        a.components
            .iter()
            .all(|c| c.weight.is_finite() && c.mean.iter().all(|v| v.is_finite()))
    }

    fn peaks(&self, a: &GaussianMixture<S>) -> Vec<Peak<S>> {
        let mut idx: Vec<usize> = (0..a.components.len()).collect();
        idx.sort_by(|&i, &j| {
            a.components[j]
                .weight
                .partial_cmp(&a.components[i].weight)
                .unwrap()
                .then(i.cmp(&j))
        });
        idx.into_iter()
            .map(|i| {
                let mean = a.components[i].mean.clone();
                let value = a.eval(&mean).unwrap_or(S::zero());
                Peak {
                    base: BaseState::Vector(mean),
                    value,
                    ord: i,
                }
            })
            .collect()
    }
}

/// Per-point table intensity over a finite grid.
pub struct GridBackend<'a, S: Scalar> {
    pub model: &'a FiniteModel<S>,
}

impl<'a, S: Scalar> IntensityBackend<S> for GridBackend<'a, S> {
    type Intensity = Vec<S>;
    type Meas = usize;

    fn zero(&self) -> Vec<S> {
        vec![S::zero(); self.model.n_states()]
    }

    fn add(&self, a: &Vec<S>, b: &Vec<S>) -> Vec<S> {
        a.iter().zip(b).map(|(&x, &y)| x + y).collect()
    }

    fn scale(&self, a: &Vec<S>, c: S) -> Vec<S> {
        a.iter().map(|&x| x * c).collect()
    }

    fn mass(&self, a: &Vec<S>) -> S {
        a.iter().copied().sum()
    }

    fn survivor_mass(&self, a: &Vec<S>) -> S {
        a.iter().zip(&self.model.p_s).map(|(&v, &p)| v * p).sum()
    }

    fn birth(&self) -> Vec<S> {
        self.model.birth.clone()
    }

    fn propagate(&self, a: &Vec<S>) -> Vec<S> {
        let n = self.model.n_states();
        let mut out = vec![S::zero(); n];
        for (xp, &v) in a.iter().enumerate() {
            let scaled = v * self.model.p_s[xp];
            for (x, slot) in out.iter_mut().enumerate() {
                *slot += scaled * self.model.markov[xp][x];
            }
        }
        out
    }

    fn miss_scale(&self, a: &Vec<S>) -> Vec<S> {
        a.iter()
            .zip(&self.model.p_d)
            .map(|(&v, &p)| v * (S::one() - p))
            .collect()
    }

    fn detect(&self, a: &Vec<S>, z: &usize) -> (Vec<S>, S) {
        let comp: Vec<S> = a
            .iter()
            .enumerate()
            .map(|(x, &v)| v * self.model.p_d[x] * self.model.likelihood[x][*z])
            .collect();
        let total = comp.iter().copied().sum();
        (comp, total)
    }

    fn kappa(&self, z: &usize) -> S {
        self.model.kappa(*z)
    }

    fn is_finite(&self, a: &Vec<S>) -> bool {
        a.iter().all(|v| v.is_finite())
    }

    fn peaks(&self, a: &Vec<S>) -> Vec<Peak<S>> {
        let n = a.len();
        let mut out: Vec<Peak<S>> = (0..n)
            .filter(|&x| {
                let left_ok = x == 0 || a[x] >= a[x - 1];
                let right_ok = x + 1 == n || a[x] >= a[x + 1];
                left_ok && right_ok && a[x] > S::zero()
            })
            .map(|x| Peak {
                base: BaseState::Index(x),
                value: a[x],
                ord: x,
            })
            .collect();
        out.sort_by(|p, q| {
            q.value
                .partial_cmp(&p.value)
                .unwrap()
                .then(p.ord.cmp(&q.ord))
        });
        out
    }
}

/// Time update: appearance intensity plus the survival-and-motion map of the
/// previous intensity. Exact (first moments are linear under thinning,
/// motion, and superposition).
pub fn phd_predict<S: Scalar, B: IntensityBackend<S>>(b: &B, prev: &B::Intensity) -> B::Intensity {
    b.add(&b.birth(), &b.propagate(prev))
}

/// Measurement update (first-order approximation): missed-detection scaling
/// plus one reweighted detection term per measurement.
pub fn phd_update<S: Scalar, B: IntensityBackend<S>>(
    b: &B,
    predicted: &B::Intensity,
    scan: &[B::Meas],
) -> B::Intensity {
    let mut out = b.miss_scale(predicted);
    for z in scan {
        let (num, s) = b.detect(predicted, z);
        out = b.add(&out, &b.scale(&num, S::one() / (b.kappa(z) + s)));
    }
    out
}

/// Single-step recursion, coded from its own formula (appearance and
/// survivor contributions enter each denominator separately) rather than by
/// composing the two-step halves.
pub fn phd_single_step<S: Scalar, B: IntensityBackend<S>>(
    b: &B,
    prev: &B::Intensity,
    scan: &[B::Meas],
) -> B::Intensity {
    let appear = b.birth();
    let survived = b.propagate(prev);
    let mut out = b.add(&b.miss_scale(&appear), &b.miss_scale(&survived));
    for z in scan {
        let (num_b, s_b) = b.detect(&appear, z);
        let (num_s, s_s) = b.detect(&survived, z);
        let denom = b.kappa(z) + s_b + s_s;
        out = b.add(&out, &b.scale(&b.add(&num_b, &num_s), S::one() / denom));
    }
    out
}

/// Detected/undetected split of one single-step update under the static
/// model: the undetected part is the missed-detection term, the detected
/// part the measurement terms; their sum is exactly the single-step output.
/// The recursion feeds the merged intensity forward.
pub struct SudSplit<I> {
    pub detected: I,
    pub undetected: I,
}

pub fn sud_phd_step<S: Scalar, B: IntensityBackend<S>>(
    b: &B,
    prev_merged: &B::Intensity,
    scan: &[B::Meas],
) -> SudSplit<B::Intensity> {
    let appear = b.birth();
    let survived = b.propagate(prev_merged);
    let undetected = b.add(&b.miss_scale(&appear), &b.miss_scale(&survived));
    let mut detected = b.zero();
    for z in scan {
        let (num_b, s_b) = b.detect(&appear, z);
        let (num_s, s_s) = b.detect(&survived, z);
        let denom = b.kappa(z) + s_b + s_s;
        detected = b.add(
            &detected,
            &b.scale(&b.add(&num_b, &num_s), S::one() / denom),
        );
    }
    SudSplit {
        detected,
        undetected,
    }
}

/// Tagged intensity pair: the dynamic model propagates the detected and
/// undetected parts as separate intensities.
#[derive(Debug, Clone)]
pub struct UdIntensity<I> {
    pub detected: I,
    pub undetected: I,
}

/// One step of the tagged recursion. Appearance intensity is undetected by
/// construction. The undetected part never receives measurement terms; mass
/// crosses from undetected to detected only through the detection sum, which
/// draws on the merged predicted intensity.
pub fn dud_phd_step<S: Scalar, B: IntensityBackend<S>>(
    b: &B,
    prev: &UdIntensity<B::Intensity>,
    scan: &[B::Meas],
) -> UdIntensity<B::Intensity> {
    let appear = b.birth();
    let surv_d = b.propagate(&prev.detected);
    let surv_u = b.propagate(&prev.undetected);
    let undetected = b.miss_scale(&b.add(&appear, &surv_u));
    let mut detected = b.miss_scale(&surv_d);
    let merged = b.add(&appear, &b.add(&surv_d, &surv_u));
    for z in scan {
        let (num, s) = b.detect(&merged, z);
        detected = b.add(&detected, &b.scale(&num, S::one() / (b.kappa(z) + s)));
    }
    UdIntensity {
        detected,
        undetected,
    }
}

/// Multi-object state estimate: expected count rounded half-up, that many
/// highest peaks. `under_resolved` flags fewer available peaks than the
/// count asked for.
#[derive(Debug, Clone)]
pub struct StateEstimate<S: Scalar> {
    pub count: usize,
    pub states: Vec<UDState<S>>,
    pub under_resolved: bool,
}

fn round_half_up<S: Scalar>(mass: S) -> usize {
    let v = (mass + real::<S>(0.5)).floor();
    v.to_usize().unwrap_or(0)
}

/// Estimator for an untagged intensity; reported states carry the detected
/// tag, matching the untagged convention.
pub fn estimate<S: Scalar, B: IntensityBackend<S>>(b: &B, d: &B::Intensity) -> StateEstimate<S> {
    let count = round_half_up(b.mass(d));
    let peaks = b.peaks(d);
    let states: Vec<UDState<S>> = peaks
        .into_iter()
        .take(count)
        .map(|p| UDState {
            base: p.base,
            tag: UDTag::Detected,
        })
        .collect();
    StateEstimate {
        count,
        under_resolved: states.len() < count,
        states,
    }
}

/// Estimator over a tagged intensity pair: candidates from both parts ranked
/// by intensity value; ties break toward the lower point index, then toward
/// the detected tag.
pub fn dud_estimate<S: Scalar, B: IntensityBackend<S>>(
    b: &B,
    d: &UdIntensity<B::Intensity>,
) -> StateEstimate<S> {
    let count = round_half_up(b.mass(&d.detected) + b.mass(&d.undetected));
    let mut pool: Vec<(Peak<S>, UDTag)> = b
        .peaks(&d.detected)
        .into_iter()
        .map(|p| (p, UDTag::Detected))
        .chain(
            b.peaks(&d.undetected)
                .into_iter()
                .map(|p| (p, UDTag::Undetected)),
        )
        .collect();
    pool.sort_by(|(p, pt), (q, qt)| {
        q.value
            .partial_cmp(&p.value)
            .unwrap()
            .then(p.ord.cmp(&q.ord))
            .then(qt.bit().cmp(&pt.bit()))
    });
    let states: Vec<UDState<S>> = pool
        .into_iter()
        .take(count)
        .map(|(p, tag)| UDState { base: p.base, tag })
        .collect();
    StateEstimate {
        count,
        under_resolved: states.len() < count,
        states,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::fixtures;
    use approx::assert_relative_eq;

    fn grid_backend_model() -> FiniteModel<f64> {
        let mut m = fixtures::grid(4, 3);
        m.birth = vec![0.05, 0.0, 0.1, 0.0];
        m
    }

    #[test]
    fn predict_mass_is_birth_plus_survived() {
        let m = grid_backend_model();
        let b = GridBackend { model: &m };
        let prior = vec![0.5, 0.25, 0.0, 0.25];
        let pred = phd_predict(&b, &prior);
        let expect: f64 = m.birth.iter().sum::<f64>() + b.survivor_mass(&prior);
        assert_relative_eq!(b.mass(&pred), expect, epsilon = 1e-14);

        // Empty prior: predicted mass is the appearance mass alone.
        let pred = phd_predict(&b, &b.zero());
        assert_relative_eq!(b.mass(&pred), m.birth.iter().sum::<f64>(), epsilon = 1e-15);
    }

    #[test]
    fn predict_preserves_mass_with_certain_survival() {
        let mut m = grid_backend_model();
        m.p_s = vec![1.0; 4];
        m.birth = vec![0.0; 4];
        let b = GridBackend { model: &m };
        let prior = vec![0.5, 0.25, 0.0, 0.25];
        assert_relative_eq!(b.mass(&phd_predict(&b, &prior)), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn update_empty_scan_scales_by_miss_probability() {
        let m = grid_backend_model();
        let b = GridBackend { model: &m };
        let pred = vec![0.3, 0.2, 0.1, 0.4];
        let upd = phd_update(&b, &pred, &[]);
        for x in 0..4 {
            assert_relative_eq!(upd[x], (1.0 - m.p_d[x]) * pred[x], epsilon = 1e-14);
        }
    }

    #[test]
    fn update_perfect_detection_no_clutter_normalizes_per_measurement() {
        // With certain detection and no clutter, each measurement term
        // contributes exactly unit mass, so the update maps mass to the
        // scan size.
        let mut m = grid_backend_model();
        m.p_d = vec![1.0; 4];
        m.clutter_rate = 0.0;
        m.clutter_spatial = vec![1.0 / 3.0; 3];
        let b = GridBackend { model: &m };
        let pred = vec![0.3, 0.2, 0.1, 0.4];
        assert_relative_eq!(b.mass(&phd_update(&b, &pred, &[1])), 1.0, epsilon = 1e-13);
        assert_relative_eq!(
            b.mass(&phd_update(&b, &pred, &[0, 2])),
            2.0,
            epsilon = 1e-13
        );
        assert!(phd_update(&b, &pred, &[0, 2]).iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn sud_split_sums_to_single_step_on_grid() {
        let m = grid_backend_model();
        let b = GridBackend { model: &m };
        let prior = vec![0.4, 0.3, 0.2, 0.1];
        let scan = [0usize, 2];
        let split = sud_phd_step(&b, &prior, &scan);
        let single = phd_single_step(&b, &prior, &scan);
        for x in 0..4 {
            assert_relative_eq!(
                split.detected[x] + split.undetected[x],
                single[x],
                epsilon = 1e-15
            );
        }
        // Empty scan: no detected mass at all.
        let split = sud_phd_step(&b, &prior, &[]);
        assert_eq!(b.mass(&split.detected), 0.0);
    }

    #[test]
    fn sud_detected_vanishes_for_blind_sensor() {
        let mut m = grid_backend_model();
        m.p_d = vec![0.0; 4];
        let b = GridBackend { model: &m };
        let split = sud_phd_step(&b, &vec![0.4, 0.3, 0.2, 0.1], &[0]);
        assert_eq!(b.mass(&split.detected), 0.0);
    }

    #[test]
    fn dud_tag_sum_matches_single_step_on_merged_prior() {
        let m = grid_backend_model();
        let b = GridBackend { model: &m };
        let prev = UdIntensity {
            detected: vec![0.2, 0.1, 0.0, 0.05],
            undetected: vec![0.1, 0.15, 0.3, 0.0],
        };
        let merged: Vec<f64> = b.add(&prev.detected, &prev.undetected);
        let scan = [1usize, 2];
        let stepped = dud_phd_step(&b, &prev, &scan);
        let single = phd_single_step(&b, &merged, &scan);
        for x in 0..4 {
            assert_relative_eq!(
                stepped.detected[x] + stepped.undetected[x],
                single[x],
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn dud_undetected_part_ignores_the_scan() {
        let m = grid_backend_model();
        let b = GridBackend { model: &m };
        let prev = UdIntensity {
            detected: vec![0.2, 0.1, 0.0, 0.05],
            undetected: vec![0.1, 0.15, 0.3, 0.0],
        };
        let with_scan = dud_phd_step(&b, &prev, &[0, 1, 2]);
        let without = dud_phd_step(&b, &prev, &[]);
        assert_eq!(with_scan.undetected, without.undetected);
    }

    #[test]
    fn dud_blind_sensor_reduces_to_pure_prediction() {
        let mut m = grid_backend_model();
        m.p_d = vec![0.0; 4];
        let b = GridBackend { model: &m };
        let prev = UdIntensity {
            detected: vec![0.2, 0.1, 0.0, 0.05],
            undetected: vec![0.1, 0.15, 0.3, 0.0],
        };
        let stepped = dud_phd_step(&b, &prev, &[1]);
        let expect_d = b.propagate(&prev.detected);
        let expect_u = b.add(&b.birth(), &b.propagate(&prev.undetected));
        for x in 0..4 {
            assert_relative_eq!(stepped.detected[x], expect_d[x], epsilon = 1e-14);
            assert_relative_eq!(stepped.undetected[x], expect_u[x], epsilon = 1e-14);
        }
    }

    #[test]
    fn dud_detection_creates_detected_mass_from_undetected_prior() {
        let m = grid_backend_model();
        let b = GridBackend { model: &m };
        let prev = UdIntensity {
            detected: vec![0.0; 4],
            undetected: vec![0.2, 0.3, 0.2, 0.1],
        };
        let stepped = dud_phd_step(&b, &prev, &[1]);
        assert!(b.mass(&stepped.detected) > 0.0);
    }

    #[test]
    fn estimate_rounding_rules() {
        let m = grid_backend_model();
        let b = GridBackend { model: &m };
        // Mass 0.4 rounds to zero states.
        let est = estimate(&b, &vec![0.4, 0.0, 0.0, 0.0]);
        assert_eq!(est.count, 0);
        assert!(est.states.is_empty());
        // Mass 1.5 rounds half-up to two.
        let est = estimate(&b, &vec![0.75, 0.0, 0.75, 0.0]);
        assert_eq!(est.count, 2);
        assert_eq!(est.states.len(), 2);
    }

    #[test]
    fn estimate_two_separated_components() {
        let file = fixtures::reference_scenario();
        let model: ScenarioModel<f64> = file.to_model().unwrap();
        let b = GmBackend { model: &model };
        let mk = |w: f64, x: f64| {
            GaussianComponent::new(
                w,
                DVector::from_row_slice(&[x, 0.0]),
                DMatrix::identity(2, 2),
            )
            .unwrap()
        };
        let gm = GaussianMixture::new(vec![mk(1.2, -20.0), mk(1.2, 20.0)]);
        let est = estimate(&b, &gm);
        assert_eq!(est.count, 2);
        let xs: Vec<f64> = est
            .states
            .iter()
            .map(|s| match &s.base {
                BaseState::Vector(v) => v[0],
                _ => unreachable!(),
            })
            .collect();
        assert!(xs.contains(&-20.0) && xs.contains(&20.0));
    }

    #[test]
    fn dud_estimate_tags_and_ties() {
        let m = grid_backend_model();
        let b = GridBackend { model: &m };
        // Pure detected intensity behaves like the untagged estimator.
        let ud = UdIntensity {
            detected: vec![0.0, 1.2, 0.0, 0.0],
            undetected: vec![0.0; 4],
        };
        let est = dud_estimate(&b, &ud);
        assert_eq!(est.count, 1);
        assert_eq!(est.states[0].tag, UDTag::Detected);
        assert_eq!(est.states[0].base, BaseState::Index(1));

        // Exactly symmetric parts: the tie goes to the detected tag.
        let ud = UdIntensity {
            detected: vec![0.6, 0.0, 0.0, 0.0],
            undetected: vec![0.6, 0.0, 0.0, 0.0],
        };
        let est = dud_estimate(&b, &ud);
        assert_eq!(est.count, 1);
        assert_eq!(est.states[0].tag, UDTag::Detected);
    }

    #[test]
    fn tagged_estimate_counts_track_oracle_cardinality_means() {
        // Tag counts from the estimator over the first-moment intensities of
        // an exact tagged posterior stay within one of the expected
        // per-tag cardinalities of that posterior.
        use crate::oracle::{mask_points, TaggedLayout};
        use crate::posterior::dud_posteriors;
        use crate::verify::fixtures as fx;

        let m = fx::grid(3, 3);
        let layout = TaggedLayout::new(3);
        let prior = fx::tagged_prior(layout, 2);
        let post = dud_posteriors(&m, layout, &prior, &[0, 2]).unwrap();

        let mut d_int = vec![0.0; 3];
        let mut u_int = vec![0.0; 3];
        for mask in post.total.space().subsets() {
            for bit in mask_points(mask) {
                let (x, det) = layout.point(bit);
                if det {
                    d_int[x] += post.total.value(mask);
                } else {
                    u_int[x] += post.total.value(mask);
                }
            }
        }
        let expected_d: f64 = d_int.iter().sum();
        let expected_u: f64 = u_int.iter().sum();

        let b = GridBackend { model: &m };
        let est = dud_estimate(
            &b,
            &UdIntensity {
                detected: d_int,
                undetected: u_int,
            },
        );
        let d_count = est
            .states
            .iter()
            .filter(|s| s.tag == UDTag::Detected)
            .count() as f64;
        let u_count = est.states.len() as f64 - d_count;
        assert!(
            (d_count - expected_d).abs() <= 1.0,
            "{d_count} vs {expected_d}"
        );
        assert!(
            (u_count - expected_u).abs() <= 1.0,
            "{u_count} vs {expected_u}"
        );
    }

    #[test]
    fn under_resolved_flag_when_peaks_are_scarce() {
        let m = grid_backend_model();
        let b = GridBackend { model: &m };
        // Monotone ramp has a single local maximum but mass 2.
        let est = estimate(&b, &vec![0.2, 0.4, 0.6, 0.8]);
        assert_eq!(est.count, 2);
        assert!(est.under_resolved);
        assert_eq!(est.states.len(), 1);
    }
}
