//! State/measurement spaces, the U/D tag, Gaussian-mixture machinery, and the
//! scenario model shared by every filter.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{real, Error, Result, Scalar};

/// Binary detection tag: `Detected` once a measurement has ever been
/// attributed to the target, `Undetected` before that. The tag never reverts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UDTag {
    Undetected = 0,
    Detected = 1,
}

impl UDTag {
    pub fn from_bit(o: u8) -> Self {
        if o == 0 {
            UDTag::Undetected
        } else {
            UDTag::Detected
        }
    }

    pub fn bit(self) -> u8 {
        self as u8
    }

    pub fn is_detected(self) -> bool {
        matches!(self, UDTag::Detected)
    }
}

/// Base state of a target: a continuous vector or an index into a finite
/// space, depending on the active backend.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseState<S: Scalar> {
    Vector(DVector<S>),
    Index(usize),
}

/// A tagged target state `(x, o)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UDState<S: Scalar> {
    pub base: BaseState<S>,
    pub tag: UDTag,
}

/// One weighted Gaussian term of an intensity or birth density.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent<S: Scalar> {
    pub weight: S,
    pub mean: DVector<S>,
    pub cov: DMatrix<S>,
}

impl<S: Scalar> GaussianComponent<S> {
    pub fn new(weight: S, mean: DVector<S>, cov: DMatrix<S>) -> Result<Self> {
        if weight < S::zero() {
            return Err(Error::InvalidModel("negative component weight".into()));
        }
        let cov = symmetrize(&cov);
        if Cholesky::new(cov.clone()).is_none() {
            return Err(Error::InvalidModel(
                "component covariance is not positive definite".into(),
            ));
        }
        Ok(Self { weight, mean, cov })
    }

    /// Density value `weight * N(x; mean, cov)`.
    pub fn eval(&self, x: &DVector<S>) -> S {
        self.weight * gaussian_pdf(x, &self.mean, &self.cov)
    }
}

/// Weighted sum of Gaussian components; the numerical carrier for
/// intensities and birth densities. May be empty (mass zero).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianMixture<S: Scalar> {
    pub components: Vec<GaussianComponent<S>>,
}

impl<S: Scalar> GaussianMixture<S> {
    pub fn new(components: Vec<GaussianComponent<S>>) -> Self {
        Self { components }
    }

    pub fn empty() -> Self {
        Self { components: vec![] }
    }

    /// Total mass `D[1]`, the sum of the component weights.
    pub fn mass(&self) -> S {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Pointwise intensity value at `x`.
    pub fn eval(&self, x: &DVector<S>) -> Result<S> {
        for c in &self.components {
            if c.mean.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: c.mean.len(),
                    got: x.len(),
                });
            }
        }
        Ok(self.components.iter().map(|c| c.eval(x)).sum())
    }

    pub fn scaled(&self, factor: S) -> Self {
        Self {
            components: self
                .components
                .iter()
                .map(|c| GaussianComponent {
                    weight: c.weight * factor,
                    mean: c.mean.clone(),
                    cov: c.cov.clone(),
                })
                .collect(),
        }
    }

    pub fn merged_with(&self, other: &Self) -> Self {
        let mut components = self.components.clone();
        components.extend(other.components.iter().cloned());
        Self { components }
    }

    /// Mixture hygiene: prune weights below `prune_threshold`, merge
    /// components closer than `merge_distance` (squared Mahalanobis), keep at
    /// most `max_components`. Merging is mass-exact; capping rescales the
    /// survivors so that post-prune mass is preserved.
    pub fn reduce(&self, prune_threshold: S, merge_distance: S, max_components: usize) -> Self {
        let mut pool: Vec<GaussianComponent<S>> = self
            .components
            .iter()
            .filter(|c| c.weight >= prune_threshold)
            .cloned()
            .collect();
        let mass_after_prune: S = pool.iter().map(|c| c.weight).sum();

        let mut merged: Vec<GaussianComponent<S>> = Vec::new();
        while !pool.is_empty() {
            let lead = pool
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.weight.partial_cmp(&b.1.weight).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            let lead = pool.swap_remove(lead);
            let inv = lead
                .cov
                .clone()
                .try_inverse()
                .unwrap_or_else(|| DMatrix::identity(lead.mean.len(), lead.mean.len()));
            let (near, far): (Vec<_>, Vec<_>) = pool.into_iter().partition(|c| {
                let d = &c.mean - &lead.mean;
                (&inv * &d).dot(&d) <= merge_distance
            });
            pool = far;

            if near.is_empty() {
                merged.push(lead);
                continue;
            }
            let mut w = lead.weight;
            let mut mean = lead.mean.clone() * lead.weight;
            for c in &near {
                w += c.weight;
                mean += c.mean.clone() * c.weight;
            }
            mean /= w;
            let mut cov = DMatrix::zeros(mean.len(), mean.len());
            for c in std::iter::once(&lead).chain(near.iter()) {
                let d = &c.mean - &mean;
                cov += (c.cov.clone() + &d * d.transpose()) * c.weight;
            }
            cov /= w;
            merged.push(GaussianComponent {
                weight: w,
                mean,
                cov: symmetrize(&cov),
            });
        }

        merged.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap());
        if merged.len() > max_components {
            let kept_mass: S = merged[..max_components].iter().map(|c| c.weight).sum();
            merged.truncate(max_components);
            if kept_mass > S::zero() {
                let rescale = mass_after_prune / kept_mass;
                for c in &mut merged {
                    c.weight *= rescale;
                }
            }
        }
        Self { components: merged }
    }
}

/// Linear-Gaussian motion: `x_k = F x_{k-1} + w`, `w ~ N(0, Q)`, with a
/// constant survival probability.
#[derive(Debug, Clone)]
pub struct MotionModel<S: Scalar> {
    pub transition: DMatrix<S>,
    pub process_noise: DMatrix<S>,
    pub p_survive: S,
}

/// Linear-Gaussian measurement: `z = H x + v`, `v ~ N(0, R)`, with a constant
/// detection probability.
#[derive(Debug, Clone)]
pub struct MeasurementModel<S: Scalar> {
    pub observation: DMatrix<S>,
    pub noise: DMatrix<S>,
    pub p_detect: S,
}

/// Poisson clutter with rate `lambda` and uniform spatial density over an
/// axis-aligned box region.
#[derive(Debug, Clone)]
pub struct ClutterModel<S: Scalar> {
    pub rate: S,
    pub region: Vec<(S, S)>,
}

impl<S: Scalar> ClutterModel<S> {
    pub fn volume(&self) -> S {
        self.region
            .iter()
            .fold(S::one(), |acc, &(lo, hi)| acc * (hi - lo))
    }

    /// Spatial density `c(z)`: uniform over the region, zero outside.
    pub fn spatial(&self, z: &DVector<S>) -> S {
        let inside = self
            .region
            .iter()
            .zip(z.iter())
            .all(|(&(lo, hi), &v)| v >= lo && v <= hi);
        if inside {
            S::one() / self.volume()
        } else {
            S::zero()
        }
    }

    /// Clutter intensity `kappa(z) = lambda * c(z)`.
    pub fn intensity(&self, z: &DVector<S>) -> S {
        self.rate * self.spatial(z)
    }

    /// Poisson multi-object density of a whole clutter scan:
    /// `exp(-lambda) * prod_z lambda c(z)`; `exp(-lambda)` for the empty set.
    pub fn set_density(&self, scan: &[DVector<S>]) -> S {
        let mut v = (-self.rate).exp();
        for z in scan {
            v *= self.intensity(z);
        }
        v
    }
}

/// Full statistical model for continuous-state scenarios: motion,
/// measurement, clutter, and the Poisson birth intensity.
#[derive(Debug, Clone)]
pub struct ScenarioModel<S: Scalar> {
    pub motion: MotionModel<S>,
    pub measurement: MeasurementModel<S>,
    pub clutter: ClutterModel<S>,
    pub birth: GaussianMixture<S>,
    pub state_dim: usize,
    pub meas_dim: usize,
}

impl<S: Scalar> ScenarioModel<S> {
    /// Checks dimensional consistency across F, Q, H, R, the birth
    /// components, and the clutter region.
    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim;
        let m = self.meas_dim;
        let dims = [
            (self.motion.transition.shape(), (n, n), "F"),
            (self.motion.process_noise.shape(), (n, n), "Q"),
            (self.measurement.observation.shape(), (m, n), "H"),
            (self.measurement.noise.shape(), (m, m), "R"),
        ];
        for (got, want, name) in dims {
            if got != want {
                return Err(Error::InvalidModel(format!(
                    "{name} has shape {got:?}, expected {want:?}"
                )));
            }
        }
        for c in &self.birth.components {
            if c.mean.len() != n || c.cov.shape() != (n, n) {
                return Err(Error::InvalidModel("birth component dimension".into()));
            }
        }
        if self.clutter.region.len() != m {
            return Err(Error::InvalidModel("clutter region dimension".into()));
        }
        let unit = |v: S, name: &str| {
            if v < S::zero() || v > S::one() {
                Err(Error::InvalidModel(format!("{name} outside [0,1]")))
            } else {
                Ok(())
            }
        };
        unit(self.motion.p_survive, "p_s")?;
        unit(self.measurement.p_detect, "p_d")?;
        if self.clutter.rate < S::zero() {
            return Err(Error::InvalidModel("negative clutter rate".into()));
        }
        Ok(())
    }

    /// Measurement likelihood `L_z(x) = N(z; Hx, R)`.
    pub fn likelihood(&self, z: &DVector<S>, x: &DVector<S>) -> S {
        let mean = &self.measurement.observation * x;
        gaussian_pdf(z, &mean, &self.measurement.noise)
    }
}

/// Finite-grid counterpart of [`ScenarioModel`]: everything is a table over
/// small state and measurement grids. The substrate of the exact oracle and
/// the grid filters; per-point detection and survival profiles are allowed
/// here.
#[derive(Debug, Clone)]
pub struct FiniteModel<S: Scalar> {
    pub state_labels: Vec<String>,
    pub meas_labels: Vec<String>,
    /// `p_d[x]`, detection probability per state point.
    pub p_d: Vec<S>,
    /// `p_s[x]`, survival probability per state point.
    pub p_s: Vec<S>,
    /// `likelihood[x][z] = f(z|x)`; rows sum to one.
    pub likelihood: Vec<Vec<S>>,
    /// `markov[x_prev][x]`; rows sum to one.
    pub markov: Vec<Vec<S>>,
    /// Expected clutter count per scan.
    pub clutter_rate: S,
    /// `c[z]`, clutter spatial table; sums to one, strictly positive whenever
    /// the rate is positive (the closed forms divide by `kappa(z)`).
    pub clutter_spatial: Vec<S>,
    /// Per-point birth intensity (each entry at most one).
    pub birth: Vec<S>,
}

impl<S: Scalar> FiniteModel<S> {
    pub fn n_states(&self) -> usize {
        self.p_d.len()
    }

    pub fn n_meas(&self) -> usize {
        self.clutter_spatial.len()
    }

    pub fn kappa(&self, z: usize) -> S {
        self.clutter_rate * self.clutter_spatial[z]
    }

    /// Poisson set density of a clutter scan (indices; repeats allowed).
    pub fn clutter_set_density(&self, scan: &[usize]) -> S {
        let mut v = (-self.clutter_rate).exp();
        for &z in scan {
            v *= self.kappa(z);
        }
        v
    }

    /// Row-normalizes stochastic tables and checks model consistency. Rows
    /// further than 1e-9 away from unit mass are rejected rather than fixed.
    pub fn validate_and_normalize(&mut self) -> Result<()> {
        let n = self.n_states();
        let m = self.n_meas();
        if self.p_s.len() != n
            || self.likelihood.len() != n
            || self.markov.len() != n
            || self.birth.len() != n
        {
            return Err(Error::InvalidModel("state table lengths disagree".into()));
        }
        if self.state_labels.len() != n || self.meas_labels.len() != m {
            return Err(Error::InvalidModel("label lengths disagree".into()));
        }
        let tol = real::<S>(1e-9);
        let renorm = |row: &mut Vec<S>, len: usize, name: &str| -> Result<()> {
            if row.len() != len {
                return Err(Error::InvalidModel(format!("{name} row length")));
            }
            let sum: S = row.iter().copied().sum();
            if (sum - S::one()).abs() > tol {
                return Err(Error::InvalidModel(format!(
                    "{name} row mass {} is not 1 within 1e-9",
                    sum.to_f64().unwrap_or(f64::NAN)
                )));
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
            Ok(())
        };
        for row in &mut self.likelihood {
            renorm(row, m, "likelihood")?;
        }
        for row in &mut self.markov {
            renorm(row, n, "markov")?;
        }
        renorm(&mut self.clutter_spatial, m, "clutter spatial")?;
        if self.clutter_rate < S::zero() {
            return Err(Error::InvalidModel("negative clutter rate".into()));
        }
        if self.clutter_rate > S::zero() && self.clutter_spatial.iter().any(|&c| c <= S::zero()) {
            return Err(Error::InvalidModel(
                "clutter spatial density must be strictly positive on the grid".into(),
            ));
        }
        for &v in self.p_d.iter().chain(self.p_s.iter()) {
            if v < S::zero() || v > S::one() {
                return Err(Error::InvalidModel("probability outside [0,1]".into()));
            }
        }
        if self.birth.iter().any(|&b| b < S::zero() || b > S::one()) {
            return Err(Error::InvalidModel(
                "per-point birth intensity outside [0,1]".into(),
            ));
        }
        Ok(())
    }
}

/// `(A + A^T) / 2`; applied after every covariance update to stop asymmetry
/// drift.
pub fn symmetrize<S: Scalar>(a: &DMatrix<S>) -> DMatrix<S> {
    (a + a.transpose()) * real::<S>(0.5)
}

/// Multivariate normal density `N(x; mean, cov)` via Cholesky.
pub fn gaussian_pdf<S: Scalar>(x: &DVector<S>, mean: &DVector<S>, cov: &DMatrix<S>) -> S {
    let chol = Cholesky::new(cov.clone()).expect("covariance must be positive definite");
    let d = x - mean;
    let solved = chol.solve(&d);
    let quad = d.dot(&solved);
    let dim = real::<S>(x.len() as f64);
    let log_det: S = chol.l().diagonal().iter().map(|&v| v.ln()).sum::<S>() * real::<S>(2.0);
    let log_norm = -(dim * real::<S>(std::f64::consts::TAU).ln() + log_det) * real::<S>(0.5);
    (log_norm - quad * real::<S>(0.5)).exp()
}

/// Scenario file schema (continuous mode). Matrices are row-major nested
/// arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub state_dim: usize,
    pub meas_dim: usize,
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    pub p_d: f64,
    pub p_s: f64,
    pub clutter: ClutterFile,
    pub birth: Vec<BirthComponentFile>,
    pub steps: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterConfigFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClutterFile {
    pub rate: f64,
    pub region: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BirthComponentFile {
    pub w: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// Mixture-reduction settings carried inside a scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterConfigFile {
    pub kind: String,
    #[serde(default = "default_prune")]
    pub prune: f64,
    #[serde(default = "default_merge")]
    pub merge: f64,
    #[serde(default = "default_max_components")]
    pub max_components: usize,
}

fn default_prune() -> f64 {
    1e-5
}
fn default_merge() -> f64 {
    4.0
}
fn default_max_components() -> usize {
    100
}

impl ScenarioFile {
    pub fn to_model<S: Scalar>(&self) -> Result<ScenarioModel<S>> {
        let mat = |rows: &Vec<Vec<f64>>, name: &str| -> Result<DMatrix<S>> {
            let nr = rows.len();
            let nc = rows.first().map(|r| r.len()).unwrap_or(0);
            if rows.iter().any(|r| r.len() != nc) {
                return Err(Error::InvalidModel(format!("{name} rows are ragged")));
            }
            Ok(DMatrix::from_fn(nr, nc, |i, j| real(rows[i][j])))
        };
        let birth = GaussianMixture::new(
            self.birth
                .iter()
                .map(|b| {
                    GaussianComponent::new(
                        real(b.w),
                        DVector::from_iterator(b.mean.len(), b.mean.iter().map(|&v| real(v))),
                        mat(&b.cov, "birth cov")?,
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        );
        let model = ScenarioModel {
            motion: MotionModel {
                transition: mat(&self.f, "F")?,
                process_noise: mat(&self.q, "Q")?,
                p_survive: real(self.p_s),
            },
            measurement: MeasurementModel {
                observation: mat(&self.h, "H")?,
                noise: mat(&self.r, "R")?,
                p_detect: real(self.p_d),
            },
            clutter: ClutterModel {
                rate: real(self.clutter.rate),
                region: self
                    .clutter
                    .region
                    .iter()
                    .map(|&[lo, hi]| (real(lo), real(hi)))
                    .collect(),
            },
            birth,
            state_dim: self.state_dim,
            meas_dim: self.meas_dim,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Finite-grid scenario file schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteScenarioFile {
    pub state_points: Vec<String>,
    pub meas_points: Vec<String>,
    pub p_d: Vec<f64>,
    #[serde(default)]
    pub p_s: Option<Vec<f64>>,
    pub likelihood: Vec<Vec<f64>>,
    pub markov: Vec<Vec<f64>>,
    pub clutter: FiniteClutterFile,
    /// Prior over base grid points; loaded as an all-undetected tagged prior.
    pub prior: Vec<f64>,
    #[serde(default)]
    pub birth: Option<Vec<f64>>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_steps() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteClutterFile {
    pub rate: f64,
    pub spatial: Vec<f64>,
}

impl FiniteScenarioFile {
    pub fn to_model<S: Scalar>(&self) -> Result<FiniteModel<S>> {
        let n = self.state_points.len();
        let to_vec = |v: &Vec<f64>| v.iter().map(|&x| real(x)).collect::<Vec<S>>();
        let mut model = FiniteModel {
            state_labels: self.state_points.clone(),
            meas_labels: self.meas_points.clone(),
            p_d: to_vec(&self.p_d),
            p_s: self
                .p_s
                .as_ref()
                .map(to_vec)
                .unwrap_or_else(|| vec![S::one(); n]),
            likelihood: self.likelihood.iter().map(to_vec).collect(),
            markov: self.markov.iter().map(to_vec).collect(),
            clutter_rate: real(self.clutter.rate),
            clutter_spatial: to_vec(&self.clutter.spatial),
            birth: self
                .birth
                .as_ref()
                .map(to_vec)
                .unwrap_or_else(|| vec![S::zero(); n]),
        };
        model.validate_and_normalize()?;
        if self.prior.len() != n {
            return Err(Error::InvalidModel("prior length".into()));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dv(vals: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(vals)
    }

    fn unit_component(w: f64, mean: &[f64]) -> GaussianComponent<f64> {
        GaussianComponent::new(w, dv(mean), DMatrix::identity(mean.len(), mean.len())).unwrap()
    }

    #[test]
    fn mass_of_empty_mixture_is_zero() {
        assert_eq!(GaussianMixture::<f64>::empty().mass(), 0.0);
    }

    #[test]
    fn mass_sums_weights() {
        let gm = GaussianMixture::new(vec![unit_component(0.7, &[0.0])]);
        assert_relative_eq!(gm.mass(), 0.7);
        let gm = GaussianMixture::new(vec![
            unit_component(0.5, &[0.0]),
            unit_component(1.9, &[1.0]),
        ]);
        assert_relative_eq!(gm.mass(), 2.4);
    }

    #[test]
    fn eval_empty_is_zero() {
        assert_eq!(
            GaussianMixture::<f64>::empty().eval(&dv(&[0.3])).unwrap(),
            0.0
        );
    }

    #[test]
    fn eval_standard_normal_at_origin() {
        let gm = GaussianMixture::new(vec![unit_component(1.0, &[0.0])]);
        assert_relative_eq!(
            gm.eval(&dv(&[0.0])).unwrap(),
            1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn eval_convex_split_matches_unit_component() {
        let whole = GaussianMixture::new(vec![unit_component(1.0, &[0.2])]);
        let split = GaussianMixture::new(vec![
            unit_component(0.3, &[0.2]),
            unit_component(0.7, &[0.2]),
        ]);
        let x = dv(&[-0.4]);
        assert_relative_eq!(
            split.eval(&x).unwrap(),
            whole.eval(&x).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn eval_rejects_dimension_mismatch() {
        let gm = GaussianMixture::new(vec![unit_component(1.0, &[0.0, 0.0])]);
        assert!(matches!(
            gm.eval(&dv(&[0.0])),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn reduce_prunes_below_threshold() {
        let gm = GaussianMixture::new(vec![unit_component(1e-6, &[0.0])]);
        assert!(gm.reduce(1e-3, 4.0, 10).components.is_empty());
    }

    #[test]
    fn reduce_merges_coincident_components_exactly() {
        let gm = GaussianMixture::new(vec![
            unit_component(0.4, &[1.0]),
            unit_component(0.6, &[1.0]),
        ]);
        let out = gm.reduce(0.0, 1e-9, 10);
        assert_eq!(out.components.len(), 1);
        assert_relative_eq!(out.components[0].weight, 1.0, max_relative = 1e-12);
        assert_relative_eq!(out.components[0].mean[0], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn reduce_cap_keeps_largest_weights() {
        let comps: Vec<_> = (0..10)
            .map(|i| unit_component(0.1 * (i + 1) as f64, &[10.0 * i as f64]))
            .collect();
        let gm = GaussianMixture::new(comps);
        let out = gm.reduce(0.0, 0.01, 5);
        assert_eq!(out.components.len(), 5);
        // The five largest weights survive (rescaled by a common factor).
        let mut kept: Vec<f64> = out.components.iter().map(|c| c.mean[0]).collect();
        kept.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(kept, vec![50.0, 60.0, 70.0, 80.0, 90.0]);
        assert_relative_eq!(out.mass(), gm.mass(), max_relative = 1e-12);
    }

    #[test]
    fn clutter_set_density_cases() {
        let cl = ClutterModel::<f64> {
            rate: 2.0,
            region: vec![(0.0, 1.0)],
        };
        assert_relative_eq!(cl.set_density(&[]), (-2.0f64).exp());

        let zero = ClutterModel::<f64> {
            rate: 0.0,
            region: vec![(0.0, 1.0)],
        };
        assert_eq!(zero.set_density(&[dv(&[0.5])]), 0.0);
    }

    #[test]
    fn clutter_set_density_matches_grid_analog() {
        // lambda = 1, uniform density over a 4-point grid, one measurement.
        let m = grid_model(4);
        assert_relative_eq!(
            m.clutter_set_density(&[0]),
            (-1.0f64).exp() * 0.25,
            max_relative = 1e-12
        );
    }

    fn grid_model(n_meas: usize) -> FiniteModel<f64> {
        let mut m = FiniteModel {
            state_labels: vec!["a".into()],
            meas_labels: (0..n_meas).map(|i| format!("z{i}")).collect(),
            p_d: vec![0.5],
            p_s: vec![1.0],
            likelihood: vec![vec![1.0 / n_meas as f64; n_meas]],
            markov: vec![vec![1.0]],
            clutter_rate: 1.0,
            clutter_spatial: vec![1.0 / n_meas as f64; n_meas],
            birth: vec![0.0],
        };
        m.validate_and_normalize().unwrap();
        m
    }

    #[test]
    fn grid_clutter_mass_sums_to_one_within_poisson_tail() {
        // Set integral of the clutter scan density over scans of bounded
        // size; the gap to one is exactly the Poisson tail.
        let m = grid_model(3);
        let cap = 12usize;
        let mut total = 0.0;
        let mut scan: Vec<usize> = Vec::new();
        // Multisets of grid points, counted with the 1/prod(multiplicity!)
        // weight that the set integral assigns to unordered scans.
        fn accumulate(
            m: &FiniteModel<f64>,
            scan: &mut Vec<usize>,
            next: usize,
            cap: usize,
            total: &mut f64,
        ) {
            let mut mult = 1.0;
            let mut counts = [0usize; 8];
            for &z in scan.iter() {
                counts[z] += 1;
                mult *= counts[z] as f64;
            }
            *total += m.clutter_set_density(scan) / mult;
            if scan.len() == cap {
                return;
            }
            for z in next..m.n_meas() {
                scan.push(z);
                accumulate(m, scan, z, cap, total);
                scan.pop();
            }
        }
        accumulate(&m, &mut scan, 0, cap, &mut total);
        let tail: f64 = (0..=cap)
            .map(|k| {
                let mut term = (-1.0f64).exp();
                for j in 1..=k {
                    term *= 1.0 / j as f64;
                }
                term
            })
            .sum::<f64>();
        assert_relative_eq!(total, tail, max_relative = 1e-12);
        assert!((total - 1.0).abs() < 1e-9, "tail bound at cap 12");
    }

    #[test]
    fn scenario_file_round_trip_and_validation() {
        let file = ScenarioFile {
            state_dim: 2,
            meas_dim: 1,
            f: vec![vec![1.0, 1.0], vec![0.0, 1.0]],
            q: vec![vec![0.1, 0.0], vec![0.0, 0.1]],
            h: vec![vec![1.0, 0.0]],
            r: vec![vec![0.5]],
            p_d: 0.9,
            p_s: 0.95,
            clutter: ClutterFile {
                rate: 2.0,
                region: vec![[-10.0, 10.0]],
            },
            birth: vec![BirthComponentFile {
                w: 0.1,
                mean: vec![0.0, 0.0],
                cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            }],
            steps: 5,
            seed: 7,
            filter: None,
        };
        let model: ScenarioModel<f64> = file.to_model().unwrap();
        assert_eq!(model.state_dim, 2);

        let mut bad = file;
        bad.h = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(bad.to_model::<f64>().is_err());
    }

    #[test]
    fn ud_tag_partitions_tagged_space() {
        for o in [UDTag::Undetected, UDTag::Detected] {
            let in_d = u32::from(o.is_detected());
            let in_u = u32::from(!o.is_detected());
            assert_eq!(in_d + in_u, 1);
        }
    }

    proptest! {
        // Reduction never increases mass, and preserves it exactly (up to
        // rounding) when nothing is pruned.
        #[test]
        fn reduce_mass_contract(
            weights in proptest::collection::vec(0.01f64..2.0, 1..8),
            merge in 0.0f64..10.0,
            cap in 1usize..8,
        ) {
            let gm = GaussianMixture::new(
                weights.iter().enumerate().map(|(i, &w)| unit_component(w, &[i as f64 * 3.0])).collect(),
            );
            let v = gm.reduce(0.0, merge, cap);
            prop_assert!(v.mass() <= gm.mass() * (1.0 + 1e-9));
            prop_assert!((v.mass() - gm.mass()).abs() <= gm.mass() * 1e-9);

            let pruned = gm.reduce(0.5, merge, cap);
            prop_assert!(pruned.mass() <= gm.mass() * (1.0 + 1e-9));
        }
    }
}
