//! Exact single-object filters: the tagged single-step grid filter (no
//! clutter, at most one measurement per scan) and the single-step
//! existence-weighted filters with clutter, in plain and tagged form.

use crate::jtf::{cjtf, nud_jtf};
use crate::model::FiniteModel;
use crate::phd::{IntensityBackend, UdIntensity};
use crate::{real, Error, Result, Scalar};

/// Posterior over a tagged grid, `values[2x + o]`, normalized to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedGridDensity<S: Scalar> {
    pub values: Vec<S>,
}

impl<S: Scalar> TaggedGridDensity<S> {
    pub fn uniform_undetected(n: usize) -> Self {
        let mut values = vec![S::zero(); 2 * n];
        for x in 0..n {
            values[2 * x] = S::one() / real::<S>(n as f64);
        }
        Self { values }
    }

    pub fn from_values(values: Vec<S>) -> Result<Self> {
        let sum: S = values.iter().copied().sum();
        if (sum - S::one()).abs() > real::<S>(1e-10) || values.iter().any(|&v| v < S::zero()) {
            return Err(Error::InvalidModel(
                "tagged grid density must be nonnegative with unit sum".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn value(&self, x: usize, o: u8) -> S {
        self.values[2 * x + o as usize]
    }

    pub fn n_states(&self) -> usize {
        self.values.len() / 2
    }

    /// Posterior dump, one `(point, o, mass)` row per tagged grid point.
    pub fn dump_csv(&self, labels: &[String]) -> String {
        let mut out = String::from("point,o,mass\n");
        for x in 0..self.n_states() {
            for o in [0u8, 1] {
                let v = self.value(x, o).to_f64().unwrap_or(f64::NAN) + 0.0;
                out.push_str(&format!("{},{o},{v:.9e}\n", labels[x]));
            }
        }
        out
    }

    /// Marginal over the tag.
    pub fn base_marginal(&self) -> Vec<S> {
        (0..self.n_states())
            .map(|x| self.value(x, 0) + self.value(x, 1))
            .collect()
    }

    pub fn tag_mass(&self, o: u8) -> S {
        (0..self.n_states()).map(|x| self.value(x, o)).sum()
    }
}

/// Result of one exact grid update; the normalizer is the per-step
/// predictive likelihood of the scan, kept for diagnostics.
pub struct GridStep<S: Scalar> {
    pub posterior: TaggedGridDensity<S>,
    pub normalizer: S,
}

/// One step of the tagged single-object filter: the posterior is the
/// tag-flipping kernel applied to the prior and renormalized. Empty or
/// singleton scans only; there is no clutter in this regime.
pub fn dud_single_step<S: Scalar>(
    model: &FiniteModel<S>,
    prior: &TaggedGridDensity<S>,
    scan: &[usize],
) -> Result<GridStep<S>> {
    if scan.len() > 1 {
        return Err(Error::InvalidModel(
            "single-object scans are empty or singleton".into(),
        ));
    }
    let n = model.n_states();
    let mut post = vec![S::zero(); 2 * n];
    for x in 0..n {
        for o in [0u8, 1] {
            let mut acc = S::zero();
            for xp in 0..n {
                for op in [0u8, 1] {
                    acc += nud_jtf(model, scan, x, o, xp, op) * prior.value(xp, op);
                }
            }
            post[2 * x + o as usize] = acc;
        }
    }
    let normalizer: S = post.iter().copied().sum();
    if normalizer <= S::zero() {
        return Err(Error::MeasurementImpossible);
    }
    for v in &mut post {
        *v /= normalizer;
    }
    Ok(GridStep {
        posterior: TaggedGridDensity { values: post },
        normalizer,
    })
}

/// The tag-free single-step filter with the conventional kernel; the tagged
/// filter marginalizes to this exactly.
pub fn untagged_single_step<S: Scalar>(
    model: &FiniteModel<S>,
    prior: &[S],
    scan: &[usize],
) -> Result<(Vec<S>, S)> {
    if scan.len() > 1 {
        return Err(Error::InvalidModel(
            "single-object scans are empty or singleton".into(),
        ));
    }
    let n = model.n_states();
    let mut post = vec![S::zero(); n];
    for (x, slot) in post.iter_mut().enumerate() {
        *slot = (0..n).map(|xp| cjtf(model, scan, x, xp) * prior[xp]).sum();
    }
    let normalizer: S = post.iter().copied().sum();
    if normalizer <= S::zero() {
        return Err(Error::MeasurementImpossible);
    }
    for v in &mut post {
        *v /= normalizer;
    }
    Ok((post, normalizer))
}

/// Existence-weighted single-object density: an intensity with total mass at
/// most one. The mass is the probability that the object exists.
#[derive(Debug, Clone)]
pub struct BernoulliState<I> {
    pub intensity: I,
}

/// Scan-likelihood reweighting `L̂_Z · a`: the missed-detection part plus one
/// clutter-normalized detection term per measurement.
fn scan_reweight<S: Scalar, B: IntensityBackend<S>>(
    b: &B,
    a: &B::Intensity,
    scan: &[B::Meas],
) -> B::Intensity {
    let mut out = b.miss_scale(a);
    for z in scan {
        let (num, _) = b.detect(a, z);
        out = b.add(&out, &b.scale(&num, S::one() / b.kappa(z)));
    }
    out
}

/// One step of the single-object filter with clutter.
///
/// Numerator: `L̂_Z(x) [ B(x)(1 - m) + (p_S-propagated prior)(x) ]`;
/// denominator: `(1 - B[1] + B[L̂_Z])(1 - m) + (m - prior[p_S]) +
/// (propagated prior)[L̂_Z]`, with `m` the prior mass. An empty prior with
/// no appearance mass and a nonempty scan is not an error: the scan is then
/// explained entirely as clutter and the posterior mass stays zero.
pub fn bernoulli_single_step<S: Scalar, B: IntensityBackend<S>>(
    b: &B,
    prior: &BernoulliState<B::Intensity>,
    scan: &[B::Meas],
    birth: &B::Intensity,
) -> Result<BernoulliState<B::Intensity>> {
    let prior_mass = b.mass(&prior.intensity);
    let birth_mass = b.mass(birth);
    let tol = real::<S>(1e-10);
    if prior_mass > S::one() + tol || birth_mass > S::one() + tol {
        return Err(Error::InvalidModel(
            "existence-weighted masses must stay at most one".into(),
        ));
    }
    for z in scan {
        if b.kappa(z) <= S::zero() {
            return Err(Error::InvalidModel(
                "clutter intensity must be positive at every measurement".into(),
            ));
        }
    }
    let complement = S::one() - prior_mass;
    let propagated = b.propagate(&prior.intensity);

    let num = scan_reweight(b, &b.add(&b.scale(birth, complement), &propagated), scan);
    let birth_reweighted = b.mass(&scan_reweight(b, birth, scan));
    let survived_reweighted = b.mass(&scan_reweight(b, &propagated, scan));
    let death_mass = prior_mass - b.survivor_mass(&prior.intensity);
    let den =
        (S::one() - birth_mass + birth_reweighted) * complement + death_mass + survived_reweighted;
    if den <= S::zero() {
        return Err(Error::MeasurementImpossible);
    }
    Ok(BernoulliState {
        intensity: b.scale(&num, S::one() / den),
    })
}

/// One step of the tagged single-object filter with clutter. Appearance mass
/// is undetected by construction; with a nonempty scan all surviving mass
/// comes out detected, with an empty scan each tag survives separately. The
/// tag-sum of the output equals the untagged update of the merged prior
/// exactly.
pub fn dud_bernoulli_single_step<S: Scalar, B: IntensityBackend<S>>(
    b: &B,
    prior: &BernoulliState<UdIntensity<B::Intensity>>,
    scan: &[B::Meas],
    birth: &B::Intensity,
) -> Result<BernoulliState<UdIntensity<B::Intensity>>> {
    let mass_d = b.mass(&prior.intensity.detected);
    let mass_u = b.mass(&prior.intensity.undetected);
    let prior_mass = mass_d + mass_u;
    let birth_mass = b.mass(birth);
    let tol = real::<S>(1e-10);
    if prior_mass > S::one() + tol || birth_mass > S::one() + tol {
        return Err(Error::InvalidModel(
            "existence-weighted masses must stay at most one".into(),
        ));
    }
    for z in scan {
        if b.kappa(z) <= S::zero() {
            return Err(Error::InvalidModel(
                "clutter intensity must be positive at every measurement".into(),
            ));
        }
    }
    let complement = S::one() - prior_mass;
    let prop_d = b.propagate(&prior.intensity.detected);
    let prop_u = b.propagate(&prior.intensity.undetected);

    let detected_src = if scan.is_empty() {
        prop_d.clone()
    } else {
        b.add(&prop_d, &prop_u)
    };
    let undetected_src = if scan.is_empty() {
        b.add(&b.scale(birth, complement), &prop_u)
    } else {
        b.scale(birth, complement)
    };
    let num_d = scan_reweight(b, &detected_src, scan);
    let num_u = scan_reweight(b, &undetected_src, scan);

    let birth_reweighted = b.mass(&scan_reweight(b, birth, scan));
    let merged_prop = b.add(&prop_d, &prop_u);
    let survived_reweighted = b.mass(&scan_reweight(b, &merged_prop, scan));
    let death_mass = prior_mass
        - b.survivor_mass(&prior.intensity.detected)
        - b.survivor_mass(&prior.intensity.undetected);
    let den =
        (S::one() - birth_mass + birth_reweighted) * complement + death_mass + survived_reweighted;
    if den <= S::zero() {
        return Err(Error::MeasurementImpossible);
    }
    let inv = S::one() / den;
    Ok(BernoulliState {
        intensity: UdIntensity {
            detected: b.scale(&num_d, inv),
            undetected: b.scale(&num_u, inv),
        },
    })
}

/// One record of a measurement stream: JSON lines, one object per step with
/// the scan as nested arrays.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeasurementStreamRecord {
    pub k: usize,
    pub measurements: Vec<Vec<f64>>,
}

pub fn write_measurement_stream(records: &[MeasurementStreamRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("stream record serializes"));
        out.push('\n');
    }
    out
}

pub fn read_measurement_stream(text: &str) -> Result<Vec<MeasurementStreamRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            serde_json::from_str(line)
                .map_err(|e| Error::InvalidModel(format!("measurement stream: {e}")))
        })
        .collect()
}
