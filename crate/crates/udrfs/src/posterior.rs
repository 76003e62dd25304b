//! Closed-form multi-object posteriors on finite grids, evaluated exactly:
//! the standard association-sum measurement density, its perfect-detection
//! restriction, the Bayes posterior, and the detected/undetected posterior
//! splits for both the static and the dynamic tagging model.

use crate::model::FiniteModel;
use crate::oracle::{
    density_from_functional, mask_len, mask_points, FiniteSpace, Mask, SetDensity, TaggedLayout,
    TestFunction,
};
use crate::{Error, Result, Scalar};

/// Hard bound on exact association enumeration; larger inputs are rejected
/// rather than approximated.
pub const MAX_ASSOCIATION_SIZE: usize = 4;

fn check_sizes(n_targets: usize, n_meas: usize) -> Result<()> {
    if n_targets > MAX_ASSOCIATION_SIZE {
        return Err(Error::EnumerationBound {
            what: "target set",
            limit: MAX_ASSOCIATION_SIZE,
            got: n_targets,
        });
    }
    if n_meas > 3 * MAX_ASSOCIATION_SIZE {
        return Err(Error::EnumerationBound {
            what: "measurement set",
            limit: 3 * MAX_ASSOCIATION_SIZE,
            got: n_meas,
        });
    }
    Ok(())
}

/// Enumerates measurement-to-track associations: maps from target slots to
/// `0` (missed) or a measurement slot `1..=m`, injective on the positives.
fn for_each_association(n: usize, m: usize, mut f: impl FnMut(&[usize])) {
    fn rec(
        slot: usize,
        n: usize,
        m: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]),
    ) {
        if slot == n {
            f(cur);
            return;
        }
        cur.push(0);
        rec(slot + 1, n, m, used, cur, f);
        cur.pop();
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                cur.push(j + 1);
                rec(slot + 1, n, m, used, cur, f);
                cur.pop();
                used[j] = false;
            }
        }
    }
    rec(0, n, m, &mut vec![false; m], &mut Vec::new(), &mut f);
}

/// Standard multi-object measurement density `f(Z|X)` for independent
/// detections with Poisson clutter: an exhaustive sum over associations.
///
/// `xs` are state-grid indices (a set), `zs` measurement-grid indices (a
/// scan; repeats allowed).
pub fn standard_meas_density<S: Scalar>(
    model: &FiniteModel<S>,
    xs: &[usize],
    zs: &[usize],
) -> Result<S> {
    check_sizes(xs.len(), zs.len())?;
    // Division-free association terms: each target-generated measurement
    // cancels one clutter-intensity factor of the scan product, so the
    // clutter weight is paid only for the unassociated measurements. This
    // also gives the formula its natural value when some kappa(z) is zero.
    let mut total = S::zero();
    for_each_association(xs.len(), zs.len(), |assoc| {
        let mut term = S::one();
        for (i, &a) in assoc.iter().enumerate() {
            let x = xs[i];
            if a == 0 {
                term *= S::one() - model.p_d[x];
            } else {
                term *= model.p_d[x] * model.likelihood[x][zs[a - 1]];
            }
        }
        for (j, &z) in zs.iter().enumerate() {
            if !assoc.contains(&(j + 1)) {
                term *= model.kappa(z);
            }
        }
        total += term;
    });
    Ok((-model.clutter_rate).exp() * total)
}

/// Perfect-detection measurement density: `f(Z|X)` with every target forced
/// to be detected, a sum over one-to-one maps from targets into the scan.
/// Zero when there are more targets than measurements.
pub fn fstar<S: Scalar>(model: &FiniteModel<S>, xs: &[usize], zs: &[usize]) -> Result<S> {
    check_sizes(xs.len(), zs.len())?;
    if xs.len() > zs.len() {
        return Ok(S::zero());
    }
    let mut total = S::zero();
    for_each_association(xs.len(), zs.len(), |assoc| {
        if assoc.contains(&0) {
            return;
        }
        let mut term = S::one();
        for (i, &a) in assoc.iter().enumerate() {
            term *= model.likelihood[xs[i]][zs[a - 1]];
        }
        for (j, &z) in zs.iter().enumerate() {
            if !assoc.contains(&(j + 1)) {
                term *= model.kappa(z);
            }
        }
        total += term;
    });
    Ok((-model.clutter_rate).exp() * total)
}

/// Equal-cardinality building block of [`fstar`]: the permanent of the
/// likelihood ratios over a scan the same size as the target set, weighted by
/// the Poisson density of that scan.
pub fn fstar_no_clutter<S: Scalar>(
    model: &FiniteModel<S>,
    xs: &[usize],
    ws: &[usize],
) -> Result<S> {
    if xs.len() != ws.len() {
        return Err(Error::InvalidModel(
            "equal-cardinality density needs |W| = |X|".into(),
        ));
    }
    check_sizes(xs.len(), ws.len())?;
    // Every scan point is target-generated, so the clutter-intensity factors
    // cancel completely: this is the permanent of the likelihood block.
    let mut total = S::zero();
    for_each_association(xs.len(), ws.len(), |assoc| {
        if assoc.contains(&0) {
            return;
        }
        let mut term = S::one();
        for (i, &a) in assoc.iter().enumerate() {
            term *= model.likelihood[xs[i]][ws[a - 1]];
        }
        total += term;
    });
    Ok((-model.clutter_rate).exp() * total)
}

fn mask_vec(mask: Mask) -> Vec<usize> {
    mask_points(mask).collect()
}

/// Single-scan Bayes posterior: pointwise product of the association-sum
/// likelihood with the prior, renormalized over the capped lattice.
pub fn bayes_posterior<S: Scalar>(
    model: &FiniteModel<S>,
    prior: &SetDensity<S>,
    zs: &[usize],
) -> Result<SetDensity<S>> {
    let mut post = SetDensity::zero(prior.space().clone());
    for mask in prior.space().subsets() {
        let xs = mask_vec(mask);
        let like = standard_meas_density(model, &xs, zs)?;
        post.set(mask, like * prior.value(mask));
    }
    post.normalized()
}

/// The three posteriors of the static detected/undetected split.
pub struct SudPosteriors<S: Scalar> {
    pub total: SetDensity<S>,
    pub detected: SetDensity<S>,
    pub undetected: SetDensity<S>,
}

/// Static-split posteriors over an untagged grid.
///
/// The total posterior is recovered from its generating functional
/// `G[h] ∝ sum_X f*(Z|X) (h p_D)^X dG_prior/dX [h p_D^c]` by exact
/// functional differentiation at `h = 0`. The detected density reads off the
/// same expression with the non-detection slot frozen
/// (`∝ f*(Z|X) p_D^X dG/dX [p_D^c]`); the undetected density is
/// `∝ (p_D^c)^X sum_Y f*(Z|Y) p_D^Y f_prior(Y ∪ X)` over detected sets `Y`
/// disjoint from `X`.
pub fn sud_posteriors<S: Scalar>(
    model: &FiniteModel<S>,
    prior: &SetDensity<S>,
    zs: &[usize],
) -> Result<SudPosteriors<S>> {
    let space = prior.space().clone();
    let n = space.len();
    let cap = space.cap();
    let m = zs.len();

    let p_d = TestFunction::probe(model.p_d.clone());
    let p_dc = p_d.complement();

    // f*(Z|X) for every lattice set within reach of the scan size.
    let mut fstar_table = vec![S::zero(); 1 << n];
    for mask in space.subsets() {
        if mask_len(mask) <= m {
            fstar_table[mask as usize] = fstar(model, &mask_vec(mask), zs)?;
        }
    }

    let total_functional = |h: &TestFunction<S>| -> S {
        let weighted = TestFunction::probe((0..n).map(|i| h.value(i) * p_dc.value(i)).collect());
        let mut acc = S::zero();
        for x in space.subsets() {
            if mask_len(x) > m {
                continue;
            }
            let fs = fstar_table[x as usize];
            if fs == S::zero() {
                continue;
            }
            let det: S = mask_points(x).map(|i| h.value(i) * p_d.value(i)).product();
            acc += fs
                * det
                * prior
                    .functional_derivative(x, &weighted)
                    .expect("lattice mask");
        }
        acc
    };
    let total = density_from_functional(&space, total_functional).normalized()?;

    let mut detected = SetDensity::zero(space.clone());
    for x in space.subsets() {
        if mask_len(x) > m {
            continue;
        }
        let fs = fstar_table[x as usize];
        let det = p_d.set_power(x);
        let tail = prior.functional_derivative(x, &p_dc)?;
        detected.set(x, fs * det * tail);
    }
    let detected = detected.normalized()?;

    let mut undetected = SetDensity::zero(space.clone());
    for x in space.subsets() {
        let miss = p_dc.set_power(x);
        if miss == S::zero() {
            undetected.set(x, S::zero());
            continue;
        }
        let rest = space.full_mask() & !x;
        let mut acc = S::zero();
        let mut y = rest;
        loop {
            if mask_len(y) <= m && mask_len(x | y) <= cap {
                let fs = fstar_table[y as usize];
                if fs != S::zero() {
                    acc += fs * p_d.set_power(y) * prior.value(x | y);
                }
            }
            if y == 0 {
                break;
            }
            y = (y - 1) & rest;
        }
        undetected.set(x, miss * acc);
    }
    let undetected = undetected.normalized()?;

    Ok(SudPosteriors {
        total,
        detected,
        undetected,
    })
}

/// The three posteriors of the dynamic detected/undetected model on a tagged
/// grid (aligned case: no birth, no death, no motion inside the update).
pub struct DudPosteriors<S: Scalar> {
    pub total: SetDensity<S>,
    pub detected: SetDensity<S>,
    pub undetected: SetDensity<S>,
}

/// Tagged posteriors of the dynamic model.
///
/// All three outputs are recovered from their generating-functional
/// expressions by exact differentiation at `h = 0`. Each functional has the
/// shape `sum_X f*(Z|X) B^X dG_prior/dX [A]` with the detection slot `B` and
/// non-detection slot `A` depending on the output:
///
/// * total:       `B = h|_1 p_D`, `A = h p_D^c`;
/// * detected:    `B = h|_1 p_D`, `A = h^D p_D^c`;
/// * undetected:  `B = p_D`,      `A = h^U p_D^c`.
///
/// A detected slot evaluated through `h|_1` is what flips the tag of a
/// freshly detected target: the posterior set carries the detected lift of
/// every associated target.
pub fn dud_posteriors<S: Scalar>(
    model: &FiniteModel<S>,
    layout: TaggedLayout,
    prior: &SetDensity<S>,
    zs: &[usize],
) -> Result<DudPosteriors<S>> {
    let space = prior.space().clone();
    let n_tagged = space.len();
    debug_assert_eq!(n_tagged, 2 * layout.base_n);
    let m = zs.len();

    // Tagged detection/miss profiles: tags are observationally identical.
    let p_d_tagged: Vec<S> = (0..n_tagged).map(|bit| model.p_d[bit / 2]).collect();
    let p_dc_tagged = TestFunction::probe(p_d_tagged.iter().map(|&v| S::one() - v).collect());

    let mut fstar_table = vec![S::zero(); 1 << n_tagged];
    for mask in space.subsets() {
        if mask_len(mask) <= m {
            let bases: Vec<usize> = mask_points(mask).map(|bit| bit / 2).collect();
            fstar_table[mask as usize] = fstar(model, &bases, zs)?;
        }
    }

    // Generic evaluator: detect_h decides whether the detection slot carries
    // h (evaluated at the detected lift) or is pure p_D; miss_form builds the
    // non-detection slot from h.
    let functional = |h: &TestFunction<S>,
                      detect_h: bool,
                      miss_form: &dyn Fn(&TestFunction<S>) -> TestFunction<S>|
     -> S {
        let a = miss_form(h).mul(&p_dc_tagged);
        let mut acc = S::zero();
        for x in space.subsets() {
            if mask_len(x) > m {
                continue;
            }
            let fs = fstar_table[x as usize];
            if fs == S::zero() {
                continue;
            }
            let mut det = S::one();
            for bit in mask_points(x) {
                let base = bit / 2;
                det *= p_d_tagged[bit];
                if detect_h {
                    det *= h.value(layout.bit(base, true));
                }
            }
            if det == S::zero() {
                continue;
            }
            acc += fs * det * prior.functional_derivative(x, &a).expect("lattice mask");
        }
        acc
    };

    let ident = |h: &TestFunction<S>| h.clone();
    let total = density_from_functional(&space, |h| functional(h, true, &ident)).normalized()?;
    let det_form = |h: &TestFunction<S>| h.detected_form(layout);
    let detected =
        density_from_functional(&space, |h| functional(h, true, &det_form)).normalized()?;
    let undet_form = |h: &TestFunction<S>| h.undetected_form(layout);
    let undetected =
        density_from_functional(&space, |h| functional(h, false, &undet_form)).normalized()?;

    Ok(DudPosteriors {
        total,
        detected,
        undetected,
    })
}

/// Exact one-step prediction of a multi-object density on the subset
/// lattice: independent per-target survival and Markov motion, plus
/// independent per-point appearance. Coinciding destinations collapse into
/// the union set. The output lives on the uncapped lattice of the same
/// space.
pub fn predict_density<S: Scalar>(model: &FiniteModel<S>, prior: &SetDensity<S>) -> SetDensity<S> {
    let n = model.n_states();
    let space = FiniteSpace::new(prior.space().labels().to_vec(), n).unwrap();
    let mut out = SetDensity::zero(space.clone());

    // Per-point appearance patterns and their probabilities.
    let mut birth_patterns: Vec<(Mask, S)> = Vec::new();
    for bmask in 0..=space.full_mask() {
        let mut p = S::one();
        for x in 0..n {
            let b = model.birth[x];
            p *= if bmask & (1 << x) != 0 {
                b
            } else {
                S::one() - b
            };
        }
        if p > S::zero() {
            birth_patterns.push((bmask, p));
        }
    }

    for t in prior.space().subsets() {
        let pt = prior.value(t);
        if pt == S::zero() {
            continue;
        }
        let targets = mask_vec(t);
        // Outcome per target: index 0 = death, 1 + x = move to point x.
        let mut outcomes = vec![0usize; targets.len()];
        loop {
            let mut prob = pt;
            let mut dest: Mask = 0;
            for (i, &t_pt) in targets.iter().enumerate() {
                let o = outcomes[i];
                if o == 0 {
                    prob *= S::one() - model.p_s[t_pt];
                } else {
                    prob *= model.p_s[t_pt] * model.markov[t_pt][o - 1];
                    dest |= 1 << (o - 1);
                }
            }
            if prob > S::zero() {
                for &(bmask, bp) in &birth_patterns {
                    let mask = dest | bmask;
                    out.set(mask, out.value(mask) + prob * bp);
                }
            }
            // Advance the mixed-radix outcome counter.
            let mut i = 0;
            loop {
                if i == targets.len() {
                    break;
                }
                outcomes[i] += 1;
                if outcomes[i] <= n {
                    break;
                }
                outcomes[i] = 0;
                i += 1;
            }
            if i == targets.len() {
                break;
            }
        }
    }
    out
}

/// Outcome of one parallelism identity check: the largest deviation between
/// the posterior functional and its claimed closed form over all indicator
/// test functions.
#[derive(Debug, Clone, Copy)]
pub struct ParallelismReport {
    pub max_err_total: f64,
    pub max_err_undetected: f64,
}

/// For a one-object (existence `q`, spatial density `s`) prior: the total
/// posterior stays one-object with spatial reweighting by the scan
/// pseudo-likelihood, and - contrary to the parallel-propagation claim - so
/// does the undetected posterior, with `L̂_Z + p_D^c (h - 1)` inside.
pub fn bernoulli_parallelism<S: Scalar>(
    model: &FiniteModel<S>,
    q: S,
    spatial: &[S],
    zs: &[usize],
) -> Result<ParallelismReport> {
    let n = model.n_states();
    let space = FiniteSpace::indexed(n, n);
    let mut prior = SetDensity::zero(space.clone());
    prior.set(0, S::one() - q);
    for (x, &s) in spatial.iter().enumerate() {
        prior.set(1 << x, q * s);
    }
    let post = sud_posteriors(model, &prior, zs)?;

    // Scan pseudo-likelihood per state: 1 - p_D + p_D sum_z L_z / kappa(z).
    let lhat: Vec<S> = (0..n)
        .map(|x| {
            let mut v = S::one() - model.p_d[x];
            for &z in zs {
                v += model.p_d[x] * model.likelihood[x][z] / model.kappa(z);
            }
            v
        })
        .collect();

    let norm: S = S::one() - q
        + q * spatial
            .iter()
            .enumerate()
            .map(|(x, &s)| s * lhat[x])
            .sum::<S>();
    if norm <= S::zero() {
        return Err(Error::MeasurementImpossible);
    }

    let mut max_err_total = 0.0f64;
    let mut max_err_u = 0.0f64;
    for ind in 0..=space.full_mask() {
        let h = TestFunction::indicator(n, ind);
        let lhs_total = post.total.pgfl(&h);
        let rhs_total = (S::one() - q
            + q * spatial
                .iter()
                .enumerate()
                .map(|(x, &s)| s * lhat[x] * h.value(x))
                .sum::<S>())
            / norm;
        let lhs_u = post.undetected.pgfl(&h);
        let rhs_u = (S::one() - q
            + q * spatial
                .iter()
                .enumerate()
                .map(|(x, &s)| s * (lhat[x] + (S::one() - model.p_d[x]) * (h.value(x) - S::one())))
                .sum::<S>())
            / norm;
        max_err_total = max_err_total.max(
            (lhs_total - rhs_total)
                .abs()
                .to_f64()
                .unwrap_or(f64::INFINITY),
        );
        max_err_u = max_err_u.max((lhs_u - rhs_u).abs().to_f64().unwrap_or(f64::INFINITY));
    }
    Ok(ParallelismReport {
        max_err_total,
        max_err_undetected: max_err_u,
    })
}

/// For an independent-point prior with small intensities (the simple-support
/// stand-in for a Poisson prior), the undetected posterior functional is
/// compared against `exp(D[p_D^c (h - 1)])`. The identity is exact in the
/// continuum; on the lattice its error is second order in the intensity
/// mass, so callers probe it with tiny intensities.
pub fn poisson_parallelism<S: Scalar>(
    model: &FiniteModel<S>,
    intensity: &[S],
    zs: &[usize],
) -> Result<f64> {
    let n = model.n_states();
    let space = FiniteSpace::indexed(n, n);
    let prior = SetDensity::from_fn(space.clone(), |mask| {
        mask_points(mask).map(|x| intensity[x]).product()
    })?
    .normalized()?;
    let post = sud_posteriors(model, &prior, zs)?;

    let mut max_err = 0.0f64;
    for ind in 0..=space.full_mask() {
        let h = TestFunction::indicator(n, ind);
        let lhs = post.undetected.pgfl(&h);
        let exponent: S = (0..n)
            .map(|x| intensity[x] * (S::one() - model.p_d[x]) * (h.value(x) - S::one()))
            .sum();
        let rhs = exponent.exp();
        max_err = max_err.max((lhs - rhs).abs().to_f64().unwrap_or(f64::INFINITY));
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::fixtures;
    use approx::assert_relative_eq;

    #[test]
    fn meas_density_pure_clutter_for_empty_target_set() {
        let m = fixtures::grid(2, 3);
        for zs in [vec![], vec![0], vec![0, 2]] {
            let got = standard_meas_density(&m, &[], &zs).unwrap();
            assert_relative_eq!(got, m.clutter_set_density(&zs), max_relative = 1e-14);
        }
    }

    #[test]
    fn meas_density_empty_scan_is_missed_detection() {
        let m = fixtures::grid(2, 3);
        let got = standard_meas_density(&m, &[1], &[]).unwrap();
        assert_relative_eq!(
            got,
            (-m.clutter_rate).exp() * (1.0 - m.p_d[1]),
            max_relative = 1e-14
        );
    }

    #[test]
    fn meas_density_one_target_two_meas_enumerates_three_associations() {
        let m = fixtures::grid(2, 3);
        let x = 0usize;
        let zs = [0usize, 2];
        let direct = standard_meas_density(&m, &[x], &zs).unwrap();
        let kappa_scan = m.clutter_set_density(&zs);
        let expect = kappa_scan
            * ((1.0 - m.p_d[x])
                + m.p_d[x] * m.likelihood[x][0] / m.kappa(0)
                + m.p_d[x] * m.likelihood[x][2] / m.kappa(2));
        assert_relative_eq!(direct, expect, max_relative = 1e-13);
    }

    #[test]
    fn fstar_zero_when_more_targets_than_measurements() {
        let m = fixtures::grid(3, 3);
        assert_eq!(fstar(&m, &[0, 1], &[0]).unwrap(), 0.0);
    }

    #[test]
    fn fstar_empty_target_set_is_clutter_density() {
        let m = fixtures::grid(2, 3);
        let zs = [1usize, 2];
        assert_relative_eq!(
            fstar(&m, &[], &zs).unwrap(),
            m.clutter_set_density(&zs),
            max_relative = 1e-14
        );
    }

    #[test]
    fn association_bound_is_enforced() {
        let m = fixtures::grid(2, 3);
        let xs = [0usize, 1, 0, 1, 0];
        assert!(matches!(
            standard_meas_density(&m, &xs, &[]),
            Err(Error::EnumerationBound { .. })
        ));
    }

    #[test]
    fn bayes_posterior_constant_likelihood_returns_prior() {
        // One state point: the likelihood cannot discriminate sets of equal
        // cardinality, so compare against the hand-normalized product.
        let m = fixtures::grid(1, 2);
        let space = FiniteSpace::indexed(1, 1);
        let mut prior = SetDensity::zero(space);
        prior.set(0b0, 0.25);
        prior.set(0b1, 0.75);
        let zs = [0usize];
        let post = bayes_posterior(&m, &prior, &zs).unwrap();
        let l0 = standard_meas_density(&m, &[], &zs).unwrap();
        let l1 = standard_meas_density(&m, &[0], &zs).unwrap();
        let norm = 0.25 * l0 + 0.75 * l1;
        assert_relative_eq!(post.value(0b0), 0.25 * l0 / norm, max_relative = 1e-12);
        assert_relative_eq!(post.value(0b1), 0.75 * l1 / norm, max_relative = 1e-12);
    }

    #[test]
    fn bayes_posterior_keeps_point_mass_prior() {
        let m = fixtures::grid(2, 3);
        let space = FiniteSpace::indexed(2, 2);
        let mut prior = SetDensity::zero(space);
        prior.set(0b01, 1.0);
        let post = bayes_posterior(&m, &prior, &[1]).unwrap();
        assert_relative_eq!(post.value(0b01), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn bayes_posterior_zero_normalizer_is_rejected() {
        let mut m = fixtures::grid(2, 3);
        m.p_d = vec![0.0; 2];
        m.clutter_rate = 0.0;
        let space = FiniteSpace::indexed(2, 2);
        let mut prior = SetDensity::zero(space);
        prior.set(0b01, 1.0);
        assert!(matches!(
            bayes_posterior(&m, &prior, &[1]),
            Err(Error::MeasurementImpossible)
        ));
    }

    #[test]
    fn sud_total_matches_bayes_posterior() {
        let m = fixtures::grid(2, 3);
        let prior = fixtures::untagged_prior(2, 2);
        let zs = [0usize];
        let sud = sud_posteriors(&m, &prior, &zs).unwrap();
        let bayes = bayes_posterior(&m, &prior, &zs).unwrap();
        for mask in prior.space().subsets() {
            assert_relative_eq!(sud.total.value(mask), bayes.value(mask), epsilon = 1e-13);
        }
    }

    #[test]
    fn sud_perfect_detection_kills_undetected_mass() {
        let mut m = fixtures::grid(2, 3);
        m.p_d = vec![1.0; 2];
        let prior = fixtures::untagged_prior(2, 2);
        let sud = sud_posteriors(&m, &prior, &[0, 1]).unwrap();
        for mask in prior.space().subsets() {
            if mask != 0 {
                assert_relative_eq!(sud.undetected.value(mask), 0.0, epsilon = 1e-13);
            }
        }
        assert_relative_eq!(sud.undetected.value(0), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn sud_blind_sensor_keeps_prior_as_undetected() {
        let mut m = fixtures::grid(2, 3);
        m.p_d = vec![0.0; 2];
        let prior = fixtures::untagged_prior(2, 2);
        let sud = sud_posteriors(&m, &prior, &[1]).unwrap();
        for mask in prior.space().subsets() {
            assert_relative_eq!(
                sud.undetected.value(mask),
                prior.value(mask),
                epsilon = 1e-12
            );
            if mask != 0 {
                assert_relative_eq!(sud.detected.value(mask), 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn scan_integral_of_meas_density_is_poisson_truncation_mass() {
        // For every target set, the measurement density integrates over
        // scans (multisets up to a budget) to one minus the Poisson tail.
        let mut m = fixtures::grid(2, 2);
        m.clutter_rate = 0.1;
        for xs in [vec![], vec![0], vec![0, 1]] {
            let mut total = 0.0;
            crate::jtf::for_each_scan::<f64>(2, 10, |scan, weight| {
                total += weight * standard_meas_density(&m, &xs, scan).unwrap();
            });
            // Tail bound: the scan exceeds the budget only if clutter fills
            // what detections leave, so the gap is at most the clutter tail
            // beyond budget - |X|.
            let lam: f64 = 0.1;
            let tail: f64 = 1.0
                - (0..=(10 - xs.len()))
                    .map(|k| {
                        lam.powi(k as i32) * (-lam).exp()
                            / (1..=k).map(|j| j as f64).product::<f64>()
                    })
                    .sum::<f64>();
            assert!(total <= 1.0 + 1e-12);
            assert!(
                1.0 - total <= tail + 1e-12,
                "gap {} tail {}",
                1.0 - total,
                tail
            );
        }
    }

    #[test]
    fn dud_detected_prior_with_empty_scan() {
        // A prior supported on the detected half with an empty scan: the
        // detected output equals the total, the undetected output sits on
        // the empty set.
        let m = fixtures::grid(2, 2);
        let layout = TaggedLayout::new(2);
        let space = layout.space(2);
        let mut prior = SetDensity::zero(space);
        let d0 = 1 << layout.bit(0, true);
        let d1 = 1 << layout.bit(1, true);
        prior.set(0, 0.3);
        prior.set(d0, 0.4);
        prior.set(d0 | d1, 0.3);
        let post = dud_posteriors(&m, layout, &prior, &[]).unwrap();
        for mask in post.total.space().subsets() {
            assert_relative_eq!(
                post.detected.value(mask),
                post.total.value(mask),
                epsilon = 1e-13
            );
        }
        assert_relative_eq!(post.undetected.value(0), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn dud_undetected_prior_perfect_detection_flips_all_tags() {
        // Undetected-only prior, certain detection, scan at least as large
        // as the largest prior set: the posterior lives on the detected
        // half.
        let mut m = fixtures::grid(2, 2);
        m.p_d = vec![1.0; 2];
        let layout = TaggedLayout::new(2);
        let space = layout.space(2);
        let mut prior = SetDensity::zero(space);
        let u0 = 1 << layout.bit(0, false);
        let u1 = 1 << layout.bit(1, false);
        prior.set(0, 0.2);
        prior.set(u0, 0.3);
        prior.set(u0 | u1, 0.5);
        let post = dud_posteriors(&m, layout, &prior, &[0, 1]).unwrap();
        let undetected_half = layout.undetected_mask();
        for mask in post.total.space().subsets() {
            if mask & undetected_half != 0 {
                assert_relative_eq!(post.total.value(mask), 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn predict_density_first_moment_is_linear_without_collisions() {
        // Identity motion keeps survivor destinations distinct and the birth
        // point is reserved, so the predicted first moment is exactly
        // birth + p_s-thinned prior moment.
        let mut m = fixtures::grid(3, 3);
        m.markov = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        m.p_s = vec![0.8, 0.7, 0.0];
        m.birth = vec![0.0, 0.0, 0.3];
        let space = FiniteSpace::indexed(3, 2);
        let mut prior = SetDensity::zero(space);
        prior.set(0b000, 0.2);
        prior.set(0b001, 0.3);
        prior.set(0b010, 0.1);
        prior.set(0b011, 0.4);
        let pred = predict_density(&m, &prior);
        assert_relative_eq!(pred.set_integral(), 1.0, epsilon = 1e-12);
        for x in 0..3 {
            let moment: f64 = pred
                .space()
                .subsets()
                .filter(|mask| mask & (1 << x) != 0)
                .map(|mask| pred.value(mask))
                .sum();
            let prior_moment: f64 = prior
                .space()
                .subsets()
                .filter(|mask| mask & (1 << x) != 0)
                .map(|mask| prior.value(mask))
                .sum();
            let expect = m.birth[x] + m.p_s[x] * prior_moment;
            assert_relative_eq!(moment, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn parallelism_blind_and_perfect_sensor_limits() {
        let mut perfect = fixtures::grid(2, 3);
        perfect.p_d = vec![1.0; 2];
        let space = FiniteSpace::indexed(2, 2);
        let mut prior = SetDensity::zero(space.clone());
        prior.set(0b00, 0.4);
        prior.set(0b01, 0.3);
        prior.set(0b10, 0.3);
        let post = sud_posteriors(&perfect, &prior, &[0]).unwrap();
        let one = TestFunction::constant(2, 1.0).unwrap();
        let zero = TestFunction::constant(2, 0.0).unwrap();
        // No undetected targets: the undetected functional is identically 1.
        assert_relative_eq!(post.undetected.pgfl(&one), 1.0, epsilon = 1e-12);
        assert_relative_eq!(post.undetected.pgfl(&zero), 1.0, epsilon = 1e-12);

        let mut blind = fixtures::grid(2, 3);
        blind.p_d = vec![0.0; 2];
        let post = sud_posteriors(&blind, &prior, &[0]).unwrap();
        for mask in prior.space().subsets() {
            assert_relative_eq!(
                post.undetected.value(mask),
                prior.value(mask),
                epsilon = 1e-12
            );
        }
    }
}
