//! Joint transition functions: the combined measurement-and-transition
//! kernels that drive the single-step filters.
//!
//! The conventional kernel factors into measurement density times Markov
//! density with tags carried through unchanged. The tag-flipping kernel
//! differs in exactly two entries: an undetected target that stays
//! undetected cannot have generated a measurement, and an undetected target
//! that generated one must come out detected. Everything here is evaluated
//! on finite grids, where the point-mass terms of the multi-target kernel
//! are ordinary Kronecker weights.

use crate::model::FiniteModel;
use crate::oracle::TestFunction;
use crate::posterior::MAX_ASSOCIATION_SIZE;
use crate::{Error, Result, Scalar};

/// The kernel variants implemented by this module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JtfKind {
    /// Measurement density times Markov density, untagged.
    Conventional,
    /// Conventional kernel with tags propagated unchanged.
    ConventionalUD,
    /// Tag-flipping kernel for the no-clutter single-object filter.
    NovelUD,
    /// Tag-flipping kernel built on the full clutter-bearing single-object
    /// scan density.
    BernoulliUD,
    /// Multi-object tag-flipping kernel under frozen kinematics.
    MultitargetAlignedUD,
}

impl JtfKind {
    pub fn name(self) -> &'static str {
        match self {
            JtfKind::Conventional => "conventional",
            JtfKind::ConventionalUD => "conventional-ud",
            JtfKind::NovelUD => "novel-ud",
            JtfKind::BernoulliUD => "bernoulli-ud",
            JtfKind::MultitargetAlignedUD => "multitarget-aligned-ud",
        }
    }

    /// Pointwise value for the one-object kinds; the untagged kind ignores
    /// the tags. `None` for the multi-object kind, whose arguments are sets.
    pub fn eval_single<S: Scalar>(
        self,
        model: &FiniteModel<S>,
        zs: &[usize],
        x: usize,
        o: u8,
        x_prev: usize,
        o_prev: u8,
    ) -> Option<S> {
        match self {
            JtfKind::Conventional => Some(cjtf(model, zs, x, x_prev)),
            JtfKind::ConventionalUD => Some(cud_jtf(model, zs, x, o, x_prev, o_prev)),
            JtfKind::NovelUD => Some(nud_jtf(model, zs, x, o, x_prev, o_prev)),
            JtfKind::BernoulliUD => Some(nud_jtf_bernoulli(model, zs, x, o, x_prev, o_prev)),
            JtfKind::MultitargetAlignedUD => None,
        }
    }
}

/// A tagged grid point `(x, o)`.
pub type TaggedPoint = (usize, u8);

/// No-clutter single-object scan density: `1 - p_D(x)` for an empty scan,
/// `p_D(x) f(z|x)` for a singleton, zero for anything larger.
pub fn meas_density_single<S: Scalar>(model: &FiniteModel<S>, zs: &[usize], x: usize) -> S {
    match zs {
        [] => S::one() - model.p_d[x],
        [z] => model.p_d[x] * model.likelihood[x][*z],
        _ => S::zero(),
    }
}

/// Conventional joint transition function:
/// `f(Z, x | x_prev) = f(Z|x) f(x|x_prev)` with `|Z| <= 1`.
pub fn cjtf<S: Scalar>(model: &FiniteModel<S>, zs: &[usize], x: usize, x_prev: usize) -> S {
    meas_density_single(model, zs, x) * model.markov[x_prev][x]
}

/// Conventional tagged kernel: tags ride along unchanged.
pub fn cud_jtf<S: Scalar>(
    model: &FiniteModel<S>,
    zs: &[usize],
    x: usize,
    o: u8,
    x_prev: usize,
    o_prev: u8,
) -> S {
    if o == o_prev {
        cjtf(model, zs, x, x_prev)
    } else {
        S::zero()
    }
}

/// Tag-flipping kernel in compact form:
/// `(δ_{o,1} + (-1)^o δ_{o_prev,0} δ_{|Z|,0}) · f_con(Z, x | x_prev)`.
pub fn nud_jtf<S: Scalar>(
    model: &FiniteModel<S>,
    zs: &[usize],
    x: usize,
    o: u8,
    x_prev: usize,
    o_prev: u8,
) -> S {
    let mut factor = S::zero();
    if o == 1 {
        factor += S::one();
    }
    if o_prev == 0 && zs.is_empty() {
        let sign = if o == 0 { S::one() } else { -S::one() };
        factor += sign;
    }
    factor * cjtf(model, zs, x, x_prev)
}

/// Tag-flipping kernel as the literal five-case table; kept as an
/// independent code path for the compact-form consistency check.
pub fn nud_jtf_table<S: Scalar>(
    model: &FiniteModel<S>,
    zs: &[usize],
    x: usize,
    o: u8,
    x_prev: usize,
    o_prev: u8,
) -> S {
    let markov = model.markov[x_prev][x];
    match (zs.len(), o, o_prev) {
        // A detected target never reverts.
        (_, 0, 1) => S::zero(),
        // Undetected at both ends: only an empty scan is possible.
        (0, 0, 0) => (S::one() - model.p_d[x]) * markov,
        (_, 0, 0) => S::zero(),
        // Detection with a generated measurement, from either tag.
        (1, 1, _) => model.p_d[x] * model.likelihood[x][zs[0]] * markov,
        // A missed detection keeps a detected target detected...
        (0, 1, 1) => (S::one() - model.p_d[x]) * markov,
        // ...but cannot mint a detected target out of an undetected one.
        (0, 1, 0) => S::zero(),
        // Scans beyond a singleton are impossible without clutter.
        _ => S::zero(),
    }
}

/// Single-object kernel with clutter: the full scan density for at most one
/// target times the Markov density.
pub fn bern_kernel<S: Scalar>(model: &FiniteModel<S>, zs: &[usize], x: usize, x_prev: usize) -> S {
    // f(Z|{x}): the target is missed (all of the scan is clutter) or it
    // generated one scan point (the rest is clutter).
    let kappa_all: S = zs.iter().map(|&z| model.kappa(z)).product();
    let mut total = (S::one() - model.p_d[x]) * kappa_all;
    for (j, &z) in zs.iter().enumerate() {
        let mut rest = S::one();
        for (i, &other) in zs.iter().enumerate() {
            if i != j {
                rest *= model.kappa(other);
            }
        }
        total += model.p_d[x] * model.likelihood[x][z] * rest;
    }
    (-model.clutter_rate).exp() * total * model.markov[x_prev][x]
}

/// Tag-flipping kernel for the clutter-bearing single-object filter: the tag
/// behavior keys on whether the scan is empty, since with clutter any scan is
/// possible for either tag history.
pub fn nud_jtf_bernoulli<S: Scalar>(
    model: &FiniteModel<S>,
    zs: &[usize],
    x: usize,
    o: u8,
    x_prev: usize,
    o_prev: u8,
) -> S {
    let factor = match (o_prev, o) {
        (1, 0) => S::zero(),
        (1, 1) => S::one(),
        (0, 0) => {
            if zs.is_empty() {
                S::one()
            } else {
                S::zero()
            }
        }
        (0, 1) => {
            if zs.is_empty() {
                S::zero()
            } else {
                S::one()
            }
        }
        _ => unreachable!("tags are bits"),
    };
    factor * bern_kernel(model, zs, x, x_prev)
}

fn check_multitarget_sizes(n: usize, m: usize) -> Result<()> {
    if n > MAX_ASSOCIATION_SIZE {
        return Err(Error::EnumerationBound {
            what: "tagged target set",
            limit: MAX_ASSOCIATION_SIZE,
            got: n,
        });
    }
    if m > 3 * MAX_ASSOCIATION_SIZE {
        return Err(Error::EnumerationBound {
            what: "measurement scan",
            limit: 3 * MAX_ASSOCIATION_SIZE,
            got: m,
        });
    }
    Ok(())
}

fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..n).collect();
    permute(&mut idx, 0, &mut f);
    fn permute(idx: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == idx.len() {
            f(idx);
            return;
        }
        for i in k..idx.len() {
            idx.swap(k, i);
            permute(idx, k + 1, f);
            idx.swap(k, i);
        }
    }
}

/// Multi-object tag-flipping kernel under frozen kinematics (no birth, no
/// death, no motion). Cardinality-preserving by construction; the point
/// masses of the continuum formula are Kronecker weights here.
///
/// For each pairing of new states onto previous states and each association
/// of previous states to the scan: an unassociated pair keeps state and tag
/// and pays `1 - p_D`; an associated pair keeps the state, comes out
/// detected regardless of history, and pays `p_D L_z / kappa(z)`.
pub fn nud_jtf_multitarget<S: Scalar>(
    model: &FiniteModel<S>,
    zs: &[usize],
    new: &[TaggedPoint],
    prev: &[TaggedPoint],
) -> Result<S> {
    check_multitarget_sizes(new.len().max(prev.len()), zs.len())?;
    if new.len() != prev.len() {
        return Ok(S::zero());
    }
    let n = new.len();
    let mut total = S::zero();
    for_each_permutation(n, |perm| {
        let mut assoc_total = S::zero();
        for_each_association_local(n, zs.len(), |assoc| {
            let mut term = S::one();
            for (i, &a) in assoc.iter().enumerate() {
                let (xp, op) = prev[i];
                let (xn, on) = new[perm[i]];
                if a == 0 {
                    // Kronecker point mass in state and tag, missed detection.
                    if xn != xp || on != op {
                        term = S::zero();
                        break;
                    }
                    term *= S::one() - model.p_d[xp];
                } else {
                    // Detected: state point mass, outgoing tag forced to 1;
                    // the associated scan point costs no clutter factor.
                    if xn != xp || on != 1 {
                        term = S::zero();
                        break;
                    }
                    term *= model.p_d[xp] * model.likelihood[xp][zs[a - 1]];
                }
            }
            if term != S::zero() {
                for (j, &z) in zs.iter().enumerate() {
                    if !assoc.contains(&(j + 1)) {
                        term *= model.kappa(z);
                    }
                }
            }
            assoc_total += term;
        });
        total += assoc_total;
    });
    Ok((-model.clutter_rate).exp() * total)
}

// Local re-export of the association enumerator for the multitarget kernel.
pub(crate) fn for_each_association_local(n: usize, m: usize, mut f: impl FnMut(&[usize])) {
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

/// Partial generating functional of the multi-object kernel with respect to
/// the scan: `δ_{|new|,|prev|} e^{κ[g-1]} Σ_π Π_i L(new_π(i), g)(prev_i)`
/// where each pair factor is `δ-mass · (1 - p_D)` plus
/// `detected-lift mass · p_D L_g`.
pub fn nud_partial_pgfl<S: Scalar>(
    model: &FiniteModel<S>,
    g: &TestFunction<S>,
    new: &[TaggedPoint],
    prev: &[TaggedPoint],
) -> Result<S> {
    check_multitarget_sizes(new.len().max(prev.len()), 0)?;
    if new.len() != prev.len() {
        return Ok(S::zero());
    }
    let n = new.len();
    let kappa_g: S = (0..model.n_meas())
        .map(|z| model.kappa(z) * (g.value(z) - S::one()))
        .sum();
    // L_g(x) = sum_z g(z) f(z|x).
    let l_g: Vec<S> = (0..model.n_states())
        .map(|x| {
            (0..model.n_meas())
                .map(|z| g.value(z) * model.likelihood[x][z])
                .sum()
        })
        .collect();
    let mut total = S::zero();
    for_each_permutation(n, |perm| {
        let mut term = S::one();
        for (i, &(xp, op)) in prev.iter().enumerate() {
            let (xn, on) = new[perm[i]];
            let mut pair = S::zero();
            if xn == xp && on == op {
                pair += S::one() - model.p_d[xp];
            }
            if xn == xp && on == 1 {
                pair += model.p_d[xp] * l_g[xp];
            }
            term *= pair;
            if term == S::zero() {
                break;
            }
        }
        total += term;
    });
    Ok(kappa_g.exp() * total)
}

/// One materialized kernel entry: `(scan, weight, new set, previous set,
/// value)`. The weight is `1 / prod(multiplicity!)` of the scan, so that
/// summing `weight * value` over rows with a fixed previous set integrates
/// the kernel.
pub type KernelRow<S> = (Vec<usize>, S, Vec<TaggedPoint>, Vec<TaggedPoint>, S);

/// Materialized multi-object kernel over a bounded scan budget, kept with
/// the set-integral weights needed to check normalization per previous set.
#[derive(Debug)]
pub struct JointTransitionTable<S: Scalar> {
    pub rows: Vec<KernelRow<S>>,
}

/// Enumerates scans as multisets of measurement-grid points up to
/// `scan_cap`, yielding each with its set-integral weight.
pub fn for_each_scan<S: Scalar>(n_meas: usize, scan_cap: usize, mut f: impl FnMut(&[usize], S)) {
    fn rec<S: Scalar>(
        n_meas: usize,
        scan_cap: usize,
        next: usize,
        scan: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize], S),
    ) {
        let mut weight = S::one();
        let mut counts = vec![0usize; n_meas];
        for &z in scan.iter() {
            counts[z] += 1;
            weight *= S::from_usize(counts[z]).unwrap();
        }
        f(scan, S::one() / weight);
        if scan.len() == scan_cap {
            return;
        }
        for z in next..n_meas {
            scan.push(z);
            rec(n_meas, scan_cap, z, scan, f);
            scan.pop();
        }
    }
    rec::<S>(n_meas, scan_cap, 0, &mut Vec::new(), &mut f);
}

/// True when all base states in a tagged set are distinct. Sets carrying
/// both tags of one base point mirror a probability-zero event of the
/// continuous theory; the kernel normalization is claimed off them (a
/// detection collapses such a pair onto a single detected point, which the
/// cardinality gate then discards).
pub fn base_distinct(set: &[TaggedPoint]) -> bool {
    for (i, &(x, _)) in set.iter().enumerate() {
        if set[i + 1..].iter().any(|&(y, _)| y == x) {
            return false;
        }
    }
    true
}

/// Enumerates tagged sets of exactly `size` points over `base_n` grid points.
pub fn tagged_sets(base_n: usize, size: usize) -> Vec<Vec<TaggedPoint>> {
    let all: Vec<TaggedPoint> = (0..base_n).flat_map(|x| [(x, 0u8), (x, 1u8)]).collect();
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn rec(
        all: &[TaggedPoint],
        start: usize,
        size: usize,
        current: &mut Vec<TaggedPoint>,
        out: &mut Vec<Vec<TaggedPoint>>,
    ) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for i in start..all.len() {
            current.push(all[i]);
            rec(all, i + 1, size, current, out);
            current.pop();
        }
    }
    rec(&all, 0, size, &mut current, &mut out);
    out
}

impl<S: Scalar> JointTransitionTable<S> {
    /// Builds the kernel table for all previous sets of exactly
    /// `n_targets` tagged points, scans up to `scan_cap` measurements.
    pub fn build(model: &FiniteModel<S>, n_targets: usize, scan_cap: usize) -> Result<Self> {
        let base_n = model.n_states();
        let news = tagged_sets(base_n, n_targets);
        let prevs = news.clone();
        let mut rows = Vec::new();
        let mut scans: Vec<(Vec<usize>, S)> = Vec::new();
        for_each_scan::<S>(model.n_meas(), scan_cap, |scan, w| {
            scans.push((scan.to_vec(), w));
        });
        for prev in &prevs {
            for (scan, w) in &scans {
                for new in &news {
                    let v = nud_jtf_multitarget(model, scan, new, prev)?;
                    if v != S::zero() {
                        rows.push((scan.clone(), *w, new.clone(), prev.clone(), v));
                    }
                }
            }
        }
        Ok(Self { rows })
    }

    /// Set-integral of the kernel over scans and new sets, per previous set.
    pub fn normalization(&self, prev: &[TaggedPoint]) -> S {
        self.rows
            .iter()
            .filter(|(_, _, _, p, _)| p == prev)
            .map(|(_, w, _, _, v)| *w * *v)
            .sum()
    }
}
