//! Exact set calculus on small finite spaces: set integrals, probability
//! generating functionals, functional derivatives, and censoring.
//!
//! Subsets are bitmasks over the point list, so every identity is evaluated
//! by direct enumeration of the capped subset lattice. With counting measure
//! the set integral is a plain sum over distinct subsets (the `1/n!` in the
//! continuous definition cancels the `n!` orderings of each `n`-subset).

use crate::{real, Error, Result, Scalar};

/// Subset of a finite space, one bit per point.
pub type Mask = u32;

pub fn mask_len(mask: Mask) -> usize {
    mask.count_ones() as usize
}

/// Iterator over the point indices of a mask, ascending.
pub fn mask_points(mask: Mask) -> impl Iterator<Item = usize> {
    (0..32).filter(move |&i| mask & (1 << i) != 0)
}

/// An ordered finite carrier for states or measurements, with a cap on the
/// subset cardinalities under consideration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteSpace {
    labels: Vec<String>,
    cap: usize,
}

impl FiniteSpace {
    pub fn new(labels: Vec<String>, cap: usize) -> Result<Self> {
        let mut seen = labels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != labels.len() {
            return Err(Error::InvalidModel("space points must be distinct".into()));
        }
        if cap > labels.len() {
            return Err(Error::InvalidModel(
                "cardinality cap exceeds the number of points".into(),
            ));
        }
        if labels.len() > 20 {
            return Err(Error::EnumerationBound {
                what: "finite space",
                limit: 20,
                got: labels.len(),
            });
        }
        Ok(Self { labels, cap })
    }

    pub fn indexed(n: usize, cap: usize) -> Self {
        Self::new((0..n).map(|i| format!("p{i}")).collect(), cap).unwrap()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn full_mask(&self) -> Mask {
        if self.len() == 32 {
            Mask::MAX
        } else {
            (1 << self.len()) - 1
        }
    }

    /// All subsets with cardinality at most the cap.
    pub fn subsets(&self) -> impl Iterator<Item = Mask> + '_ {
        (0..=self.full_mask()).filter(move |&m| mask_len(m) <= self.cap)
    }

    pub fn contains_mask(&self, mask: Mask) -> bool {
        mask & !self.full_mask() == 0
    }
}

/// A tagged space built over `base_n` kinematic points: tagged point
/// `(x, o)` lives at bit `2x + o`. The detected half is the odd bits, the
/// undetected half the even bits.
#[derive(Debug, Clone, Copy)]
pub struct TaggedLayout {
    pub base_n: usize,
}

impl TaggedLayout {
    pub fn new(base_n: usize) -> Self {
        Self { base_n }
    }

    pub fn space(&self, cap: usize) -> FiniteSpace {
        let labels = (0..2 * self.base_n)
            .map(|i| format!("x{}o{}", i / 2, i % 2))
            .collect();
        FiniteSpace::new(labels, cap).unwrap()
    }

    pub fn bit(&self, x: usize, detected: bool) -> usize {
        2 * x + usize::from(detected)
    }

    pub fn point(&self, bit: usize) -> (usize, bool) {
        (bit / 2, bit % 2 == 1)
    }

    /// Mask of all detected tagged points.
    pub fn detected_mask(&self) -> Mask {
        (0..self.base_n).fold(0, |m, x| m | 1 << self.bit(x, true))
    }

    /// Mask of all undetected tagged points.
    pub fn undetected_mask(&self) -> Mask {
        (0..self.base_n).fold(0, |m, x| m | 1 << self.bit(x, false))
    }

    /// True when a tagged set holds both tags of some base point. Such sets
    /// mirror a probability-zero event of the continuous theory (two targets
    /// at the exact same kinematic state), and the closed-form D-U/D
    /// posterior identities are only claimed off them.
    pub fn has_base_collision(&self, mask: Mask) -> bool {
        (0..self.base_n)
            .any(|x| mask & (1 << self.bit(x, false)) != 0 && mask & (1 << self.bit(x, true)) != 0)
    }
}

/// A real-valued test function `0 <= h(x) <= 1` on a finite space.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> TestFunction<S> {
    pub fn new(values: Vec<S>) -> Result<Self> {
        if values.iter().any(|&v| v < S::zero() || v > S::one()) {
            return Err(Error::InvalidModel("test function outside [0,1]".into()));
        }
        Ok(Self { values })
    }

    /// Unvalidated variant for internal polynomial probes, which evaluate
    /// functionals outside the unit cube.
    pub(crate) fn probe(values: Vec<S>) -> Self {
        Self { values }
    }

    pub fn constant(n: usize, v: S) -> Result<Self> {
        Self::new(vec![v; n])
    }

    pub fn indicator(n: usize, mask: Mask) -> Self {
        Self {
            values: (0..n)
                .map(|i| {
                    if mask & (1 << i) != 0 {
                        S::one()
                    } else {
                        S::zero()
                    }
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, i: usize) -> S {
        self.values[i]
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Product `h^X` over the points of a mask; one for the empty set.
    pub fn set_power(&self, mask: Mask) -> S {
        mask_points(mask).map(|i| self.values[i]).product()
    }

    /// Pointwise complement `1 - h`.
    pub fn complement(&self) -> Self {
        Self {
            values: self.values.iter().map(|&v| S::one() - v).collect(),
        }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Self) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a * b)
                .collect(),
        }
    }

    /// On a tagged space: `(x, o) -> h(x, 1)`, the detected-restriction of a
    /// tagged test function extended back over both tags.
    pub fn restrict_detected(&self, layout: TaggedLayout) -> Self {
        Self {
            values: (0..2 * layout.base_n)
                .map(|bit| self.values[layout.bit(bit / 2, true)])
                .collect(),
        }
    }

    /// On a tagged space: equals `h` on detected points, one on undetected
    /// points. Censoring the detected sub-population substitutes this form.
    pub fn detected_form(&self, layout: TaggedLayout) -> Self {
        Self {
            values: (0..2 * layout.base_n)
                .map(|bit| {
                    let (_, det) = layout.point(bit);
                    if det {
                        self.values[bit]
                    } else {
                        S::one()
                    }
                })
                .collect(),
        }
    }

    /// On a tagged space: equals `h` on undetected points, one on detected
    /// points.
    pub fn undetected_form(&self, layout: TaggedLayout) -> Self {
        Self {
            values: (0..2 * layout.base_n)
                .map(|bit| {
                    let (_, det) = layout.point(bit);
                    if det {
                        S::one()
                    } else {
                        self.values[bit]
                    }
                })
                .collect(),
        }
    }
}

/// A multi-object density on the capped subset lattice of a finite space.
/// `values[mask]` is the density weight of that subset; entries beyond the
/// cardinality cap are identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SetDensity<S: Scalar> {
    space: FiniteSpace,
    values: Vec<S>,
}

impl<S: Scalar> SetDensity<S> {
    pub fn zero(space: FiniteSpace) -> Self {
        let len = 1usize << space.len();
        Self {
            space,
            values: vec![S::zero(); len],
        }
    }

    pub fn from_fn(space: FiniteSpace, mut f: impl FnMut(Mask) -> S) -> Result<Self> {
        let mut d = Self::zero(space);
        for mask in 0..=d.space.full_mask() {
            if mask_len(mask) <= d.space.cap() {
                let v = f(mask);
                if v < S::zero() {
                    return Err(Error::InvalidModel("negative set-density value".into()));
                }
                d.values[mask as usize] = v;
            }
        }
        Ok(d)
    }

    pub fn space(&self) -> &FiniteSpace {
        &self.space
    }

    pub fn value(&self, mask: Mask) -> S {
        self.values[mask as usize]
    }

    pub fn set(&mut self, mask: Mask, v: S) {
        debug_assert!(mask_len(mask) <= self.space.cap());
        self.values[mask as usize] = v;
    }

    /// The set integral: the sum of the density over all subsets within the
    /// cardinality cap.
    pub fn set_integral(&self) -> S {
        self.space.subsets().map(|m| self.value(m)).sum()
    }

    /// True when the density is a probability density within `tol`.
    pub fn is_probability(&self, tol: S) -> bool {
        (self.set_integral() - S::one()).abs() <= tol && self.values.iter().all(|&v| v >= S::zero())
    }

    /// Rescales to unit set integral. Fails when the total mass is zero,
    /// which signals a measurement impossible under the model.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.set_integral();
        if total <= S::zero() {
            return Err(Error::MeasurementImpossible);
        }
        let mut out = self.clone();
        for v in &mut out.values {
            *v /= total;
        }
        Ok(out)
    }

    /// Probability generating functional `G[h] = sum_X h^X f(X)`.
    pub fn pgfl(&self, h: &TestFunction<S>) -> S {
        self.space
            .subsets()
            .map(|m| h.set_power(m) * self.value(m))
            .sum()
    }

    /// Functional derivative at a subset, evaluated at `h`:
    /// `dG/dX [h] = sum over W disjoint from X of h^W f(X ∪ W)`.
    ///
    /// The empty-`X` derivative is the p.g.fl. itself; at `h = 0` the
    /// derivative recovers `f(X)` exactly.
    pub fn functional_derivative(&self, x: Mask, h: &TestFunction<S>) -> Result<S> {
        if !self.space.contains_mask(x) {
            return Err(Error::InvalidModel(
                "derivative set contains out-of-space points".into(),
            ));
        }
        if mask_len(x) > self.space.cap() {
            return Err(Error::InvalidModel(
                "derivative set exceeds the cardinality cap".into(),
            ));
        }
        let rest = self.space.full_mask() & !x;
        let mut total = S::zero();
        let mut w = rest;
        // Enumerate submasks of `rest`, including the empty set.
        loop {
            if mask_len(x | w) <= self.space.cap() {
                total += h.set_power(w) * self.value(x | w);
            }
            if w == 0 {
                break;
            }
            w = (w - 1) & rest;
        }
        Ok(total)
    }

    /// Belief measure `beta(S) = Pr(X ⊆ S) = G[1_S]`.
    pub fn belief(&self, s: Mask) -> S {
        self.pgfl(&TestFunction::indicator(self.space.len(), s))
    }

    /// Censored density: all points outside `keep` removed.
    ///
    /// `f'(X) = 1_keep^X * dG/dX [1_keep^c]`; the output is a probability
    /// density whenever the input is.
    pub fn censor(&self, keep: Mask) -> Self {
        let outside = TestFunction::indicator(self.space.len(), self.space.full_mask() & !keep);
        let mut out = Self::zero(self.space.clone());
        for mask in self.space.subsets() {
            if mask & !keep != 0 {
                continue;
            }
            out.values[mask as usize] = self
                .functional_derivative(mask, &outside)
                .expect("mask drawn from the space");
        }
        out
    }
}

/// Recovers a density from a functional given only as a black box, by exact
/// extraction of the multilinear coefficients: the polynomial analog of
/// taking iterated functional derivatives at `h = 0`.
///
/// The probe grid `h = ±1` per point of the target set (zero elsewhere) is
/// exact for functionals of per-point degree at most two, which covers every
/// posterior formula evaluated here.
pub fn density_from_functional<S: Scalar>(
    space: &FiniteSpace,
    functional: impl Fn(&TestFunction<S>) -> S,
) -> SetDensity<S> {
    let n = space.len();
    let mut out = SetDensity::zero(space.clone());
    for target in space.subsets() {
        let bits: Vec<usize> = mask_points(target).collect();
        let k = bits.len();
        let mut acc = S::zero();
        for signs in 0..(1u32 << k) {
            let mut h = vec![S::zero(); n];
            let mut parity = S::one();
            for (j, &bit) in bits.iter().enumerate() {
                if signs & (1 << j) != 0 {
                    h[bit] = S::one();
                } else {
                    h[bit] = -S::one();
                    parity = -parity;
                }
            }
            acc += parity * functional(&TestFunction::probe(h));
        }
        out.values[target as usize] = acc / real::<S>((1u64 << k) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn space2(cap: usize) -> FiniteSpace {
        FiniteSpace::indexed(2, cap)
    }

    fn density(space: FiniteSpace, entries: &[(Mask, f64)]) -> SetDensity<f64> {
        let mut d = SetDensity::zero(space);
        for &(m, v) in entries {
            d.set(m, v);
        }
        d
    }

    #[test]
    fn set_integral_of_empty_set_density() {
        let d = density(space2(2), &[(0b00, 1.0)]);
        assert_eq!(d.set_integral(), 1.0);
    }

    #[test]
    fn set_integral_uniform_over_lattice() {
        let n = 3;
        let space = FiniteSpace::indexed(n, n);
        let d = SetDensity::from_fn(space, |_| 1.0 / 8.0).unwrap();
        assert_relative_eq!(d.set_integral(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn set_integral_sums_entries() {
        let d = density(space2(2), &[(0b00, 0.5), (0b01, 0.3), (0b10, 0.2)]);
        assert_relative_eq!(d.set_integral(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn pgfl_at_one_is_normalization() {
        let d = density(space2(2), &[(0b00, 0.5), (0b01, 0.3), (0b11, 0.2)]);
        let one = TestFunction::constant(2, 1.0).unwrap();
        assert_relative_eq!(d.pgfl(&one), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn pgfl_at_zero_is_empty_set_mass() {
        let d = density(space2(2), &[(0b00, 0.4), (0b01, 0.6)]);
        let zero = TestFunction::constant(2, 0.0).unwrap();
        assert_relative_eq!(d.pgfl(&zero), 0.4, max_relative = 1e-14);
    }

    #[test]
    fn pgfl_of_bernoulli_truncation_matches_closed_form() {
        // One-point carrier: f(∅) = 1-d, f({x}) = d has p.g.fl. 1 - d + d h.
        let space = FiniteSpace::indexed(1, 1);
        let dd = 0.37;
        let d = density(space, &[(0b0, 1.0 - dd), (0b1, dd)]);
        for hv in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let h = TestFunction::constant(1, hv).unwrap();
            assert_relative_eq!(d.pgfl(&h), 1.0 - dd + dd * hv, epsilon = 1e-12);
        }
    }

    #[test]
    fn zeroth_derivative_is_pgfl() {
        let d = density(space2(2), &[(0b00, 0.5), (0b01, 0.3), (0b11, 0.2)]);
        let h = TestFunction::new(vec![0.3, 0.8]).unwrap();
        assert_relative_eq!(
            d.functional_derivative(0, &h).unwrap(),
            d.pgfl(&h),
            max_relative = 1e-14
        );
    }

    #[test]
    fn derivative_at_zero_recovers_density() {
        let d = density(space2(2), &[(0b00, 0.5), (0b01, 0.3), (0b11, 0.2)]);
        let zero = TestFunction::constant(2, 0.0).unwrap();
        for mask in d.space().subsets() {
            assert_eq!(d.functional_derivative(mask, &zero).unwrap(), d.value(mask));
        }
    }

    #[test]
    fn derivative_brute_force_example() {
        // f(∅)=0.5, f({a})=0.3, f({a,b})=0.2, X={a}, h ≡ 1:
        // disjoint W ∈ {∅, {b}} gives 0.3 + 0.2.
        let d = density(space2(2), &[(0b00, 0.5), (0b01, 0.3), (0b11, 0.2)]);
        let one = TestFunction::constant(2, 1.0).unwrap();
        assert_relative_eq!(
            d.functional_derivative(0b01, &one).unwrap(),
            0.5,
            max_relative = 1e-14
        );
    }

    #[test]
    fn derivative_rejects_out_of_space_points() {
        let d = density(space2(2), &[(0b00, 1.0)]);
        let h = TestFunction::constant(2, 1.0).unwrap();
        assert!(d.functional_derivative(0b100, &h).is_err());
    }

    #[test]
    fn censor_by_full_space_is_identity() {
        let d = density(space2(2), &[(0b00, 0.5), (0b01, 0.3), (0b10, 0.2)]);
        let c = d.censor(0b11);
        for mask in d.space().subsets() {
            assert_relative_eq!(c.value(mask), d.value(mask), max_relative = 1e-14);
        }
    }

    #[test]
    fn censor_by_nothing_concentrates_on_empty() {
        let d = density(space2(2), &[(0b00, 0.5), (0b01, 0.3), (0b10, 0.2)]);
        let c = d.censor(0);
        assert_relative_eq!(c.value(0), 1.0, max_relative = 1e-14);
        assert_eq!(c.value(0b01), 0.0);
    }

    #[test]
    fn censor_tagged_pair_example() {
        // Tagged one-base-point space {(x,0),(x,1)}; keep the detected half.
        let layout = TaggedLayout::new(1);
        let space = layout.space(2);
        let d = density(space, &[(0b00, 0.2), (0b01, 0.3), (0b10, 0.5)]);
        let c = d.censor(layout.detected_mask());
        assert_relative_eq!(c.value(0b00), 0.5, max_relative = 1e-14);
        assert_relative_eq!(c.value(0b10), 0.5, max_relative = 1e-14);
        assert!(c.is_probability(1e-12));
    }

    #[test]
    fn density_extraction_inverts_pgfl() {
        let d = density(
            FiniteSpace::indexed(3, 2),
            &[
                (0b000, 0.25),
                (0b001, 0.2),
                (0b010, 0.15),
                (0b011, 0.1),
                (0b100, 0.3),
            ],
        );
        let recovered = density_from_functional(d.space(), |h| d.pgfl(h));
        for mask in d.space().subsets() {
            assert_relative_eq!(recovered.value(mask), d.value(mask), epsilon = 1e-13);
        }
    }

    #[test]
    fn tagged_layout_masks_partition() {
        let layout = TaggedLayout::new(3);
        let space = layout.space(6);
        assert_eq!(
            layout.detected_mask() | layout.undetected_mask(),
            space.full_mask()
        );
        assert_eq!(layout.detected_mask() & layout.undetected_mask(), 0);
    }

    fn arb_density(n: usize, cap: usize) -> impl Strategy<Value = SetDensity<f64>> {
        let len = 1usize << n;
        proptest::collection::vec(0.0f64..1.0, len).prop_map(move |raw| {
            let space = FiniteSpace::indexed(n, cap);
            let d = SetDensity::from_fn(space, |m| raw[m as usize]).unwrap();
            d.normalized().unwrap_or(d)
        })
    }

    proptest! {
        // Belief measure identity: G[1_S] = sum over subsets of S.
        #[test]
        fn pgfl_on_indicators_is_belief(d in arb_density(3, 3), s in 0u32..8) {
            let direct: f64 = d.space().subsets().filter(|m| m & !s == 0).map(|m| d.value(m)).sum();
            prop_assert!((d.belief(s) - direct).abs() < 1e-12);
        }

        // Censoring is idempotent and composes through intersection.
        #[test]
        fn censor_idempotent_and_composes(d in arb_density(3, 3), o1 in 0u32..8, o2 in 0u32..8) {
            let once = d.censor(o1);
            let twice = once.censor(o1);
            for m in d.space().subsets() {
                prop_assert!((once.value(m) - twice.value(m)).abs() < 1e-12);
            }
            let joint = d.censor(o1 & o2);
            let chained = d.censor(o1).censor(o2);
            for m in d.space().subsets() {
                prop_assert!((joint.value(m) - chained.value(m)).abs() < 1e-12);
            }
        }

        // Indicator algebra behind the censoring substitutions:
        // (h^c · 1_D)^c = detected form, (h^c · 1_U)^c = undetected form.
        #[test]
        fn indicator_algebra_forms(vals in proptest::collection::vec(0.0f64..=1.0, 4)) {
            let layout = TaggedLayout::new(2);
            let h = TestFunction::new(vals).unwrap();
            let d_ind = TestFunction::indicator(4, layout.detected_mask());
            let u_ind = TestFunction::indicator(4, layout.undetected_mask());
            let lhs_d = h.complement().mul(&d_ind).complement();
            let lhs_u = h.complement().mul(&u_ind).complement();
            for i in 0..4 {
                prop_assert!((lhs_d.value(i) - h.detected_form(layout).value(i)).abs() < 1e-15);
                prop_assert!((lhs_u.value(i) - h.undetected_form(layout).value(i)).abs() < 1e-15);
            }
        }

        // h-pgfl stays within [0,1] for probability densities.
        #[test]
        fn pgfl_bounded(d in arb_density(3, 3), vals in proptest::collection::vec(0.0f64..=1.0, 3)) {
            prop_assume!(d.is_probability(1e-9));
            let h = TestFunction::new(vals).unwrap();
            let g = d.pgfl(&h);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&g));
        }
    }
}
