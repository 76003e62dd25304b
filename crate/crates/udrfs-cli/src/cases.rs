//! Registry of verification cases: one entry per checked identity, with its
//! tolerance and the scale it runs at. The registry is gated against the
//! coverage manifest below, so a criterion cannot silently drop out.

use serde::Serialize;
use udrfs::verify as v;

pub struct CaseSpec {
    pub name: &'static str,
    /// Which identity the case pins down.
    pub identity: &'static str,
    pub tolerance: f64,
    /// Grid/cap sizes the check enumerates.
    pub scale: &'static str,
    pub runner: fn() -> f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub name: String,
    pub identity: String,
    pub tolerance: f64,
    pub scale: String,
    pub max_abs_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub all_pass: bool,
    pub cases: Vec<CaseResult>,
}

fn estimator_regression() -> f64 {
    // Deviation doubles as the error metric: a baseline-hash mismatch is
    // reported as an off-scale error.
    let run = v::reference_run();
    let dev = (run.final_detected_estimate - run.final_detected_truth).abs() as f64;
    if run.hash == v::REFERENCE_TRACKS_HASH {
        dev
    } else {
        f64::INFINITY
    }
}

pub fn registry() -> Vec<CaseSpec> {
    vec![
        CaseSpec {
            name: "kernel-normalization",
            identity: "tag-flip kernel integrates to one per conditioning state",
            tolerance: 1e-10,
            scale: "grids 2-5 states x 2-4 measurements",
            runner: v::nud_normalization,
        },
        CaseSpec {
            name: "kernel-marginalization",
            identity: "tag sum of the flip kernel recovers the conventional kernel",
            tolerance: 1e-12,
            scale: "grids 2-5 states x 2-4 measurements, exhaustive",
            runner: v::nud_marginalization,
        },
        CaseSpec {
            name: "kernel-compact-form",
            identity: "product form of the flip kernel equals its five-case table",
            tolerance: 1e-15,
            scale: "exhaustive over tags and scans",
            runner: v::nud_compact_form,
        },
        CaseSpec {
            name: "bernoulli-kernel-normalization",
            identity: "clutter-bearing flip kernel integrates to one per conditioning state",
            tolerance: 1e-10,
            scale: "4-state grid, scan budget 8",
            runner: v::bernoulli_kernel_normalization,
        },
        CaseSpec {
            name: "grid-filter-trajectory",
            identity: "three tagged grid updates equal the joint-trajectory posterior",
            tolerance: 1e-12,
            scale: "3-point grid, 3 steps",
            runner: v::grid_filter_vs_trajectory_enumeration,
        },
        CaseSpec {
            name: "fstar-subset-sum",
            identity: "perfect-detection density decomposes over detected subsets",
            tolerance: 1e-12,
            scale: "scans and target sets up to size 3",
            runner: v::fstar_subset_sum,
        },
        CaseSpec {
            name: "static-split-posteriors",
            identity: "static-split formulas equal Bayes posterior and tag-half censorings",
            tolerance: 1e-12,
            scale: "3 base points, cap 2",
            runner: v::sud_formulas,
        },
        CaseSpec {
            name: "tagged-posterior-censoring",
            identity: "tagged posterior split equals censoring of the total",
            tolerance: 1e-12,
            scale: "3 base points, cap 2",
            runner: v::dud_censoring,
        },
        CaseSpec {
            name: "multitarget-normalization",
            identity: "multi-object flip kernel integrates to one per conditioning set",
            tolerance: 1e-10,
            scale: "2 base points, up to 2 targets, scan budget 4",
            runner: v::multitarget_normalization,
        },
        CaseSpec {
            name: "multitarget-pgfl-consistency",
            identity: "multi-object kernel matches its partial generating functional",
            tolerance: 1e-10,
            scale: "2 base points, up to 2 targets, scan budget 4",
            runner: v::multitarget_pgfl_consistency,
        },
        CaseSpec {
            name: "parallelism-poisson",
            identity: "undetected posterior of an independent-point prior stays exponential",
            tolerance: 1e-12,
            scale: "2 points, tiny-intensity truncated analog",
            runner: || v::parallelism_poisson().0,
        },
        CaseSpec {
            name: "parallelism-bernoulli",
            identity: "one-object prior keeps one-object total and undetected posteriors",
            tolerance: 1e-12,
            scale: "2 points, all indicator test functions",
            runner: v::parallelism_bernoulli,
        },
        CaseSpec {
            name: "intensity-composition",
            identity: "single-step intensity recursion equals update of prediction",
            tolerance: 1e-12,
            scale: "50 randomized mixtures",
            runner: v::phd_composition,
        },
        CaseSpec {
            name: "static-intensity-split",
            identity: "detected plus undetected intensity equals the single-step output",
            tolerance: 1e-12,
            scale: "grid pointwise and mixture componentwise",
            runner: v::sud_phd_split,
        },
        CaseSpec {
            name: "tagged-intensity-merge",
            identity: "tag-sum of the tagged intensity step equals the merged single step",
            tolerance: 1e-12,
            scale: "grid pointwise and mixture probe evaluation",
            runner: v::dud_phd_merge,
        },
        CaseSpec {
            name: "undetected-scan-invariance",
            identity: "undetected intensity part never sees the scan",
            tolerance: 1e-12,
            scale: "4-state grid, scan replacement",
            runner: v::dud_phd_u_invariance,
        },
        CaseSpec {
            name: "existence-vs-oracle",
            identity: "existence filter matches predict-then-Bayes on the one-or-none lattice",
            tolerance: 1e-10,
            scale: "4-point grid, 5 steps",
            runner: v::bernoulli_vs_oracle,
        },
        CaseSpec {
            name: "tagged-existence-tag-sum",
            identity: "tag-sum of the tagged existence filter equals the untagged one",
            tolerance: 1e-12,
            scale: "4-point grid, 5 steps with appearance",
            runner: v::tagged_bernoulli_tag_sum,
        },
        CaseSpec {
            name: "predict-first-moment",
            identity: "intensity time-update equals the exact predicted first moment",
            tolerance: 1e-10,
            scale: "collision-free 3-point grid",
            runner: v::phd_predict_first_moment,
        },
        CaseSpec {
            name: "estimator-regression",
            identity: "seeded reference run reproduces its frozen baseline and tracks truth",
            tolerance: 1.0,
            scale: "reference scenario, seed 42, 12 steps",
            runner: estimator_regression,
        },
    ]
}

/// Coverage manifest: every gated acceptance identity mapped to the cases
/// that exercise it. `verify` refuses to run when a manifest entry names a
/// case missing from the registry.
pub const REQUIRED_COVERAGE: &[(&str, &[&str])] = &[
    ("kernel normalization", &["kernel-normalization"]),
    ("kernel marginalization", &["kernel-marginalization"]),
    ("compact form equivalence", &["kernel-compact-form"]),
    (
        "grid filter vs trajectory oracle",
        &["grid-filter-trajectory"],
    ),
    ("perfect-detection subset sum", &["fstar-subset-sum"]),
    ("static split posteriors", &["static-split-posteriors"]),
    (
        "tagged posteriors vs censoring",
        &["tagged-posterior-censoring"],
    ),
    (
        "multi-object kernel",
        &["multitarget-normalization", "multitarget-pgfl-consistency"],
    ),
    (
        "parallelism identities",
        &["parallelism-poisson", "parallelism-bernoulli"],
    ),
    ("intensity composition", &["intensity-composition"]),
    ("static intensity split", &["static-intensity-split"]),
    (
        "tagged intensity merge",
        &["tagged-intensity-merge", "undetected-scan-invariance"],
    ),
    (
        "existence filter vs oracle",
        &["existence-vs-oracle", "tagged-existence-tag-sum"],
    ),
    ("estimator regression", &["estimator-regression"]),
];

/// Checks the manifest against the registry; returns the missing case names.
pub fn coverage_gaps() -> Vec<String> {
    let names: Vec<&str> = registry().iter().map(|c| c.name).collect();
    let mut missing = Vec::new();
    for (_, cases) in REQUIRED_COVERAGE {
        for case in *cases {
            if !names.contains(case) {
                missing.push((*case).to_string());
            }
        }
    }
    missing
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_has_no_gaps() {
        assert!(coverage_gaps().is_empty(), "gaps: {:?}", coverage_gaps());
    }

    #[test]
    fn case_names_are_unique_and_tolerances_positive() {
        let reg = registry();
        let mut names: Vec<&str> = reg.iter().map(|c| c.name).collect();
        names.sort();
        let before = names.len();
        names.dedup();
        assert_eq!(before, names.len());
        assert!(reg.iter().all(|c| c.tolerance > 0.0));
    }
}
