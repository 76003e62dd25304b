//! Filter comparison: runs each requested filter on the same simulated
//! truth and tabulates mean absolute cardinality error and mean absolute
//! detected-count error against the truth flags.

use udrfs::model::ScenarioFile;
use udrfs::verify::fmt_float;

use crate::runcmd::{run_continuous, FilterKind, StepSummary};
use crate::CliError;

pub struct CompareRow {
    pub filter: &'static str,
    pub p_d: f64,
    pub mean_abs_cardinality_error: f64,
    pub mean_abs_tag_error: f64,
}

fn errors(steps: &[StepSummary]) -> (f64, f64) {
    let n = steps.len().max(1) as f64;
    let card: f64 = steps
        .iter()
        .map(|s| (s.count_estimate as f64 - s.true_count as f64).abs())
        .sum::<f64>()
        / n;
    let tag: f64 = steps
        .iter()
        .map(|s| (s.detected_estimate as f64 - s.true_detected as f64).abs())
        .sum::<f64>()
        / n;
    (card, tag)
}

/// One row per filter; with a detection-probability sweep, one row per
/// (filter, p_d) pair.
pub fn compare(
    raw: &[u8],
    file: &ScenarioFile,
    filters: &[FilterKind],
    seed: u64,
    sweep_p_d: &[f64],
) -> Result<Vec<CompareRow>, CliError> {
    if filters.len() < 2 {
        return Err(CliError::Usage("compare needs at least two filters".into()));
    }
    let p_ds: Vec<f64> = if sweep_p_d.is_empty() {
        vec![file.p_d]
    } else {
        sweep_p_d.to_vec()
    };
    let mut rows = Vec::new();
    for &kind in filters {
        for &p_d in &p_ds {
            let mut variant = file.clone();
            variant.p_d = p_d;
            let out = run_continuous(raw, &variant, kind, seed, None)?;
            let (card, tag) = errors(&out.report.steps);
            rows.push(CompareRow {
                filter: kind.name(),
                p_d,
                mean_abs_cardinality_error: card,
                mean_abs_tag_error: tag,
            });
        }
    }
    Ok(rows)
}

pub fn render_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("filter,p_d,mean_abs_cardinality_error,mean_abs_tag_error\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.filter,
            fmt_float(r.p_d),
            fmt_float(r.mean_abs_cardinality_error),
            fmt_float(r.mean_abs_tag_error)
        ));
    }
    out
}
