//! Scenario runner: simulates ground truth (or replays a recorded
//! measurement stream), drives the selected filter, and writes the
//! truth/measurement streams, the track table, and the run report. All file
//! output is byte-deterministic for a fixed seed and scenario.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;
use sha2::{Digest, Sha256};

use udrfs::bayes::{
    bernoulli_single_step, dud_bernoulli_single_step, dud_single_step, BernoulliState,
    MeasurementStreamRecord, TaggedGridDensity,
};
use udrfs::model::{
    BaseState, FiniteModel, FiniteScenarioFile, GaussianMixture, ScenarioFile, ScenarioModel, UDTag,
};
use udrfs::phd::{
    dud_estimate, dud_phd_step, estimate, phd_single_step, sud_phd_step, GmBackend, GridBackend,
    UdIntensity,
};
use udrfs::sim::{simulate, MeasOrigin, SimOptions, TruthRecord};
use udrfs::verify::fmt_float;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FilterKind {
    Standard,
    Sud,
    Dud,
    Bernoulli,
    DudBernoulli,
    GridDud,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Standard => "standard",
            FilterKind::Sud => "sud",
            FilterKind::Dud => "dud",
            FilterKind::Bernoulli => "bernoulli",
            FilterKind::DudBernoulli => "dud-bernoulli",
            FilterKind::GridDud => "grid-dud",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "standard" => Some(FilterKind::Standard),
            "sud" => Some(FilterKind::Sud),
            "dud" => Some(FilterKind::Dud),
            "bernoulli" => Some(FilterKind::Bernoulli),
            "dud-bernoulli" => Some(FilterKind::DudBernoulli),
            "grid-dud" => Some(FilterKind::GridDud),
            _ => None,
        }
    }
}

/// Per-step summary used by both the report and the comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct StepSummary {
    pub k: usize,
    pub count_estimate: usize,
    pub true_count: usize,
    pub detected_estimate: usize,
    pub undetected_estimate: usize,
    pub true_detected: usize,
    pub true_undetected: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario_hash: String,
    pub filter: String,
    pub seed: u64,
    pub steps: Vec<StepSummary>,
}

pub struct RunOutput {
    pub truth_jsonl: String,
    pub measurements_jsonl: String,
    pub tracks_csv: String,
    pub posterior_csv: Option<String>,
    pub report: RunReport,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn norm(v: f64) -> f64 {
    v + 0.0
}

#[derive(Serialize)]
struct TruthTargetJson {
    id: u64,
    state: Vec<f64>,
    detected: bool,
}

#[derive(Serialize)]
struct TruthLineJson {
    k: usize,
    targets: Vec<TruthTargetJson>,
}

#[derive(Serialize)]
struct MeasLineJson {
    k: usize,
    measurements: Vec<Vec<f64>>,
    origins: Vec<String>,
}

fn origin_label(o: &MeasOrigin) -> String {
    match o {
        MeasOrigin::Target(id) => format!("target:{id}"),
        MeasOrigin::Clutter => "clutter".into(),
    }
}

/// One row of the track table: step, tag group, count, mass, and the
/// estimated states (components space-separated, states ';'-separated).
fn track_row(k: usize, tag: &str, count: usize, mass: f64, states: &[(String, UDTag)]) -> String {
    let txt = states
        .iter()
        .map(|(s, _)| s.clone())
        .collect::<Vec<_>>()
        .join(";");
    format!("{k},{tag},{count},{},{txt}\n", fmt_float(mass))
}

fn state_text(base: &BaseState<f64>) -> String {
    match base {
        BaseState::Vector(v) => v
            .iter()
            .map(|&c| fmt_float(c))
            .collect::<Vec<_>>()
            .join(" "),
        BaseState::Index(i) => format!("p{i}"),
    }
}

struct ReduceCfg {
    prune: f64,
    merge: f64,
    max_components: usize,
}

fn reduce_cfg(file: &ScenarioFile) -> ReduceCfg {
    match &file.filter {
        Some(f) => ReduceCfg {
            prune: f.prune,
            merge: f.merge,
            max_components: f.max_components,
        },
        None => ReduceCfg {
            prune: 1e-5,
            merge: 4.0,
            max_components: 100,
        },
    }
}

fn check_finite(mass: f64) -> Result<(), CliError> {
    if mass.is_finite() {
        Ok(())
    } else {
        Err(CliError::Divergence("non-finite intensity mass".into()))
    }
}

/// One filter step's input: the scan plus, when simulated, the matching
/// truth record (absent in replay mode).
struct StepInput {
    k: usize,
    scan: Vec<DVector<f64>>,
    origins: Vec<String>,
    truth: Option<TruthRecord<f64>>,
}

fn summary(input: &StepInput, count: usize, d_count: usize, u_count: usize) -> StepSummary {
    let (true_count, true_detected) = match &input.truth {
        Some(rec) => (
            rec.targets.len(),
            rec.targets.iter().filter(|t| t.detected).count(),
        ),
        None => (0, 0),
    };
    StepSummary {
        k: input.k,
        count_estimate: count,
        true_count,
        detected_estimate: d_count,
        undetected_estimate: u_count,
        true_detected,
        true_undetected: true_count - true_detected,
    }
}

fn simulated_inputs(model: &ScenarioModel<f64>, steps: usize, seed: u64) -> Vec<StepInput> {
    let (truth, scans) = simulate(model, steps, seed, &SimOptions::default());
    truth
        .into_iter()
        .zip(scans)
        .map(|(t, s)| StepInput {
            k: s.k,
            origins: s.origins.iter().map(origin_label).collect(),
            scan: s.measurements,
            truth: Some(t),
        })
        .collect()
}

fn replay_inputs(
    records: &[MeasurementStreamRecord],
    meas_dim: usize,
) -> Result<Vec<StepInput>, CliError> {
    records
        .iter()
        .map(|r| {
            let scan = r
                .measurements
                .iter()
                .map(|m| {
                    if m.len() != meas_dim {
                        return Err(CliError::Config(format!(
                            "measurement dimension {} at step {}, expected {meas_dim}",
                            m.len(),
                            r.k
                        )));
                    }
                    Ok(DVector::from_iterator(meas_dim, m.iter().copied()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(StepInput {
                k: r.k,
                origins: vec!["unknown".into(); scan.len()],
                scan,
                truth: None,
            })
        })
        .collect()
}

/// Runs a continuous-scenario filter over simulated truth or a replayed
/// measurement stream.
pub fn run_continuous(
    raw: &[u8],
    file: &ScenarioFile,
    kind: FilterKind,
    seed: u64,
    replay: Option<&[MeasurementStreamRecord]>,
) -> Result<RunOutput, CliError> {
    let model: ScenarioModel<f64> = file
        .to_model()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let backend = GmBackend { model: &model };
    let cfg = reduce_cfg(file);
    let inputs = match replay {
        Some(records) => replay_inputs(records, file.meas_dim)?,
        None => simulated_inputs(&model, file.steps, seed),
    };

    let mut truth_jsonl = String::new();
    let mut measurements_jsonl = String::new();
    for input in &inputs {
        if let Some(rec) = &input.truth {
            let line = TruthLineJson {
                k: rec.k,
                targets: rec
                    .targets
                    .iter()
                    .map(|t| TruthTargetJson {
                        id: t.id,
                        state: t.state.iter().map(|&v| norm(v)).collect(),
                        detected: t.detected,
                    })
                    .collect(),
            };
            writeln!(truth_jsonl, "{}", serde_json::to_string(&line).unwrap()).unwrap();
        }
        let line = MeasLineJson {
            k: input.k,
            measurements: input
                .scan
                .iter()
                .map(|m| m.iter().map(|&v| norm(v)).collect())
                .collect(),
            origins: input.origins.clone(),
        };
        writeln!(
            measurements_jsonl,
            "{}",
            serde_json::to_string(&line).unwrap()
        )
        .unwrap();
    }

    let mut tracks = String::from("k,tag,count_estimate,total_mass,states\n");
    let mut steps = Vec::new();

    let reduce = |gm: &GaussianMixture<f64>| gm.reduce(cfg.prune, cfg.merge, cfg.max_components);
    let split_states = |states: &[udrfs::model::UDState<f64>]| {
        let (d, u): (Vec<_>, Vec<_>) = states
            .iter()
            .map(|s| (state_text(&s.base), s.tag))
            .partition(|(_, tag)| *tag == UDTag::Detected);
        (d, u)
    };

    match kind {
        FilterKind::Standard => {
            let mut state = GaussianMixture::empty();
            for input in &inputs {
                state = reduce(&phd_single_step(&backend, &state, &input.scan));
                check_finite(state.mass())?;
                let est = estimate(&backend, &state);
                let (states, _) = split_states(&est.states);
                tracks.push_str(&track_row(input.k, "all", est.count, state.mass(), &states));
                steps.push(summary(input, est.count, est.count, 0));
            }
        }
        FilterKind::Sud => {
            // The recursion feeds the merged intensity forward; the
            // undetected-then-detected concatenation reproduces the
            // single-step component list exactly, so the total count path is
            // the same as the standard filter's.
            let mut merged = GaussianMixture::empty();
            for input in &inputs {
                let split = sud_phd_step(&backend, &merged, &input.scan);
                let d_mass = split.detected.mass();
                let u_mass = split.undetected.mass();
                merged = reduce(&split.undetected.merged_with(&split.detected));
                check_finite(merged.mass())?;
                let est_total = estimate(&backend, &merged);
                let est_d = estimate(&backend, &reduce(&split.detected));
                let est_u = estimate(&backend, &reduce(&split.undetected));
                let states_d: Vec<(String, UDTag)> = est_d
                    .states
                    .iter()
                    .map(|s| (state_text(&s.base), UDTag::Detected))
                    .collect();
                let states_u: Vec<(String, UDTag)> = est_u
                    .states
                    .iter()
                    .map(|s| (state_text(&s.base), UDTag::Undetected))
                    .collect();
                tracks.push_str(&track_row(input.k, "d", est_d.count, d_mass, &states_d));
                tracks.push_str(&track_row(input.k, "u", est_u.count, u_mass, &states_u));
                steps.push(summary(input, est_total.count, est_d.count, est_u.count));
            }
        }
        FilterKind::Dud => {
            let mut state = UdIntensity {
                detected: GaussianMixture::empty(),
                undetected: GaussianMixture::empty(),
            };
            for input in &inputs {
                state = dud_phd_step(&backend, &state, &input.scan);
                state = UdIntensity {
                    detected: reduce(&state.detected),
                    undetected: reduce(&state.undetected),
                };
                check_finite(state.detected.mass() + state.undetected.mass())?;
                let est = dud_estimate(&backend, &state);
                let (d_states, u_states) = split_states(&est.states);
                tracks.push_str(&track_row(
                    input.k,
                    "d",
                    d_states.len(),
                    state.detected.mass(),
                    &d_states,
                ));
                tracks.push_str(&track_row(
                    input.k,
                    "u",
                    u_states.len(),
                    state.undetected.mass(),
                    &u_states,
                ));
                steps.push(summary(input, est.count, d_states.len(), u_states.len()));
            }
        }
        FilterKind::Bernoulli => {
            let birth = model.birth.clone();
            if birth.mass() > 1.0 + 1e-10 {
                return Err(CliError::Config(
                    "existence filters need appearance mass at most one".into(),
                ));
            }
            let mut state = BernoulliState {
                intensity: GaussianMixture::empty(),
            };
            for input in &inputs {
                state = bernoulli_single_step(&backend, &state, &input.scan, &birth)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                state.intensity = reduce(&state.intensity);
                check_finite(state.intensity.mass())?;
                let est = estimate(&backend, &state.intensity);
                let (states, _) = split_states(&est.states);
                tracks.push_str(&track_row(
                    input.k,
                    "all",
                    est.count,
                    state.intensity.mass(),
                    &states,
                ));
                steps.push(summary(input, est.count, est.count, 0));
            }
        }
        FilterKind::DudBernoulli => {
            let birth = model.birth.clone();
            if birth.mass() > 1.0 + 1e-10 {
                return Err(CliError::Config(
                    "existence filters need appearance mass at most one".into(),
                ));
            }
            let mut state = BernoulliState {
                intensity: UdIntensity {
                    detected: GaussianMixture::empty(),
                    undetected: GaussianMixture::empty(),
                },
            };
            for input in &inputs {
                state = dud_bernoulli_single_step(&backend, &state, &input.scan, &birth)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                state.intensity = UdIntensity {
                    detected: reduce(&state.intensity.detected),
                    undetected: reduce(&state.intensity.undetected),
                };
                let d_mass = state.intensity.detected.mass();
                let u_mass = state.intensity.undetected.mass();
                check_finite(d_mass + u_mass)?;
                let est = dud_estimate(&backend, &state.intensity);
                let (d_states, u_states) = split_states(&est.states);
                tracks.push_str(&track_row(input.k, "d", d_states.len(), d_mass, &d_states));
                tracks.push_str(&track_row(input.k, "u", u_states.len(), u_mass, &u_states));
                steps.push(summary(input, est.count, d_states.len(), u_states.len()));
            }
        }
        FilterKind::GridDud => {
            return Err(CliError::Config(
                "the grid-dud filter needs a finite-grid scenario file".into(),
            ))
        }
    }

    Ok(RunOutput {
        truth_jsonl,
        measurements_jsonl,
        tracks_csv: tracks,
        posterior_csv: None,
        report: RunReport {
            scenario_hash: sha256_hex(raw),
            filter: kind.name().into(),
            seed,
            steps,
        },
    })
}

/// Runs the exact tagged grid filter on a finite scenario.
pub fn run_grid(
    raw: &[u8],
    file: &FiniteScenarioFile,
    kind: FilterKind,
    seed: u64,
) -> Result<RunOutput, CliError> {
    if kind != FilterKind::GridDud {
        return Err(CliError::Config(format!(
            "finite-grid scenarios drive the grid-dud filter, not {}",
            kind.name()
        )));
    }
    let model: FiniteModel<f64> = file
        .to_model()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let n = model.n_states();
    let prior_sum: f64 = file.prior.iter().sum();
    if prior_sum <= 0.0 {
        return Err(CliError::Config("prior must carry mass".into()));
    }
    let prior_base: Vec<f64> = file.prior.iter().map(|&v| v / prior_sum).collect();
    let truth = udrfs::sim::simulate_grid(
        &model,
        &prior_base,
        file.steps,
        seed,
        udrfs::sim::FlagTiming::NextStep,
    );

    // All prior mass starts undetected.
    let mut values = vec![0.0; 2 * n];
    for (x, &v) in prior_base.iter().enumerate() {
        values[2 * x] = v;
    }
    let mut state =
        TaggedGridDensity::from_values(values).map_err(|e| CliError::Config(e.to_string()))?;

    let mut truth_jsonl = String::new();
    let mut measurements_jsonl = String::new();
    let mut tracks = String::from("k,tag,count_estimate,total_mass,states\n");
    let mut posterior = String::from("k,point,o,mass\n");
    let mut steps = Vec::new();

    for k in 1..=file.steps {
        let scan: Vec<usize> = truth.scans[k - 1].into_iter().collect();
        state = dud_single_step(&model, &state, &scan)
            .map_err(|e| CliError::Config(e.to_string()))?
            .posterior;
        if !state.values.iter().all(|v| v.is_finite()) {
            return Err(CliError::Divergence("non-finite grid posterior".into()));
        }

        let tr = TruthLineJson {
            k,
            targets: vec![TruthTargetJson {
                id: 0,
                state: vec![truth.states[k - 1] as f64],
                detected: truth.detected[k - 1],
            }],
        };
        writeln!(truth_jsonl, "{}", serde_json::to_string(&tr).unwrap()).unwrap();
        let ml = MeasLineJson {
            k,
            measurements: scan.iter().map(|&z| vec![z as f64]).collect(),
            origins: scan.iter().map(|_| "target:0".into()).collect(),
        };
        writeln!(
            measurements_jsonl,
            "{}",
            serde_json::to_string(&ml).unwrap()
        )
        .unwrap();

        for line in state.dump_csv(&model.state_labels).lines().skip(1) {
            writeln!(posterior, "{k},{line}").unwrap();
        }

        let backend = GridBackend { model: &model };
        let ud = UdIntensity {
            detected: (0..n).map(|x| state.value(x, 1)).collect::<Vec<f64>>(),
            undetected: (0..n).map(|x| state.value(x, 0)).collect::<Vec<f64>>(),
        };
        let est = dud_estimate(&backend, &ud);
        let (d_states, u_states): (Vec<_>, Vec<_>) = est
            .states
            .iter()
            .map(|s| {
                let txt = match &s.base {
                    BaseState::Index(i) => model.state_labels[*i].clone(),
                    BaseState::Vector(_) => unreachable!("grid estimates are indices"),
                };
                (txt, s.tag)
            })
            .partition(|(_, tag)| *tag == UDTag::Detected);
        tracks.push_str(&track_row(
            k,
            "d",
            d_states.len(),
            state.tag_mass(1),
            &d_states,
        ));
        tracks.push_str(&track_row(
            k,
            "u",
            u_states.len(),
            state.tag_mass(0),
            &u_states,
        ));

        let true_detected = usize::from(truth.detected[k - 1]);
        steps.push(StepSummary {
            k,
            count_estimate: est.count,
            true_count: 1,
            detected_estimate: d_states.len(),
            undetected_estimate: u_states.len(),
            true_detected,
            true_undetected: 1 - true_detected,
        });
    }

    Ok(RunOutput {
        truth_jsonl,
        measurements_jsonl,
        tracks_csv: tracks,
        posterior_csv: Some(posterior),
        report: RunReport {
            scenario_hash: sha256_hex(raw),
            filter: kind.name().into(),
            seed,
            steps,
        },
    })
}

pub fn write_outputs(out_dir: &Path, output: &RunOutput) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Config(e.to_string()))?;
    let write = |name: &str, data: &str| -> Result<(), CliError> {
        std::fs::write(out_dir.join(name), data).map_err(|e| CliError::Config(e.to_string()))
    };
    write("truth.jsonl", &output.truth_jsonl)?;
    write("measurements.jsonl", &output.measurements_jsonl)?;
    write("tracks.csv", &output.tracks_csv)?;
    if let Some(p) = &output.posterior_csv {
        write("posterior.csv", p)?;
    }
    let report = serde_json::to_string_pretty(&output.report).unwrap();
    write("report.json", &(report + "\n"))?;
    Ok(())
}
