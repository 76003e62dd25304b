//! Ground-truth multi-object trajectory and measurement-scan generation
//! under the standard models, with seeded determinism.
//!
//! Randomness is split into one substream per `(step, process)` pair —
//! survival, motion, appearance, detection, measurement noise, clutter — so
//! that, for example, changing the clutter rate never perturbs the
//! trajectories drawn for the same seed.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::model::{FiniteModel, GaussianMixture, ScenarioModel};
use crate::{real, Scalar};

/// One live target in a truth record. The detected flag is the ground-truth
/// tag: false until the target first generates a measurement, then true for
/// the rest of its life.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTarget<S: Scalar> {
    pub id: u64,
    pub state: DVector<S>,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord<S: Scalar> {
    pub k: usize,
    pub targets: Vec<TruthTarget<S>>,
}

/// Origin bookkeeping for one measurement; diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasOrigin {
    Target(u64),
    Clutter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord<S: Scalar> {
    pub k: usize,
    pub measurements: Vec<DVector<S>>,
    pub origins: Vec<MeasOrigin>,
}

/// When the truth flag of a freshly detected target flips: at the step after
/// first detection (the detection process takes nonzero time, so its effect
/// lands on the next observation time) or at the same step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlagTiming {
    #[default]
    NextStep,
    SameStep,
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions<S: Scalar> {
    pub flag_timing: FlagTiming,
    /// Targets alive at step zero (all undetected).
    pub initial_states: Vec<DVector<S>>,
}

const PROC_SURVIVAL: u64 = 0;
const PROC_MOTION: u64 = 1;
const PROC_BIRTH: u64 = 2;
const PROC_DETECTION: u64 = 3;
const PROC_NOISE: u64 = 4;
const PROC_CLUTTER: u64 = 5;

fn stream(seed: u64, step: usize, process: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((step as u64) << 3) | process);
    rng
}

fn draw_normal_vec<S: Scalar>(rng: &mut ChaCha8Rng, dim: usize) -> DVector<S> {
    DVector::from_iterator(
        dim,
        (0..dim).map(|_| {
            real(<StandardNormal as Distribution<f64>>::sample(
                &StandardNormal,
                rng,
            ))
        }),
    )
}

fn draw_mvn<S: Scalar>(rng: &mut ChaCha8Rng, mean: &DVector<S>, cov: &DMatrix<S>) -> DVector<S> {
    let chol = Cholesky::new(cov.clone()).expect("positive-definite covariance");
    mean + chol.l() * draw_normal_vec::<S>(rng, mean.len())
}

fn draw_poisson(rng: &mut ChaCha8Rng, rate: f64) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as usize
}

fn draw_from_mixture<S: Scalar>(rng: &mut ChaCha8Rng, gm: &GaussianMixture<S>) -> DVector<S> {
    let total = gm.mass().to_f64().unwrap();
    let mut pick = rng.random_range(0.0..total.max(f64::MIN_POSITIVE));
    for c in &gm.components {
        pick -= c.weight.to_f64().unwrap();
        if pick <= 0.0 {
            return draw_mvn(rng, &c.mean, &c.cov);
        }
    }
    let last = gm.components.last().expect("nonempty mixture");
    draw_mvn(rng, &last.mean, &last.cov)
}

struct LiveTarget<S: Scalar> {
    id: u64,
    state: DVector<S>,
    detected: bool,
    pending_flag: bool,
}

/// Simulates `steps` scans. Step `k` of the output runs from 1 to `steps`;
/// the truth record at `k` holds the targets alive when scan `k` was taken.
pub fn simulate<S: Scalar>(
    model: &ScenarioModel<S>,
    steps: usize,
    seed: u64,
    options: &SimOptions<S>,
) -> (Vec<TruthRecord<S>>, Vec<MeasurementRecord<S>>) {
    let mut live: Vec<LiveTarget<S>> = options
        .initial_states
        .iter()
        .enumerate()
        .map(|(i, s)| LiveTarget {
            id: i as u64,
            state: s.clone(),
            detected: false,
            pending_flag: false,
        })
        .collect();
    let mut next_id = live.len() as u64;
    let mut truth = Vec::with_capacity(steps);
    let mut scans = Vec::with_capacity(steps);

    let p_s = model.motion.p_survive.to_f64().unwrap();
    let p_d = model.measurement.p_detect.to_f64().unwrap();

    for k in 1..=steps {
        // Flags earned at the previous step become visible now.
        for t in &mut live {
            if t.pending_flag {
                t.detected = true;
                t.pending_flag = false;
            }
        }

        let mut rng = stream(seed, k, PROC_SURVIVAL);
        live.retain(|_| rng.random_range(0.0..1.0) < p_s);

        let mut rng = stream(seed, k, PROC_MOTION);
        for t in &mut live {
            let mean = &model.motion.transition * &t.state;
            t.state = draw_mvn(&mut rng, &mean, &model.motion.process_noise);
        }

        let mut rng = stream(seed, k, PROC_BIRTH);
        let born = draw_poisson(&mut rng, model.birth.mass().to_f64().unwrap());
        for _ in 0..born {
            live.push(LiveTarget {
                id: next_id,
                state: draw_from_mixture(&mut rng, &model.birth),
                detected: false,
                pending_flag: false,
            });
            next_id += 1;
        }

        let mut rng = stream(seed, k, PROC_DETECTION);
        let detected_now: Vec<bool> = live
            .iter()
            .map(|_| rng.random_range(0.0..1.0) < p_d)
            .collect();

        let mut rng = stream(seed, k, PROC_NOISE);
        let mut measurements = Vec::new();
        let mut origins = Vec::new();
        for (t, &hit) in live.iter().zip(&detected_now) {
            if hit {
                let mean = &model.measurement.observation * &t.state;
                measurements.push(draw_mvn(&mut rng, &mean, &model.measurement.noise));
                origins.push(MeasOrigin::Target(t.id));
            }
        }

        let mut rng = stream(seed, k, PROC_CLUTTER);
        let n_clutter = draw_poisson(&mut rng, model.clutter.rate.to_f64().unwrap());
        for _ in 0..n_clutter {
            let z = DVector::from_iterator(
                model.meas_dim,
                model.clutter.region.iter().map(|&(lo, hi)| {
                    let u = rng.random_range(0.0..1.0);
                    lo + (hi - lo) * real::<S>(u)
                }),
            );
            measurements.push(z);
            origins.push(MeasOrigin::Clutter);
        }

        for (t, &hit) in live.iter_mut().zip(&detected_now) {
            if hit {
                match options.flag_timing {
                    FlagTiming::SameStep => t.detected = true,
                    FlagTiming::NextStep => t.pending_flag = true,
                }
            }
        }

        truth.push(TruthRecord {
            k,
            targets: live
                .iter()
                .map(|t| TruthTarget {
                    id: t.id,
                    state: t.state.clone(),
                    detected: t.detected,
                })
                .collect(),
        });
        scans.push(MeasurementRecord {
            k,
            measurements,
            origins,
        });
    }
    (truth, scans)
}

/// Single-object truth on a finite grid: a Markov walk with missed
/// detections and no clutter, so every scan is empty or singleton. The
/// detected flag follows the configured timing.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTruth {
    pub states: Vec<usize>,
    pub detected: Vec<bool>,
    /// One optional measurement index per step.
    pub scans: Vec<Option<usize>>,
}

pub fn simulate_grid<S: Scalar>(
    model: &FiniteModel<S>,
    prior: &[S],
    steps: usize,
    seed: u64,
    flag_timing: FlagTiming,
) -> GridTruth {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_row = |rng: &mut ChaCha8Rng, row: &[S]| -> usize {
        let mut pick: f64 = rng.random_range(0.0..1.0);
        for (i, &p) in row.iter().enumerate() {
            pick -= p.to_f64().unwrap();
            if pick <= 0.0 {
                return i;
            }
        }
        row.len() - 1
    };
    let mut x = sample_row(&mut rng, prior);
    let mut detected = false;
    let mut pending = false;
    let mut out = GridTruth {
        states: Vec::with_capacity(steps),
        detected: Vec::with_capacity(steps),
        scans: Vec::with_capacity(steps),
    };
    for _ in 0..steps {
        if pending {
            detected = true;
            pending = false;
        }
        x = sample_row(&mut rng, &model.markov[x]);
        let hit = rng.random_range(0.0..1.0) < model.p_d[x].to_f64().unwrap();
        let scan = if hit {
            Some(sample_row(&mut rng, &model.likelihood[x]))
        } else {
            None
        };
        if hit {
            match flag_timing {
                FlagTiming::SameStep => detected = true,
                FlagTiming::NextStep => pending = true,
            }
        }
        out.states.push(x);
        out.detected.push(detected);
        out.scans.push(scan);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::fixtures;

    fn model() -> ScenarioModel<f64> {
        fixtures::reference_scenario().to_model().unwrap()
    }

    fn options_with_targets(n: usize) -> SimOptions<f64> {
        SimOptions {
            flag_timing: FlagTiming::NextStep,
            initial_states: (0..n)
                .map(|i| DVector::from_row_slice(&[i as f64 * 10.0 - 10.0, 0.5]))
                .collect(),
        }
    }

    #[test]
    fn same_seed_reproduces_bit_identical_output() {
        let m = model();
        let opts = options_with_targets(2);
        let a = simulate(&m, 8, 42, &opts);
        let b = simulate(&m, 8, 42, &opts);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn perfect_detection_no_clutter_yields_one_measurement_per_target() {
        let mut m = model();
        m.measurement.p_detect = 1.0;
        m.clutter.rate = 0.0;
        m.birth = GaussianMixture::empty();
        m.motion.p_survive = 1.0;
        let opts = options_with_targets(3);
        let (truth, scans) = simulate(&m, 6, 7, &opts);
        for (t, s) in truth.iter().zip(&scans) {
            assert_eq!(s.measurements.len(), t.targets.len());
        }
    }

    #[test]
    fn certain_survival_and_no_birth_keeps_count_constant() {
        let mut m = model();
        m.motion.p_survive = 1.0;
        m.birth = GaussianMixture::empty();
        let opts = options_with_targets(3);
        let (truth, _) = simulate(&m, 10, 3, &opts);
        assert!(truth.iter().all(|r| r.targets.len() == 3));
    }

    #[test]
    fn detected_flags_are_monotone_per_target() {
        let m = model();
        let opts = options_with_targets(3);
        let (truth, _) = simulate(&m, 15, 11, &opts);
        let mut seen: std::collections::BTreeMap<u64, bool> = Default::default();
        for rec in &truth {
            for t in &rec.targets {
                let prev = seen.insert(t.id, t.detected).unwrap_or(false);
                assert!(!(prev && !t.detected), "flag reverted for target {}", t.id);
            }
        }
    }

    #[test]
    fn origins_form_injection_from_detected_targets() {
        let m = model();
        let opts = options_with_targets(3);
        let (_, scans) = simulate(&m, 15, 19, &opts);
        for s in &scans {
            let mut ids: Vec<u64> = s
                .origins
                .iter()
                .filter_map(|o| match o {
                    MeasOrigin::Target(id) => Some(*id),
                    MeasOrigin::Clutter => None,
                })
                .collect();
            let before = ids.len();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(before, ids.len(), "a target produced two measurements");
            assert_eq!(s.origins.len(), s.measurements.len());
        }
    }

    #[test]
    fn same_step_timing_flips_earlier_than_next_step() {
        let mut m = model();
        m.measurement.p_detect = 1.0;
        m.clutter.rate = 0.0;
        m.birth = GaussianMixture::empty();
        m.motion.p_survive = 1.0;
        let mut opts = options_with_targets(1);
        opts.flag_timing = FlagTiming::SameStep;
        let (truth_same, _) = simulate(&m, 3, 5, &opts);
        assert!(truth_same[0].targets[0].detected);
        opts.flag_timing = FlagTiming::NextStep;
        let (truth_next, _) = simulate(&m, 3, 5, &opts);
        assert!(!truth_next[0].targets[0].detected);
        assert!(truth_next[1].targets[0].detected);
    }

    #[test]
    fn clutter_count_obeys_law_of_large_numbers() {
        let mut m = model();
        m.clutter.rate = 5.0;
        m.birth = GaussianMixture::empty();
        let opts = SimOptions::default();
        let (_, scans) = simulate(&m, 10_000, 1234, &opts);
        let mean = scans
            .iter()
            .map(|s| s.measurements.len() as f64)
            .sum::<f64>()
            / 10_000.0;
        let bound = 3.0 * (5.0f64 / 10_000.0).sqrt() * 5.0f64.sqrt();
        assert!((mean - 5.0).abs() < bound, "mean {mean} outside {bound}");
    }

    #[test]
    fn clutter_stream_does_not_perturb_trajectories() {
        let mut low = model();
        low.clutter.rate = 0.5;
        let mut high = model();
        high.clutter.rate = 20.0;
        let opts = options_with_targets(2);
        let (truth_low, _) = simulate(&low, 8, 42, &opts);
        let (truth_high, _) = simulate(&high, 8, 42, &opts);
        assert_eq!(truth_low, truth_high);
    }
}
