//! Scene-wise evaluation of starting-motion detectors.
//!
//! A detector emits a per-frame probability of the moving class for a whole
//! scene. The scene's outcome is decided by the *first* frame whose
//! probability reaches the threshold: a crossing while the cyclist is still
//! waiting is a false positive, a crossing during the starting or moving
//! phase is a true positive (with a detection delay relative to the first
//! wheel movement, which may be negative), and a scene with no crossing is a
//! false negative. There are no true negatives: every scene ends in motion.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scene has no frames")]
    EmptyScene,
    #[error("trace has {trace} frames but the annotation has {annotation}")]
    LengthMismatch { trace: usize, annotation: usize },
    #[error("invalid scene annotation: {0}")]
    InvalidAnnotation(String),
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("no true positives; mean detection time is undefined")]
    NoTruePositives,
}

/// Motion phase of one frame. Phases never regress within a scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Waiting,
    Starting,
    Moving,
}

impl Phase {
    /// Starting and moving are merged into the positive class for training.
    pub fn is_positive(self) -> bool {
        !matches!(self, Phase::Waiting)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Waiting => "waiting",
            Phase::Starting => "starting",
            Phase::Moving => "moving",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s {
            "waiting" => Ok(Phase::Waiting),
            "starting" => Ok(Phase::Starting),
            "moving" => Ok(Phase::Moving),
            other => Err(EvalError::InvalidAnnotation(format!(
                "unknown phase label {other:?}"
            ))),
        }
    }
}

/// Ground-truth phase labels of one scene plus its frame rate.
///
/// Scenes begin with the cyclist waiting and always reach the moving phase;
/// the starting phase may be empty when no pre-movement motion was visible.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    frame_rate: f64,
    phases: Vec<Phase>,
    first_starting: usize,
    first_moving: usize,
}

impl SceneAnnotation {
    pub fn from_phases(phases: Vec<Phase>, frame_rate: f64) -> Result<Self, EvalError> {
        if phases.is_empty() {
            return Err(EvalError::EmptyScene);
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(EvalError::InvalidAnnotation(format!(
                "frame rate must be positive, got {frame_rate}"
            )));
        }
        if phases[0] != Phase::Waiting {
            return Err(EvalError::InvalidAnnotation(
                "scene must begin in the waiting phase".into(),
            ));
        }
        if phases.windows(2).any(|w| w[1] < w[0]) {
            return Err(EvalError::InvalidAnnotation(
                "phases must be non-decreasing (waiting -> starting -> moving)".into(),
            ));
        }
        let first_moving = phases
            .iter()
            .position(|p| *p == Phase::Moving)
            .ok_or_else(|| {
                EvalError::InvalidAnnotation("scene never reaches the moving phase".into())
            })?;
        let first_starting = phases
            .iter()
            .position(|p| p.is_positive())
            .expect("a moving frame exists");
        Ok(Self {
            frame_rate,
            phases,
            first_starting,
            first_moving,
        })
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn phase(&self, frame: usize) -> Phase {
        self.phases[frame]
    }

    /// First frame of the starting phase (equals [`first_moving`](Self::first_moving)
    /// when the starting phase is empty).
    pub fn first_starting(&self) -> usize {
        self.first_starting
    }

    /// First frame showing wheel movement; detection delays are measured from here.
    pub fn first_moving(&self) -> usize {
        self.first_moving
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        frame as f64 / self.frame_rate
    }

    /// Length of the moving phase in seconds.
    pub fn moving_phase_seconds(&self) -> f64 {
        (self.len() - self.first_moving) as f64 / self.frame_rate
    }
}

/// Per-frame probability of the moving class, aligned with a scene annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTrace {
    p_moving: Vec<f64>,
}

impl ProbabilityTrace {
    pub fn new(p_moving: Vec<f64>) -> Result<Self, EvalError> {
        for &p in &p_moving {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(EvalError::InvalidProbability(p));
            }
        }
        Ok(Self { p_moving })
    }

    pub fn values(&self) -> &[f64] {
        &self.p_moving
    }

    pub fn len(&self) -> usize {
        self.p_moving.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_moving.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SceneOutcome {
    /// First crossing fell into the starting or moving phase.
    TruePositive {
        detection_frame: usize,
        /// Seconds between detection and the first wheel movement; negative
        /// when the detector fired during the starting phase.
        delay_s: f64,
    },
    /// First crossing fell into the waiting phase.
    FalsePositive,
    /// The probability never reached the threshold.
    FalseNegative,
}

impl SceneOutcome {
    pub fn is_true_positive(self) -> bool {
        matches!(self, SceneOutcome::TruePositive { .. })
    }
}

/// Decide a scene's outcome at threshold `s` by its first frame with
/// `p_moving >= s`. The `>=` comparison makes `s = 1.0` attainable by
/// saturated probabilities.
pub fn classify_scene(
    trace: &ProbabilityTrace,
    annotation: &SceneAnnotation,
    threshold: f64,
) -> Result<SceneOutcome, EvalError> {
    if trace.is_empty() {
        return Err(EvalError::EmptyScene);
    }
    if trace.len() != annotation.len() {
        return Err(EvalError::LengthMismatch {
            trace: trace.len(),
            annotation: annotation.len(),
        });
    }
    for (frame, &p) in trace.values().iter().enumerate() {
        if p >= threshold {
            return Ok(match annotation.phase(frame) {
                Phase::Waiting => SceneOutcome::FalsePositive,
                Phase::Starting | Phase::Moving => SceneOutcome::TruePositive {
                    detection_frame: frame,
                    delay_s: (frame as f64 - annotation.first_moving() as f64)
                        / annotation.frame_rate(),
                },
            });
        }
    }
    Ok(SceneOutcome::FalseNegative)
}

/// Mean detection delay over the true positives, in seconds.
pub fn mean_detection_time(outcomes: &[SceneOutcome]) -> Result<f64, EvalError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for outcome in outcomes {
        if let SceneOutcome::TruePositive { delay_s, .. } = outcome {
            sum += delay_s;
            count += 1;
        }
    }
    if count == 0 {
        return Err(EvalError::NoTruePositives);
    }
    Ok(sum / count as f64)
}

/// Aggregate counts and scores of one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the threshold produced no true positives.
    pub mean_delay_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
}

/// Thresholds `0, step, ..., 1` where `step` must divide 1 evenly.
pub fn thresholds_with_step(step: f64) -> Vec<f64> {
    assert!(step > 0.0 && step <= 1.0, "step must be in (0, 1]");
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// The default sweep grid: 0.00 to 1.00 in steps of 0.02.
pub fn default_thresholds() -> Vec<f64> {
    thresholds_with_step(0.02)
}

pub fn point_from_outcomes(threshold: f64, outcomes: &[SceneOutcome]) -> SweepPoint {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for outcome in outcomes {
        match outcome {
            SceneOutcome::TruePositive { .. } => tp += 1,
            SceneOutcome::FalsePositive => fp += 1,
            SceneOutcome::FalseNegative => fn_ += 1,
        }
    }
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    SweepPoint {
        threshold,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision,
        recall,
        f1,
        mean_delay_s: mean_detection_time(outcomes).ok(),
    }
}

/// Classify every scene at every threshold.
pub fn sweep(
    scenes: &[(&ProbabilityTrace, &SceneAnnotation)],
    thresholds: &[f64],
) -> Result<SweepCurve, EvalError> {
    let mut points = Vec::with_capacity(thresholds.len());
    let mut outcomes = Vec::with_capacity(scenes.len());
    for &threshold in thresholds {
        outcomes.clear();
        for (trace, annotation) in scenes {
            outcomes.push(classify_scene(trace, annotation, threshold)?);
        }
        points.push(point_from_outcomes(threshold, &outcomes));
    }
    Ok(SweepCurve { points })
}

/// The operating point: maximum F1, ties broken by smaller mean delay
/// (a missing delay loses), then by smaller threshold.
pub fn select_operating_point(curve: &SweepCurve) -> Option<&SweepPoint> {
    let mut best: Option<&SweepPoint> = None;
    for point in &curve.points {
        let better = match best {
            None => true,
            Some(b) => {
                point.f1 > b.f1
                    || (point.f1 == b.f1
                        && delay_key(point.mean_delay_s) < delay_key(b.mean_delay_s))
            }
        };
        if better {
            best = Some(point);
        }
    }
    best
}

fn delay_key(delay: Option<f64>) -> f64 {
    delay.unwrap_or(f64::INFINITY)
}

/// `threshold,tp,fp,fn,precision,recall,f1,mean_delay_s` with the delay cell
/// left empty when it is undefined.
pub fn write_curve_csv<W: Write>(mut out: W, curve: &SweepCurve) -> std::io::Result<()> {
    writeln!(
        out,
        "threshold,tp,fp,fn,precision,recall,f1,mean_delay_s"
    )?;
    for p in &curve.points {
        let delay = p
            .mean_delay_s
            .map(|d| format!("{d:.6}"))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{}",
            p.threshold,
            p.true_positives,
            p.false_positives,
            p.false_negatives,
            p.precision,
            p.recall,
            p.f1,
            delay
        )?;
    }
    Ok(())
}

/// `frame,time_s,p_moving,phase` for one scene.
pub fn write_trace_csv<W: Write>(
    mut out: W,
    trace: &ProbabilityTrace,
    annotation: &SceneAnnotation,
) -> Result<(), EvalError> {
    if trace.len() != annotation.len() {
        return Err(EvalError::LengthMismatch {
            trace: trace.len(),
            annotation: annotation.len(),
        });
    }
    let io_err = |e: std::io::Error| EvalError::InvalidAnnotation(format!("write failed: {e}"));
    writeln!(out, "frame,time_s,p_moving,phase").map_err(io_err)?;
    for (frame, &p) in trace.values().iter().enumerate() {
        writeln!(
            out,
            "{},{:.6},{:.6},{}",
            frame,
            annotation.frame_time(frame),
            p,
            annotation.phase(frame)
        )
        .map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn annotation(waiting: usize, starting: usize, moving: usize, rate: f64) -> SceneAnnotation {
        let mut phases = vec![Phase::Waiting; waiting];
        phases.extend(std::iter::repeat_n(Phase::Starting, starting));
        phases.extend(std::iter::repeat_n(Phase::Moving, moving));
        SceneAnnotation::from_phases(phases, rate).unwrap()
    }

    fn trace(values: &[f64]) -> ProbabilityTrace {
        ProbabilityTrace::new(values.to_vec()).unwrap()
    }

    #[test]
    fn annotation_derives_phase_boundaries() {
        let ann = annotation(3, 2, 4, 50.0);
        assert_eq!(ann.first_starting(), 3);
        assert_eq!(ann.first_moving(), 5);
        assert_eq!(ann.len(), 9);
    }

    #[test]
    fn annotation_rejects_bad_sequences() {
        assert!(matches!(
            SceneAnnotation::from_phases(vec![], 50.0),
            Err(EvalError::EmptyScene)
        ));
        // starts moving
        assert!(SceneAnnotation::from_phases(vec![Phase::Moving], 50.0).is_err());
        // regression
        assert!(SceneAnnotation::from_phases(
            vec![Phase::Waiting, Phase::Moving, Phase::Starting],
            50.0
        )
        .is_err());
        // never moves
        assert!(SceneAnnotation::from_phases(
            vec![Phase::Waiting, Phase::Starting],
            50.0
        )
        .is_err());
        // empty starting phase is fine
        assert!(SceneAnnotation::from_phases(
            vec![Phase::Waiting, Phase::Moving],
            50.0
        )
        .is_ok());
    }

    #[test]
    fn trace_rejects_out_of_range_probabilities() {
        assert!(ProbabilityTrace::new(vec![0.0, 1.0, 0.5]).is_ok());
        assert!(ProbabilityTrace::new(vec![1.1]).is_err());
        assert!(ProbabilityTrace::new(vec![-0.1]).is_err());
        assert!(ProbabilityTrace::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn scene_without_crossing_is_false_negative() {
        let ann = annotation(2, 1, 2, 50.0);
        let tr = trace(&[0.1, 0.2, 0.3, 0.2, 0.4]);
        let outcome = classify_scene(&tr, &ann, 0.5).unwrap();
        assert_eq!(outcome, SceneOutcome::FalseNegative);
    }

    #[test]
    fn first_crossing_in_waiting_is_false_positive_even_if_later_crossings_exist() {
        let ann = annotation(2, 1, 2, 50.0);
        let tr = trace(&[0.1, 0.9, 0.1, 0.9, 0.9]);
        let outcome = classify_scene(&tr, &ann, 0.5).unwrap();
        assert_eq!(outcome, SceneOutcome::FalsePositive);
    }

    #[test]
    fn crossing_at_first_moving_frame_has_zero_delay() {
        let ann = annotation(2, 2, 3, 50.0);
        let mut values = vec![0.0; 7];
        values[4] = 0.8; // first moving frame
        values[5] = 0.9;
        let outcome = classify_scene(&trace(&values), &ann, 0.5).unwrap();
        assert_eq!(
            outcome,
            SceneOutcome::TruePositive {
                detection_frame: 4,
                delay_s: 0.0
            }
        );
    }

    #[test]
    fn crossing_in_starting_phase_has_negative_delay() {
        let ann = annotation(2, 2, 3, 50.0);
        let mut values = vec![0.0; 7];
        values[2] = 0.8; // first starting frame, two frames before moving
        let outcome = classify_scene(&trace(&values), &ann, 0.5).unwrap();
        match outcome {
            SceneOutcome::TruePositive {
                detection_frame,
                delay_s,
            } => {
                assert_eq!(detection_frame, 2);
                assert!((delay_s - (-2.0 / 50.0)).abs() < 1e-12);
            }
            other => panic!("expected true positive, got {other:?}"),
        }
    }

    #[test]
    fn threshold_comparison_is_inclusive() {
        let ann = annotation(1, 0, 1, 50.0);
        let tr = trace(&[0.0, 1.0]);
        // p == s crosses, so saturated probabilities reach s = 1.0
        let outcome = classify_scene(&tr, &ann, 1.0).unwrap();
        assert!(outcome.is_true_positive());
        // and p = 0.0 crosses s = 0.0 at the first frame
        let outcome = classify_scene(&tr, &ann, 0.0).unwrap();
        assert_eq!(outcome, SceneOutcome::FalsePositive);
    }

    #[test]
    fn empty_trace_is_an_error() {
        let ann = annotation(1, 0, 1, 50.0);
        let empty = ProbabilityTrace::new(vec![]).unwrap();
        assert!(matches!(
            classify_scene(&empty, &ann, 0.5),
            Err(EvalError::EmptyScene)
        ));
    }

    #[test]
    fn mean_detection_time_examples() {
        let outcomes = [
            SceneOutcome::TruePositive {
                detection_frame: 10,
                delay_s: 0.2,
            },
            SceneOutcome::TruePositive {
                detection_frame: 20,
                delay_s: 0.4,
            },
            SceneOutcome::FalsePositive,
        ];
        assert!((mean_detection_time(&outcomes).unwrap() - 0.3).abs() < 1e-12);

        let single = [SceneOutcome::TruePositive {
            detection_frame: 5,
            delay_s: -0.038,
        }];
        assert!((mean_detection_time(&single).unwrap() - (-0.038)).abs() < 1e-12);

        let zeros = [
            SceneOutcome::TruePositive {
                detection_frame: 1,
                delay_s: 0.0,
            },
            SceneOutcome::TruePositive {
                detection_frame: 2,
                delay_s: 0.0,
            },
        ];
        assert_eq!(mean_detection_time(&zeros).unwrap(), 0.0);

        assert!(matches!(
            mean_detection_time(&[SceneOutcome::FalsePositive]),
            Err(EvalError::NoTruePositives)
        ));
        assert!(matches!(
            mean_detection_time(&[]),
            Err(EvalError::NoTruePositives)
        ));
    }

    #[test]
    fn default_threshold_grid_is_exact() {
        let ts = default_thresholds();
        assert_eq!(ts.len(), 51);
        assert_eq!(ts[0], 0.0);
        assert_eq!(ts[1], 0.02);
        assert_eq!(ts[25], 0.5);
        assert_eq!(ts[50], 1.0);
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn sweep_all_scenes_perfect() {
        // all scenes cross first in the moving phase at s = 0.5
        let ann = annotation(2, 1, 2, 50.0);
        let traces: Vec<ProbabilityTrace> = (0..4)
            .map(|_| trace(&[0.0, 0.1, 0.2, 0.9, 0.9]))
            .collect();
        let scenes: Vec<_> = traces.iter().map(|t| (t, &ann)).collect();
        let curve = sweep(&scenes, &[0.5]).unwrap();
        let p = &curve.points[0];
        assert_eq!(
            (p.true_positives, p.false_positives, p.false_negatives),
            (4, 0, 0)
        );
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn sweep_mixed_outcomes() {
        let ann = annotation(2, 1, 2, 50.0);
        let tp = trace(&[0.0, 0.1, 0.2, 0.9, 0.9]);
        let fp = trace(&[0.9, 0.1, 0.2, 0.9, 0.9]);
        let scenes = vec![(&tp, &ann), (&fp, &ann)];
        let curve = sweep(&scenes, &[0.5]).unwrap();
        let p = &curve.points[0];
        assert_eq!(
            (p.true_positives, p.false_positives, p.false_negatives),
            (1, 1, 0)
        );
        assert_eq!(p.precision, 0.5);
        assert_eq!(p.recall, 1.0);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_at_threshold_zero_every_scene_is_a_false_positive() {
        let ann = annotation(2, 1, 2, 50.0);
        let traces: Vec<ProbabilityTrace> =
            (0..3).map(|_| trace(&[0.0, 0.0, 0.5, 0.9, 0.9])).collect();
        let scenes: Vec<_> = traces.iter().map(|t| (t, &ann)).collect();
        let curve = sweep(&scenes, &[0.0]).unwrap();
        let p = &curve.points[0];
        assert_eq!(
            (p.true_positives, p.false_positives, p.false_negatives),
            (0, 3, 0)
        );
        assert_eq!(p.precision, 0.0);
        assert_eq!(p.recall, 0.0);
        assert_eq!(p.f1, 0.0);
        assert_eq!(p.mean_delay_s, None);
    }

    #[test]
    fn operating_point_prefers_max_f1_then_min_delay_then_min_threshold() {
        let mk = |threshold, f1, delay: Option<f64>| SweepPoint {
            threshold,
            true_positives: 1,
            false_positives: 0,
            false_negatives: 0,
            precision: 1.0,
            recall: 1.0,
            f1,
            mean_delay_s: delay,
        };
        // unique max f1 wins
        let curve = SweepCurve {
            points: vec![mk(0.1, 0.8, Some(0.1)), mk(0.2, 0.9, Some(0.9))],
        };
        assert_eq!(select_operating_point(&curve).unwrap().threshold, 0.2);

        // equal f1: smaller mean delay wins
        let curve = SweepCurve {
            points: vec![mk(0.1, 1.0, Some(0.578)), mk(0.2, 1.0, Some(0.565))],
        };
        assert_eq!(select_operating_point(&curve).unwrap().threshold, 0.2);

        // equal f1 and delay: smallest threshold wins
        let curve = SweepCurve {
            points: vec![
                mk(0.1, 1.0, Some(0.5)),
                mk(0.2, 1.0, Some(0.5)),
                mk(0.3, 1.0, Some(0.5)),
            ],
        };
        assert_eq!(select_operating_point(&curve).unwrap().threshold, 0.1);

        // a defined delay beats an undefined one at equal f1
        let curve = SweepCurve {
            points: vec![mk(0.1, 0.0, None), mk(0.2, 0.0, Some(1.0))],
        };
        assert_eq!(select_operating_point(&curve).unwrap().threshold, 0.2);

        assert!(select_operating_point(&SweepCurve { points: vec![] }).is_none());
    }

    #[test]
    fn delay_is_invariant_to_shifting_the_scene_in_time() {
        let rate = 50.0;
        let ann = annotation(4, 2, 4, rate);
        let mut values = vec![0.0; 10];
        values[5] = 0.9;
        let base = classify_scene(&trace(&values), &ann, 0.5).unwrap();

        let shift = 17;
        let shifted_ann = annotation(4 + shift, 2, 4, rate);
        let mut shifted_values = vec![0.0; 10 + shift];
        shifted_values[5 + shift] = 0.9;
        let shifted = classify_scene(&trace(&shifted_values), &shifted_ann, 0.5).unwrap();

        match (base, shifted) {
            (
                SceneOutcome::TruePositive { delay_s: a, .. },
                SceneOutcome::TruePositive { delay_s: b, .. },
            ) => assert_eq!(a, b),
            other => panic!("expected two true positives, got {other:?}"),
        }
    }

    /// Literal restatement of the outcome rules, used as an oracle.
    fn classify_brute_force(
        p: &[f64],
        phases: &[Phase],
        rate: f64,
        threshold: f64,
    ) -> SceneOutcome {
        let t_moving = phases.iter().position(|x| *x == Phase::Moving).unwrap();
        for i in 0..p.len() {
            if p[i] >= threshold {
                if phases[i] == Phase::Waiting {
                    return SceneOutcome::FalsePositive;
                }
                return SceneOutcome::TruePositive {
                    detection_frame: i,
                    delay_s: (i as f64 - t_moving as f64) / rate,
                };
            }
        }
        SceneOutcome::FalseNegative
    }

    #[test]
    fn classify_and_sweep_match_brute_force_on_random_scenes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let thresholds = default_thresholds();
        for _ in 0..300 {
            let waiting = rng.gen_range(1..40);
            let starting = rng.gen_range(0..10);
            let moving = rng.gen_range(1..40);
            let ann = annotation(waiting, starting, moving, 50.0);
            let values: Vec<f64> = (0..ann.len())
                .map(|_| {
                    // mix exact grid values in so p == s ties occur
                    if rng.gen_bool(0.3) {
                        rng.gen_range(0..=50) as f64 / 50.0
                    } else {
                        rng.gen::<f64>()
                    }
                })
                .collect();
            let tr = trace(&values);
            for &s in &thresholds {
                let got = classify_scene(&tr, &ann, s).unwrap();
                let want = classify_brute_force(&values, ann.phases(), 50.0, s);
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn false_negatives_never_decrease_with_the_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let anns: Vec<SceneAnnotation> = (0..20)
            .map(|_| {
                annotation(
                    rng.gen_range(1..20),
                    rng.gen_range(0..5),
                    rng.gen_range(1..20),
                    50.0,
                )
            })
            .collect();
        let traces: Vec<ProbabilityTrace> = anns
            .iter()
            .map(|a| trace(&(0..a.len()).map(|_| rng.gen::<f64>()).collect::<Vec<_>>()))
            .collect();
        let scenes: Vec<_> = traces.iter().zip(anns.iter()).collect();
        let curve = sweep(&scenes, &default_thresholds()).unwrap();
        for w in curve.points.windows(2) {
            assert!(w[1].false_negatives >= w[0].false_negatives);
        }
        // outcome counts always partition the scene set
        for p in &curve.points {
            assert_eq!(
                p.true_positives + p.false_positives + p.false_negatives,
                scenes.len()
            );
        }
    }

    #[test]
    fn curve_csv_leaves_missing_delay_empty() {
        let ann = annotation(1, 0, 1, 50.0);
        let tr = trace(&[0.9, 0.9]);
        let scenes = vec![(&tr, &ann)];
        let curve = sweep(&scenes, &[0.5, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &curve).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "threshold,tp,fp,fn,precision,recall,f1,mean_delay_s"
        );
        assert!(lines[1].ends_with(',')); // fp at 0.5 -> no delay
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn trace_csv_has_one_row_per_frame() {
        let ann = annotation(1, 1, 1, 50.0);
        let tr = trace(&[0.1, 0.5, 0.9]);
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &tr, &ann).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "frame,time_s,p_moving,phase");
        assert_eq!(lines[1], "0,0.000000,0.100000,waiting");
        assert_eq!(lines[2], "1,0.020000,0.500000,starting");
        assert_eq!(lines[3], "2,0.040000,0.900000,moving");
    }
}
