//! Manipulation phase segmentation from gripper aperture and contact force.
//!
//! Every frame is labeled by a fixed case statement over the smoothed
//! normalized aperture `s`, its finite difference `ds`, the force magnitude
//! and the previous confident phase. Labels may only move forward along
//! Approach ≺ Stabilize ≺ Contact ≺ Release ≺ Reset, with Reset → Approach
//! starting a new cycle; anything else becomes Transition.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajmodel::{normalize_aperture, ApertureError, TrajectoryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseLabel {
    Approach,
    Stabilize,
    Contact,
    Release,
    Reset,
    Transition,
}

impl PhaseLabel {
    pub const ALL: [PhaseLabel; 6] = [
        PhaseLabel::Approach,
        PhaseLabel::Stabilize,
        PhaseLabel::Contact,
        PhaseLabel::Release,
        PhaseLabel::Reset,
        PhaseLabel::Transition,
    ];

    /// The five phases of the chain, in order.
    pub const CHAIN: [PhaseLabel; 5] =
        [PhaseLabel::Approach, PhaseLabel::Stabilize, PhaseLabel::Contact, PhaseLabel::Release, PhaseLabel::Reset];

    /// Position in the chain; `None` for Transition.
    pub fn rank(self) -> Option<usize> {
        Self::CHAIN.iter().position(|p| *p == self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::Approach => "approach",
            PhaseLabel::Stabilize => "stabilize",
            PhaseLabel::Contact => "contact",
            PhaseLabel::Release => "release",
            PhaseLabel::Reset => "reset",
            PhaseLabel::Transition => "transition",
        }
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhaseLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PhaseLabel::ALL
            .iter()
            .copied()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown phase `{s}`"))
    }
}

/// How the aperture-derivative tests of Approach, Release and Reset are
/// signed. `Paper` evaluates the rules exactly as published; `Kinematic`
/// flips those three tests so that opening the gripper (s decreasing) is what
/// Release and Reset look for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    #[default]
    Paper,
    Kinematic,
}

impl FromStr for SignMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(SignMode::Paper),
            "kinematic" => Ok(SignMode::Kinematic),
            _ => Err(format!("unknown sign mode `{s}` (expected paper|kinematic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegThresholds {
    pub tau_g: f64,
    pub tau_c: f64,
    pub tau_f: f64,
    pub epsilon: f64,
    pub smooth_window: usize,
    #[serde(default)]
    pub sign_mode: SignMode,
}

impl Default for SegThresholds {
    fn default() -> Self {
        Self { tau_g: 0.25, tau_c: 0.75, tau_f: 2.0, epsilon: 0.02, smooth_window: 5, sign_mode: SignMode::Paper }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid thresholds: {0}")]
pub struct ThresholdError(pub String);

impl SegThresholds {
    pub fn validate(&self) -> Result<(), ThresholdError> {
        if !(0.0 < self.tau_g && self.tau_g < self.tau_c && self.tau_c < 1.0) {
            return Err(ThresholdError("need 0 < tau_g < tau_c < 1".into()));
        }
        if !(self.tau_f >= 0.0) {
            return Err(ThresholdError("tau_f must be nonnegative".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(ThresholdError("epsilon must be positive".into()));
        }
        if self.smooth_window == 0 || self.smooth_window.is_multiple_of(2) {
            return Err(ThresholdError("smooth_window must be odd and at least 1".into()));
        }
        Ok(())
    }
}

/// A maximal run of one label, `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseRun {
    pub label: PhaseLabel,
    pub start_index: usize,
    pub end_index: usize,
}

impl PhaseRun {
    pub fn len(&self) -> usize {
        self.end_index - self.start_index + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start_index <= i && i <= self.end_index
    }
}

/// Median filter with edge replication.
pub fn median_filter(x: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 || x.is_empty() {
        return x.to_vec();
    }
    let half = (window / 2) as isize;
    let last = x.len() as isize - 1;
    let mut buf = Vec::with_capacity(window);
    (0..x.len() as isize)
        .map(|i| {
            buf.clear();
            buf.extend((i - half..=i + half).map(|j| x[j.clamp(0, last) as usize]));
            buf.sort_by(f64::total_cmp);
            buf[buf.len() / 2]
        })
        .collect()
}

/// Smoothed normalized aperture and its backward difference (`ds[0] = 0`).
pub fn aperture_series(traj: &TrajectoryRecord, th: &SegThresholds) -> Result<(Vec<f64>, Vec<f64>), ApertureError> {
    let raw = traj
        .frames
        .iter()
        .map(|f| normalize_aperture(f.gripper_raw, traj.gripper_range))
        .collect::<Result<Vec<_>, _>>()?;
    let s = median_filter(&raw, th.smooth_window);
    let ds = differences(&s);
    Ok((s, ds))
}

pub fn differences(s: &[f64]) -> Vec<f64> {
    (0..s.len()).map(|t| if t == 0 { 0.0 } else { s[t] - s[t - 1] }).collect()
}

/// Labels one frame. `force_mag` is `None` when the trajectory has no force
/// channel at this frame.
pub fn classify_frame(s: f64, ds: f64, force_mag: Option<f64>, prev: PhaseLabel, th: &SegThresholds) -> PhaseLabel {
    let eps = th.epsilon;
    let still = ds.abs() <= eps;
    let (opening, closing) = (ds < -eps, ds > eps);
    // Approach/Release/Reset derivative tests, swapped in kinematic mode
    let (app_dir, rel_dir, reset_dir) = match th.sign_mode {
        SignMode::Paper => (opening, closing, closing),
        SignMode::Kinematic => (closing, opening, opening),
    };
    let open = s < th.tau_g;
    let closed = s >= th.tau_c;
    let force_ok = force_mag.is_none_or(|f| f > th.tau_f);

    if open && app_dir {
        PhaseLabel::Approach
    } else if prev == PhaseLabel::Approach && open && still {
        PhaseLabel::Stabilize
    } else if prev == PhaseLabel::Stabilize && closed && still && force_ok {
        PhaseLabel::Contact
    } else if prev == PhaseLabel::Contact && closed && rel_dir {
        PhaseLabel::Release
    } else if prev == PhaseLabel::Release && open && reset_dir {
        PhaseLabel::Reset
    } else {
        PhaseLabel::Transition
    }
}

/// Whether `next` may follow the last confident phase `last`.
pub fn order_allows(last: Option<PhaseLabel>, next: PhaseLabel) -> bool {
    match (last.and_then(PhaseLabel::rank), next.rank()) {
        (_, None) | (None, _) => true,
        (Some(a), Some(b)) => b >= a || (last == Some(PhaseLabel::Reset) && next == PhaseLabel::Approach),
    }
}

/// Demotes every backward step in the chain to Transition.
pub fn enforce_order(labels: &[PhaseLabel]) -> Vec<PhaseLabel> {
    let mut last = None;
    labels
        .iter()
        .map(|&l| {
            if l == PhaseLabel::Transition {
                l
            } else if order_allows(last, l) {
                last = Some(l);
                l
            } else {
                PhaseLabel::Transition
            }
        })
        .collect()
}

/// Number of consecutive non-Transition pairs that break the chain order.
pub fn order_violations(labels: &[PhaseLabel]) -> usize {
    let mut last = None;
    let mut bad = 0;
    for &l in labels.iter().filter(|l| **l != PhaseLabel::Transition) {
        if !order_allows(last, l) {
            bad += 1;
        }
        last = Some(l);
    }
    bad
}

pub fn run_length(labels: &[PhaseLabel]) -> Vec<PhaseRun> {
    let mut runs: Vec<PhaseRun> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.label == l => r.end_index = i,
            _ => runs.push(PhaseRun { label: l, start_index: i, end_index: i }),
        }
    }
    runs
}

/// Non-Transition labels with consecutive repeats collapsed.
pub fn collapse_non_transition(labels: &[PhaseLabel]) -> Vec<PhaseLabel> {
    let mut out: Vec<PhaseLabel> = Vec::new();
    for &l in labels.iter().filter(|l| **l != PhaseLabel::Transition) {
        if out.last() != Some(&l) {
            out.push(l);
        }
    }
    out
}

/// Full per-trajectory segmentation output.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub s: Vec<f64>,
    pub ds: Vec<f64>,
    pub labels: Vec<PhaseLabel>,
    pub runs: Vec<PhaseRun>,
}

impl Segmentation {
    pub fn run_at(&self, frame: usize) -> Option<&PhaseRun> {
        self.runs.iter().find(|r| r.contains(frame))
    }

    /// First non-Transition run starting after `frame`'s run.
    pub fn next_phase_after(&self, frame: usize) -> Option<PhaseLabel> {
        self.runs
            .iter()
            .filter(|r| r.start_index > frame && r.label != PhaseLabel::Transition)
            .find(|r| self.run_at(frame).is_none_or(|cur| r.start_index > cur.end_index))
            .map(|r| r.label)
    }
}

/// Labels every frame and returns the runs.
///
/// `prev` for frame t is the most recent confident (non-Transition) label that
/// survived the order check, or Transition before the first one.
pub fn segment_full(traj: &TrajectoryRecord, th: &SegThresholds) -> Result<Segmentation, ApertureError> {
    let (s, ds) = aperture_series(traj, th)?;
    let mut last: Option<PhaseLabel> = None;
    let raw: Vec<PhaseLabel> = (0..s.len())
        .map(|t| {
            let prev = last.unwrap_or(PhaseLabel::Transition);
            let force = traj.frames[t].force_magnitude();
            let mut l = classify_frame(s[t], ds[t], force, prev, th);
            if !order_allows(last, l) {
                l = PhaseLabel::Transition;
            }
            if l != PhaseLabel::Transition {
                last = Some(l);
            }
            l
        })
        .collect();
    let labels = enforce_order(&raw);
    let runs = run_length(&labels);
    Ok(Segmentation { s, ds, labels, runs })
}

pub fn segment(traj: &TrajectoryRecord, th: &SegThresholds) -> Result<Vec<PhaseRun>, ApertureError> {
    segment_full(traj, th).map(|s| s.runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use PhaseLabel::*;

    fn th() -> SegThresholds {
        SegThresholds::default()
    }

    #[test]
    fn median_examples() {
        assert_eq!(median_filter(&[0.0, 0.0, 1.0, 0.0, 0.0], 3), vec![0.0; 5]);
        assert_eq!(median_filter(&[0.0, 0.5, 1.0], 1), vec![0.0, 0.5, 1.0]);
        assert_eq!(differences(&[0.0, 0.5, 1.0]), vec![0.0, 0.5, 0.5]);
        // monotone ramps pass through unchanged
        let ramp: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        assert_eq!(median_filter(&ramp, 5), ramp);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_frame(0.10, -0.05, None, Transition, &th()), Approach);
        assert_eq!(classify_frame(0.80, 0.00, Some(3.0), Stabilize, &th()), Contact);
        assert_eq!(classify_frame(0.50, 0.10, None, Stabilize, &th()), Transition);
        assert_eq!(classify_frame(0.10, 0.0, None, Approach, &th()), Stabilize);
        assert_eq!(classify_frame(0.9, 0.05, None, Contact, &th()), Release);
        assert_eq!(classify_frame(0.1, 0.05, None, Release, &th()), Reset);
        // closing with no rule
        assert_eq!(classify_frame(0.5, 0.05, None, Stabilize, &th()), Transition);
    }

    #[test]
    fn kinematic_mode_flips_derivative_tests() {
        let k = SegThresholds { sign_mode: SignMode::Kinematic, ..th() };
        assert_eq!(classify_frame(0.9, -0.05, None, Contact, &k), Release);
        assert_eq!(classify_frame(0.9, 0.05, None, Contact, &k), Transition);
        assert_eq!(classify_frame(0.1, -0.05, None, Release, &k), Reset);
        assert_eq!(classify_frame(0.1, 0.05, None, Transition, &k), Approach);
    }

    #[test]
    fn force_gates_contact() {
        assert_eq!(classify_frame(0.8, 0.0, Some(1.0), Stabilize, &th()), Transition);
        assert_eq!(classify_frame(0.8, 0.0, Some(2.0), Stabilize, &th()), Transition);
        assert_eq!(classify_frame(0.8, 0.0, None, Stabilize, &th()), Contact);
    }

    #[test]
    fn order_examples() {
        assert_eq!(enforce_order(&[Approach, Contact, Stabilize]), vec![Approach, Contact, Transition]);
        assert_eq!(enforce_order(&[Reset, Approach]), vec![Reset, Approach]);
        assert_eq!(enforce_order(&[Approach, Contact]), vec![Approach, Contact]);
        assert_eq!(
            enforce_order(&[Transition, Release, Transition, Stabilize]),
            vec![Transition, Release, Transition, Transition]
        );
        assert_eq!(order_violations(&[Approach, Contact, Stabilize]), 1);
    }

    #[test]
    fn thresholds_validate() {
        assert!(th().validate().is_ok());
        assert!(SegThresholds { tau_g: 0.8, ..th() }.validate().is_err());
        assert!(SegThresholds { smooth_window: 4, ..th() }.validate().is_err());
        assert!(SegThresholds { epsilon: 0.0, ..th() }.validate().is_err());
    }

    #[test]
    fn run_length_tiles() {
        let runs = run_length(&[Transition, Transition, Approach, Stabilize, Stabilize]);
        assert_eq!(runs.len(), 3);
        assert_eq!((runs[2].start_index, runs[2].end_index), (3, 4));
    }

    fn arb_label() -> impl Strategy<Value = PhaseLabel> {
        prop::sample::select(PhaseLabel::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn classify_is_total(s in 0.0f64..=1.0, ds in -1.0f64..1.0, f in prop::option::of(0.0f64..10.0), prev in arb_label()) {
            let _ = classify_frame(s, ds, f, prev, &th());
        }

        #[test]
        fn enforce_order_output_has_no_violations(labels in prop::collection::vec(arb_label(), 0..60)) {
            let out = enforce_order(&labels);
            prop_assert_eq!(order_violations(&out), 0);
            prop_assert_eq!(enforce_order(&out), out.clone());
            // transitions stay transitions
            for (a, b) in labels.iter().zip(&out) {
                if *a == Transition { prop_assert_eq!(*b, Transition); }
                prop_assert!(*b == *a || *b == Transition);
            }
        }

        #[test]
        fn contact_force_gating(s in 0.75f64..=1.0, ds in -0.02f64..=0.02, f in 0.0f64..10.0) {
            prop_assert_eq!(classify_frame(s, ds, None, Stabilize, &th()), Contact);
            let with_force = classify_frame(s, ds, Some(f), Stabilize, &th());
            prop_assert_eq!(with_force == Contact, f > 2.0);
        }
    }
}
