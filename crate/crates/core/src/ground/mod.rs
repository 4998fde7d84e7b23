//! Ground-truth answers derived from proprioception, force, manifest fields
//! and geometry, plus instruction parsing.

pub mod instruction;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, DirectionLabel, Vec3};
use crate::phaseseg::{PhaseLabel, SegThresholds, Segmentation};
use crate::trajmodel::{CameraRig, TrajectoryRecord};

pub use instruction::{parse_instruction, ParseError, ParsedInstruction, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Certain,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroundKind {
    GripperOpen,
    Reachable,
    StableGrasp,
    TaskSuccess,
    Direction,
    Depth,
    Correspondence,
    Phase,
    NextPhase,
    GoalFrame,
    Sequence,
    ArrowDirection,
    Instruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundValue {
    Binary(bool),
    Direction(DirectionLabel),
    Phase(PhaseLabel),
    Frame(usize),
    Order(Vec<usize>),
    Pixel([f64; 2]),
    AngleDeg(f64),
    Text(String),
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: GroundKind,
    pub value: GroundValue,
    pub confidence: Confidence,
}

impl GroundTruth {
    pub fn certain(kind: GroundKind, value: GroundValue) -> Self {
        Self { kind, value, confidence: Confidence::Certain }
    }

    pub fn undetermined(kind: GroundKind) -> Self {
        Self { kind, value: GroundValue::Unknown, confidence: Confidence::Undetermined }
    }

    pub fn binary(kind: GroundKind, yes: bool) -> Self {
        Self::certain(kind, GroundValue::Binary(yes))
    }

    pub fn is_certain(&self) -> bool {
        self.confidence == Confidence::Certain
    }

    /// `Some(yes)` for a certain binary answer.
    pub fn as_bool(&self) -> Option<bool> {
        match (&self.value, self.confidence) {
            (GroundValue::Binary(b), Confidence::Certain) => Some(*b),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroundError {
    #[error("trajectory has no target object point")]
    MissingObjectPoint,
    #[error("frame {0} is not inside a contact run")]
    NotInContact(usize),
    #[error("point behind camera `{0}`")]
    BehindCamera(String),
    #[error("points too close for a direction")]
    Degenerate,
}

/// Reachability model: a sphere around the robot base intersected with a
/// workspace box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReachParams {
    pub base_point: Vec3,
    pub radius_m: f64,
    pub workspace_min: Vec3,
    pub workspace_max: Vec3,
}

impl Default for ReachParams {
    fn default() -> Self {
        Self {
            base_point: [0.0, 0.0, 0.0],
            radius_m: 0.85,
            workspace_min: [-0.9, -0.9, -0.05],
            workspace_max: [0.9, 0.9, 0.9],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraspParams {
    /// Frames after `t` included in the stability window.
    pub window: usize,
    /// Aperture at or above which the gripper is taken to have closed on
    /// nothing.
    pub empty_close: f64,
}

impl Default for GraspParams {
    fn default() -> Self {
        Self { window: 5, empty_close: 0.98 }
    }
}

/// Yes below the grasp threshold, No at or above the closure threshold.
pub fn ground_gripper_open(s: f64, th: &SegThresholds) -> GroundTruth {
    if s < th.tau_g {
        GroundTruth::binary(GroundKind::GripperOpen, true)
    } else if s >= th.tau_c {
        GroundTruth::binary(GroundKind::GripperOpen, false)
    } else {
        GroundTruth::undetermined(GroundKind::GripperOpen)
    }
}

pub fn ground_reachable(traj: &TrajectoryRecord, reach: &ReachParams) -> Result<GroundTruth, GroundError> {
    let p = traj.object_point().ok_or(GroundError::MissingObjectPoint)?;
    let within_radius = geom::norm(geom::sub(p, reach.base_point)) <= reach.radius_m;
    let in_box = (0..3).all(|i| p[i] >= reach.workspace_min[i] && p[i] <= reach.workspace_max[i]);
    Ok(GroundTruth::binary(GroundKind::Reachable, within_radius && in_box))
}

/// Judges the grasp over frames `t..=t+window` (clipped to the trajectory).
///
/// No if the gripper closed past `empty_close` anywhere in the window or a
/// measured force stays at or below `tau_f`; Yes if every frame holds the
/// aperture in `[tau_c, empty_close)` with force above `tau_f` whenever it is
/// measured; otherwise undetermined.
pub fn ground_stable_grasp(
    traj: &TrajectoryRecord,
    seg: &Segmentation,
    t: usize,
    th: &SegThresholds,
    params: &GraspParams,
) -> Result<GroundTruth, GroundError> {
    match seg.run_at(t) {
        Some(r) if r.label == PhaseLabel::Contact => {}
        _ => return Err(GroundError::NotInContact(t)),
    }
    let end = (t + params.window).min(traj.len() - 1);
    let frames = t..=end;
    let empty = frames.clone().any(|i| seg.s[i] >= params.empty_close);
    let weak = frames.clone().any(|i| traj.frames[i].force_magnitude().is_some_and(|f| f <= th.tau_f));
    if empty || weak {
        return Ok(GroundTruth::binary(GroundKind::StableGrasp, false));
    }
    let held = frames.clone().all(|i| seg.s[i] >= th.tau_c && seg.s[i] < params.empty_close);
    let forced = frames.into_iter().all(|i| traj.frames[i].force_magnitude().is_none_or(|f| f > th.tau_f));
    Ok(if held && forced {
        GroundTruth::binary(GroundKind::StableGrasp, true)
    } else {
        GroundTruth::undetermined(GroundKind::StableGrasp)
    })
}

pub fn ground_task_success(traj: &TrajectoryRecord) -> GroundTruth {
    match traj.success {
        Some(b) => GroundTruth::binary(GroundKind::TaskSuccess, b),
        None => GroundTruth::undetermined(GroundKind::TaskSuccess),
    }
}

/// Direction from the end effector to the object in `cam`'s frame.
pub fn ground_direction(
    traj: &TrajectoryRecord,
    cam: &CameraRig,
    frame_index: usize,
    theta: f64,
) -> Result<GroundTruth, GroundError> {
    let obj = traj.object_point().ok_or(GroundError::MissingObjectPoint)?;
    let ee = traj.frames[frame_index].ee_position();
    let (o, e) = (cam.extrinsic.transform_point(obj), cam.extrinsic.transform_point(ee));
    if o[2] <= geom::MIN_VISIBLE_Z || e[2] <= geom::MIN_VISIBLE_Z {
        return Err(GroundError::BehindCamera(cam.name.clone()));
    }
    let label = geom::direction_bucket(geom::sub(o, e), theta).map_err(|_| GroundError::Degenerate)?;
    Ok(GroundTruth::certain(GroundKind::Direction, GroundValue::Direction(label)))
}
