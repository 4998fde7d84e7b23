//! Trajectory data model: per-frame observations, camera rigs and whole
//! episodes, plus manifest ingestion and the scripted synthetic generator.

mod manifest;
pub mod pfm;
pub mod synthetic;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Pixel, RigidTransform, Vec3};

pub use manifest::{load_manifest, load_manifest_with, write_manifest, LoadOptions, ManifestError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageSize {
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StereoPair {
    pub right_camera_name: String,
    pub baseline_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub name: String,
    pub intrinsics: Intrinsics,
    pub image_size: ImageSize,
    /// Camera-from-world.
    pub extrinsic: RigidTransform,
    #[serde(default)]
    pub stereo: Option<StereoPair>,
}

impl CameraRig {
    pub fn contains(&self, px: &Pixel) -> bool {
        px.u >= 0.0 && px.v >= 0.0 && px.u < self.image_size.w as f64 && px.v < self.image_size.h as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameObservation {
    pub time_s: f64,
    pub images: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub depth: BTreeMap<String, Option<PathBuf>>,
    pub ee_pose: RigidTransform,
    pub gripper_raw: f64,
    #[serde(default)]
    pub wrench: Option<[f64; 6]>,
}

impl FrameObservation {
    /// Euclidean norm of the force part of the wrench, when present.
    pub fn force_magnitude(&self) -> Option<f64> {
        self.wrench.map(|w| (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt())
    }

    pub fn ee_position(&self) -> Vec3 {
        self.ee_pose.t
    }

    pub fn depth_path(&self, camera: &str) -> Option<&Path> {
        self.depth.get(camera).and_then(|p| p.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperRange {
    pub open_raw: f64,
    pub closed_raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetObject {
    pub name: String,
    #[serde(default)]
    pub point_world: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub instruction: String,
    #[serde(default)]
    pub success: Option<bool>,
    #[serde(default)]
    pub scene_tag: Option<String>,
    pub gripper_range: GripperRange,
    #[serde(default)]
    pub target_object: Option<TargetObject>,
    pub cameras: Vec<CameraRig>,
    pub frames: Vec<FrameObservation>,
    /// Directory that relative media paths are resolved against.
    #[serde(skip)]
    pub media_root: PathBuf,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn camera(&self, name: &str) -> Option<&CameraRig> {
        self.cameras.iter().find(|c| c.name == name)
    }

    pub fn object_point(&self) -> Option<Vec3> {
        self.target_object.as_ref().and_then(|o| o.point_world)
    }

    pub fn has_force(&self) -> bool {
        self.frames.iter().any(|f| f.wrench.is_some())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.media_root.join(p)
        }
    }

    pub fn normalized_aperture(&self, frame: usize) -> Result<f64, ApertureError> {
        normalize_aperture(self.frames[frame].gripper_raw, self.gripper_range)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("degenerate gripper range: open_raw == closed_raw == {0}")]
pub struct ApertureError(pub f64);

/// Maps a raw gripper reading onto [0, 1] with 0 fully open and 1 fully
/// closed, whichever way the device counts. Out-of-range readings clamp.
pub fn normalize_aperture(raw: f64, range: GripperRange) -> Result<f64, ApertureError> {
    let span = range.closed_raw - range.open_raw;
    if span == 0.0 {
        return Err(ApertureError(range.open_raw));
    }
    Ok(((raw - range.open_raw) / span).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const FRANKA: GripperRange = GripperRange { open_raw: 0.08, closed_raw: 0.0 };

    #[test]
    fn aperture_examples() {
        assert_eq!(normalize_aperture(0.08, FRANKA).unwrap(), 0.0);
        assert_eq!(normalize_aperture(0.0, FRANKA).unwrap(), 1.0);
        assert_abs_diff_eq!(normalize_aperture(0.02, FRANKA).unwrap(), 0.75, epsilon = 1e-12);
        assert_eq!(normalize_aperture(0.1, FRANKA).unwrap(), 0.0);
        assert!(normalize_aperture(0.1, GripperRange { open_raw: 0.3, closed_raw: 0.3 }).is_err());
    }

    proptest! {
        #[test]
        fn unit_range_is_clamp(x in -2.0f64..3.0) {
            let r = GripperRange { open_raw: 0.0, closed_raw: 1.0 };
            prop_assert_eq!(normalize_aperture(x, r).unwrap(), x.clamp(0.0, 1.0));
        }

        #[test]
        fn monotone_between_endpoints(a in 0.0f64..0.08, b in 0.0f64..0.08) {
            // open at 0.08, closed at 0: larger raw means more open
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(normalize_aperture(lo, FRANKA).unwrap() >= normalize_aperture(hi, FRANKA).unwrap());
        }
    }
}
