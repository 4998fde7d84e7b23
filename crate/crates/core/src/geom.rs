//! Rigid transforms, pinhole projection and the small amount of planar
//! geometry the question generators need.
//!
//! Camera convention: x to the right, y down, z forward (optical axis).
//! Extrinsics map world coordinates into the camera frame.

use std::fmt;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajmodel::CameraRig;

pub type Vec3 = [f64; 3];

/// Tolerance on the stored quaternion norm.
pub const QUAT_NORM_TOL: f64 = 1e-6;

/// Points closer than this to the image plane are treated as not visible.
pub const MIN_VISIBLE_Z: f64 = 1e-6;

/// Minimum vector length for a direction label.
pub const MIN_DIRECTION_NORM: f64 = 0.01;

/// Default fraction of the norm a component must exceed to be named.
pub const DEFAULT_DIRECTION_THETA: f64 = 0.33;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("quaternion norm {0} is not within {QUAT_NORM_TOL} of 1")]
    BadQuaternion(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("disparity must be positive, got {0}")]
    NonPositiveDisparity(f64),
    #[error("pixel ({0}, {1}) lies outside the image")]
    PixelOutOfBounds(f64, f64),
    #[error("vector too short for a direction label")]
    Degenerate,
    #[error("zero-length vector")]
    ZeroVector,
}

/// An element of SE(3): rotation as a unit quaternion (w, x, y, z) and a
/// translation in meters.
///
/// The quaternion is stored exactly as given so that manifests round-trip;
/// all arithmetic goes through the renormalized rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub t: Vec3,
    pub q: [f64; 4],
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { t: [0.0; 3], q: [1.0, 0.0, 0.0, 0.0] }
    }

    pub fn new(t: Vec3, q: [f64; 4]) -> Result<Self, GeomError> {
        let x = Self { t, q };
        x.validate()?;
        Ok(x)
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self { t, q: [1.0, 0.0, 0.0, 0.0] }
    }

    /// Rotation of `angle` radians about `axis` followed by translation `t`.
    pub fn from_axis_angle(axis: Vec3, angle: f64, t: Vec3) -> Self {
        let axis = nalgebra::Unit::new_normalize(Vector3::from(axis));
        let r = UnitQuaternion::from_axis_angle(&axis, angle);
        Self::from_parts(r, Vector3::from(t))
    }

    /// Camera-from-world transform for a camera at `eye` looking at `target`,
    /// with `up` giving the approximate world up direction.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Self {
        let eye_v = Vector3::from(eye);
        let z = (Vector3::from(target) - eye_v).normalize();
        // image y points down, so the camera x axis is z × up
        let x = z.cross(&Vector3::from(up)).normalize();
        let y = z.cross(&x);
        let rot = nalgebra::Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let r = UnitQuaternion::from_matrix(&rot);
        let t = -(r * eye_v);
        Self::from_parts(r, t)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let n = self.q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !n.is_finite() || (n - 1.0).abs() > QUAT_NORM_TOL || self.t.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::BadQuaternion(n));
        }
        Ok(())
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_quaternion(Quaternion::new(self.q[0], self.q[1], self.q[2], self.q[3]))
    }

    fn from_parts(r: UnitQuaternion<f64>, t: Vector3<f64>) -> Self {
        let q = r.quaternion();
        Self { t: [t.x, t.y, t.z], q: [q.w, q.i, q.j, q.k] }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let r = self.rotation();
        let t = r * Vector3::from(other.t) + Vector3::from(self.t);
        Self::from_parts(r * other.rotation(), t)
    }

    pub fn inverse(&self) -> RigidTransform {
        let r_inv = self.rotation().inverse();
        let t = -(r_inv * Vector3::from(self.t));
        Self::from_parts(r_inv, t)
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        let v = self.rotation() * Vector3::from(p) + Vector3::from(self.t);
        [v.x, v.y, v.z]
    }

    pub fn translation_distance(&self, other: &RigidTransform) -> f64 {
        norm(sub(self.t, other.t))
    }

    /// Geodesic angle in radians between the two rotations, in [0, π].
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        self.rotation().angle_to(&other.rotation())
    }

    /// True when both transforms agree within `tol` on translation and
    /// rotation angle.
    pub fn approx_eq(&self, other: &RigidTransform, tol: f64) -> bool {
        self.translation_distance(other) <= tol && self.rotation_angle_to(other) <= tol
    }
}

pub fn transform_point(x: &RigidTransform, p: Vec3) -> Vec3 {
    x.transform_point(p)
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn lerp3(a: Vec3, b: Vec3, f: f64) -> Vec3 {
    [a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f, a[2] + (b[2] - a[2]) * f]
}

/// A pixel location, `u` along columns and `v` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn dist(&self, other: &Pixel) -> f64 {
        ((self.u - other.u).powi(2) + (self.v - other.v).powi(2)).sqrt()
    }

    /// Rounded integer coordinates.
    pub fn round(&self) -> (i64, i64) {
        (self.u.round() as i64, self.v.round() as i64)
    }
}

/// Projects a point already expressed in the camera frame.
pub fn project_camera_point(cam: &CameraRig, p_cam: Vec3) -> Option<Pixel> {
    if p_cam[2] <= MIN_VISIBLE_Z {
        return None;
    }
    let k = &cam.intrinsics;
    Some(Pixel { u: k.fx * p_cam[0] / p_cam[2] + k.cx, v: k.fy * p_cam[1] / p_cam[2] + k.cy })
}

/// World point to pixel. `None` means the point is behind (or on) the image
/// plane and therefore not visible; bounds are not checked here.
pub fn project(cam: &CameraRig, p_world: Vec3) -> Option<Pixel> {
    project_camera_point(cam, cam.extrinsic.transform_point(p_world))
}

/// Projects and additionally requires the pixel to fall inside the image.
pub fn project_in_bounds(cam: &CameraRig, p_world: Vec3) -> Option<Pixel> {
    project(cam, p_world).filter(|px| cam.contains(px))
}

/// Pixel plus z-depth (meters along the optical axis) to a world point.
pub fn backproject(cam: &CameraRig, uv: Pixel, depth: f64) -> Result<Vec3, GeomError> {
    if !(depth > 0.0) {
        return Err(GeomError::NonPositiveDepth(depth));
    }
    if !cam.contains(&uv) {
        return Err(GeomError::PixelOutOfBounds(uv.u, uv.v));
    }
    let k = &cam.intrinsics;
    let p_cam = [(uv.u - k.cx) / k.fx * depth, (uv.v - k.cy) / k.fy * depth, depth];
    Ok(cam.extrinsic.inverse().transform_point(p_cam))
}

pub fn depth_from_disparity(disparity_px: f64, fx: f64, baseline_m: f64) -> Result<f64, GeomError> {
    if !(disparity_px > 0.0) {
        return Err(GeomError::NonPositiveDisparity(disparity_px));
    }
    Ok(fx * baseline_m / disparity_px)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Vertical {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Horizontal {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DepthDir {
    Forward,
    Backward,
}

/// Coarse 3-D direction such as "Upper Left" or "Lower Forward".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DirectionLabel {
    pub vertical: Option<Vertical>,
    pub horizontal: Option<Horizontal>,
    pub depth: Option<DepthDir>,
}

impl DirectionLabel {
    pub fn is_empty(&self) -> bool {
        self.vertical.is_none() && self.horizontal.is_none() && self.depth.is_none()
    }

    /// Component-wise opposite.
    pub fn opposite(&self) -> DirectionLabel {
        DirectionLabel {
            vertical: self.vertical.map(|v| match v {
                Vertical::Upper => Vertical::Lower,
                Vertical::Lower => Vertical::Upper,
            }),
            horizontal: self.horizontal.map(|h| match h {
                Horizontal::Left => Horizontal::Right,
                Horizontal::Right => Horizontal::Left,
            }),
            depth: self.depth.map(|d| match d {
                DepthDir::Forward => DepthDir::Backward,
                DepthDir::Backward => DepthDir::Forward,
            }),
        }
    }

    /// Number of present components equal in both labels.
    pub fn shared_components(&self, other: &DirectionLabel) -> usize {
        let v = (self.vertical.is_some() && self.vertical == other.vertical) as usize;
        let h = (self.horizontal.is_some() && self.horizontal == other.horizontal) as usize;
        let d = (self.depth.is_some() && self.depth == other.depth) as usize;
        v + h + d
    }

    /// All 26 non-empty labels, in a fixed order.
    pub fn all() -> Vec<DirectionLabel> {
        let vs = [None, Some(Vertical::Upper), Some(Vertical::Lower)];
        let hs = [None, Some(Horizontal::Left), Some(Horizontal::Right)];
        let ds = [None, Some(DepthDir::Forward), Some(DepthDir::Backward)];
        let mut out = Vec::with_capacity(26);
        for vertical in vs {
            for horizontal in hs {
                for depth in ds {
                    let l = DirectionLabel { vertical, horizontal, depth };
                    if !l.is_empty() {
                        out.push(l);
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for DirectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<&str> = Vec::with_capacity(3);
        if let Some(v) = self.vertical {
            parts.push(match v {
                Vertical::Upper => "Upper",
                Vertical::Lower => "Lower",
            });
        }
        if let Some(h) = self.horizontal {
            parts.push(match h {
                Horizontal::Left => "Left",
                Horizontal::Right => "Right",
            });
        }
        if let Some(d) = self.depth {
            parts.push(match d {
                DepthDir::Forward => "Forward",
                DepthDir::Backward => "Backward",
            });
        }
        f.write_str(&parts.join(" "))
    }
}

/// Buckets a camera-frame vector into a direction label. A component is
/// named when its magnitude exceeds `theta` times the vector norm.
pub fn direction_bucket(v: Vec3, theta: f64) -> Result<DirectionLabel, GeomError> {
    let n = norm(v);
    if !(n >= MIN_DIRECTION_NORM) {
        return Err(GeomError::Degenerate);
    }
    let cut = theta * n;
    let label = DirectionLabel {
        vertical: (v[1].abs() > cut).then(|| if v[1] < 0.0 { Vertical::Upper } else { Vertical::Lower }),
        horizontal: (v[0].abs() > cut).then(|| if v[0] > 0.0 { Horizontal::Right } else { Horizontal::Left }),
        depth: (v[2].abs() > cut).then(|| if v[2] > 0.0 { DepthDir::Forward } else { DepthDir::Backward }),
    };
    if label.is_empty() {
        return Err(GeomError::Degenerate);
    }
    Ok(label)
}

/// Unsigned angle between two planar vectors, in degrees within [0, 180].
pub fn angular_separation(a: [f64; 2], b: [f64; 2]) -> Result<f64, GeomError> {
    let na = (a[0] * a[0] + a[1] * a[1]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1]).sqrt();
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(GeomError::ZeroVector);
    }
    let c = ((a[0] * b[0] + a[1] * b[1]) / (na * nb)).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Smallest unsigned difference between two angles given in degrees.
pub fn angle_diff_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}
