use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{pfm, TrajectoryRecord};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("[{traj_id}] schema violation at `{path}`: {message}")]
    Schema { traj_id: String, path: String, message: String },
    #[error("[{traj_id}] unknown key `{path}` (strict mode)")]
    UnknownKey { traj_id: String, path: String },
    #[error("[{traj_id}] `{field}`: missing media file {file}")]
    MissingMedia { traj_id: String, field: String, file: PathBuf },
    #[error("[{traj_id}] `{field}`: unreadable media {file}: {message}")]
    BadMedia { traj_id: String, field: String, file: PathBuf, message: String },
    #[error("[{traj_id}] `frames[{index}].time_s`: non-monotone timestamps")]
    NonMonotone { traj_id: String, index: usize },
    #[error("[{traj_id}] `{field}`: bad quaternion (norm {norm})")]
    BadQuaternion { traj_id: String, field: String, norm: f64 },
    #[error("[{traj_id}] `{field}`: {message}")]
    Invalid { traj_id: String, field: String, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Reject keys the schema does not know.
    pub strict: bool,
    /// Check that every referenced image and depth file exists and has a
    /// readable header matching the camera.
    pub skip_media_check: bool,
}

pub fn load_manifest(path: &Path) -> Result<TrajectoryRecord, ManifestError> {
    load_manifest_with(path, LoadOptions::default())
}

pub fn load_manifest_with(path: &Path, opts: LoadOptions) -> Result<TrajectoryRecord, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| ManifestError::Schema {
        traj_id: "?".into(),
        path: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let traj_id = value.get("id").and_then(|v| v.as_str()).unwrap_or("?").to_string();

    let mut unknown = Vec::new();
    let mut on_unknown = |p: serde_ignored::Path<'_>| unknown.push(p.to_string());
    let de = serde_ignored::Deserializer::new(&value, &mut on_unknown);
    let result: Result<TrajectoryRecord, _> = serde_path_to_error::deserialize(de);
    let mut record = result.map_err(|e| ManifestError::Schema {
        traj_id: traj_id.clone(),
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    if opts.strict {
        if let Some(p) = unknown.into_iter().next() {
            return Err(ManifestError::UnknownKey { traj_id, path: p });
        }
    }
    record.media_root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    validate(&record)?;
    if !opts.skip_media_check {
        check_media(&record)?;
    }
    Ok(record)
}

/// Serializes the manifest as pretty JSON with a trailing newline. Media
/// paths are written exactly as stored.
pub fn write_manifest(record: &TrajectoryRecord, path: &Path) -> Result<(), ManifestError> {
    let io = |source| ManifestError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut text = serde_json::to_string_pretty(record).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(io)
}

fn invalid(traj_id: &str, field: impl Into<String>, message: impl Into<String>) -> ManifestError {
    ManifestError::Invalid { traj_id: traj_id.to_string(), field: field.into(), message: message.into() }
}

/// Checks every structural invariant of a record.
pub(crate) fn validate(r: &TrajectoryRecord) -> Result<(), ManifestError> {
    let id = r.id.as_str();
    if r.id.is_empty() {
        return Err(invalid("?", "id", "empty id"));
    }
    if r.frames.is_empty() {
        return Err(invalid(id, "frames", "trajectory has no frames"));
    }
    if r.gripper_range.open_raw == r.gripper_range.closed_raw || !r.gripper_range.open_raw.is_finite() {
        return Err(invalid(id, "gripper_range", "open_raw must differ from closed_raw"));
    }

    let mut names = BTreeSet::new();
    for (i, c) in r.cameras.iter().enumerate() {
        let f = |s: &str| format!("cameras[{i}].{s}");
        if !names.insert(c.name.as_str()) {
            return Err(invalid(id, f("name"), format!("duplicate camera `{}`", c.name)));
        }
        let k = &c.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(invalid(id, f("intrinsics"), "fx and fy must be positive"));
        }
        if !(k.cx >= 0.0 && k.cx < c.image_size.w as f64 && k.cy >= 0.0 && k.cy < c.image_size.h as f64) {
            return Err(invalid(id, f("intrinsics"), "principal point outside the image"));
        }
        if let Err(e) = c.extrinsic.validate() {
            let norm = match e {
                crate::geom::GeomError::BadQuaternion(n) => n,
                _ => f64::NAN,
            };
            return Err(ManifestError::BadQuaternion { traj_id: id.into(), field: f("extrinsic.q"), norm });
        }
        if let Some(s) = &c.stereo {
            if !(s.baseline_m > 0.0) {
                return Err(invalid(id, f("stereo.baseline_m"), "baseline must be positive"));
            }
        }
    }
    for (i, c) in r.cameras.iter().enumerate() {
        if let Some(s) = &c.stereo {
            if !names.contains(s.right_camera_name.as_str()) || s.right_camera_name == c.name {
                return Err(invalid(
                    id,
                    format!("cameras[{i}].stereo.right_camera_name"),
                    format!("unknown stereo partner `{}`", s.right_camera_name),
                ));
            }
        }
    }

    let mut prev_t = f64::NEG_INFINITY;
    for (i, fr) in r.frames.iter().enumerate() {
        if !fr.time_s.is_finite() || fr.time_s <= prev_t {
            return Err(ManifestError::NonMonotone { traj_id: id.into(), index: i });
        }
        prev_t = fr.time_s;
        if let Err(crate::geom::GeomError::BadQuaternion(norm)) = fr.ee_pose.validate() {
            return Err(ManifestError::BadQuaternion {
                traj_id: id.into(),
                field: format!("frames[{i}].ee_pose.q"),
                norm,
            });
        }
        if !fr.gripper_raw.is_finite() {
            return Err(invalid(id, format!("frames[{i}].gripper_raw"), "not finite"));
        }
        if let Some(w) = fr.wrench {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(invalid(id, format!("frames[{i}].wrench"), "not finite"));
            }
        }
        for cam in fr.images.keys().chain(fr.depth.keys()) {
            if !names.contains(cam.as_str()) {
                return Err(invalid(id, format!("frames[{i}].images.{cam}"), format!("camera `{cam}` not in rig")));
            }
        }
    }
    if let Some(p) = r.object_point() {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(invalid(id, "target_object.point_world", "not finite"));
        }
    }
    Ok(())
}

fn check_media(r: &TrajectoryRecord) -> Result<(), ManifestError> {
    // depth maps and stills are often shared between frames
    let mut seen: BTreeMap<PathBuf, ()> = BTreeMap::new();
    for (i, fr) in r.frames.iter().enumerate() {
        for (cam, rel) in &fr.images {
            let file = r.resolve(rel);
            if seen.insert(file.clone(), ()).is_some() {
                continue;
            }
            let field = format!("frames[{i}].images.{cam}");
            if !file.is_file() {
                return Err(ManifestError::MissingMedia { traj_id: r.id.clone(), field, file });
            }
            let (w, h) = image::image_dimensions(&file).map_err(|e| ManifestError::BadMedia {
                traj_id: r.id.clone(),
                field: field.clone(),
                file: file.clone(),
                message: e.to_string(),
            })?;
            let size = r.camera(cam).expect("validated").image_size;
            if (w, h) != (size.w, size.h) {
                return Err(ManifestError::BadMedia {
                    traj_id: r.id.clone(),
                    field,
                    file,
                    message: format!("image is {w}x{h}, camera declares {}x{}", size.w, size.h),
                });
            }
        }
        for (cam, rel) in &fr.depth {
            let Some(rel) = rel else { continue };
            let file = r.resolve(rel);
            if seen.insert(file.clone(), ()).is_some() {
                continue;
            }
            let field = format!("frames[{i}].depth.{cam}");
            if !file.is_file() {
                return Err(ManifestError::MissingMedia { traj_id: r.id.clone(), field, file });
            }
            let header = pfm::read_header(&file).map_err(|e| ManifestError::BadMedia {
                traj_id: r.id.clone(),
                field: field.clone(),
                file: file.clone(),
                message: e.to_string(),
            })?;
            let size = r.camera(cam).expect("validated").image_size;
            if (header.width, header.height) != (size.w, size.h) {
                return Err(ManifestError::BadMedia {
                    traj_id: r.id.clone(),
                    field,
                    file,
                    message: format!(
                        "depth is {}x{}, camera declares {}x{}",
                        header.width, header.height, size.w, size.h
                    ),
                });
            }
        }
    }
    Ok(())
}
