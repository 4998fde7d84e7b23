//! Scripted synthetic episodes.
//!
//! A [`ScriptSpec`] lists phase segments with aperture, force and end-effector
//! targets. [`synthesize`] turns it into an in-memory [`TrajectoryRecord`] and
//! a [`Sidecar`] holding the intended per-frame phase labels; [`write_episode`]
//! renders the camera stills and depth maps and writes the manifest next to
//! them. Everything is a pure function of `(spec, seed)`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::pfm::{self, DepthMap};
use super::{
    manifest, CameraRig, FrameObservation, GripperRange, ImageSize, Intrinsics, StereoPair, TargetObject,
    TrajectoryRecord,
};
use crate::annotate;
use crate::geom::{self, RigidTransform, Vec3};
use crate::phaseseg::PhaseLabel;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("segment {0} has zero duration")]
    ZeroDuration(usize),
    #[error("script has no segments")]
    Empty,
    #[error("invalid script: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Manifest(#[from] manifest::ManifestError),
    #[error("{0}")]
    Image(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub name: String,
    pub fx: f64,
    pub fy: f64,
    pub w: u32,
    pub h: u32,
    /// Camera center in world coordinates.
    pub eye: Vec3,
    /// World point on the optical axis.
    pub target: Vec3,
    #[serde(default)]
    pub depth: bool,
    #[serde(default)]
    pub stereo: Option<StereoPair>,
}

impl CameraSpec {
    pub fn rig(&self) -> CameraRig {
        CameraRig {
            name: self.name.clone(),
            intrinsics: Intrinsics { fx: self.fx, fy: self.fy, cx: self.w as f64 / 2.0, cy: self.h as f64 / 2.0 },
            image_size: ImageSize { w: self.w, h: self.h },
            extrinsic: RigidTransform::look_at(self.eye, self.target, [0.0, 0.0, 1.0]),
            stereo: self.stereo.clone(),
        }
    }
}

/// One scripted stretch of the episode. Aperture (normalized, 0 = open),
/// end-effector position and yaw ramp linearly from the previous segment's
/// end values to the targets given here; force is held constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub phase: PhaseLabel,
    pub frames: usize,
    #[serde(default)]
    pub aperture: Option<f64>,
    #[serde(default)]
    pub ee: Option<Vec3>,
    #[serde(default)]
    pub yaw_deg: Option<f64>,
    #[serde(default)]
    pub force_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub aperture: f64,
    #[serde(default)]
    pub position_m: f64,
    #[serde(default)]
    pub force_n: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { aperture: 0.0, position_m: 0.0, force_n: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSpec {
    pub id: String,
    pub instruction: String,
    #[serde(default)]
    pub scene_tag: Option<String>,
    #[serde(default)]
    pub success: Option<bool>,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub gripper_range: GripperRange,
    pub initial_aperture: f64,
    pub initial_ee: Vec3,
    #[serde(default)]
    pub initial_yaw_deg: f64,
    #[serde(default = "yes")]
    pub force_channel: bool,
    #[serde(default)]
    pub target_object: Option<TargetObject>,
    pub cameras: Vec<CameraSpec>,
    pub segments: Vec<SegmentSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
}

fn default_fps() -> f64 {
    10.0
}

fn yes() -> bool {
    true
}

impl ScriptSpec {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = fs::read_to_string(path).map_err(|source| SynthError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|e| SynthError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn total_frames(&self) -> usize {
        self.segments.iter().map(|s| s.frames).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarSegment {
    pub phase: PhaseLabel,
    pub start: usize,
    pub end: usize,
}

/// Ground truth written alongside a synthetic manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub id: String,
    pub seed: u64,
    pub phases: Vec<PhaseLabel>,
    pub segments: Vec<SidecarSegment>,
    pub object_point: Option<Vec3>,
    pub success: Option<bool>,
    /// Noise-free end-effector positions.
    pub ee_path: Vec<Vec3>,
}

impl Sidecar {
    /// Intended labels with Transition removed and repeats collapsed.
    pub fn phase_order(&self) -> Vec<PhaseLabel> {
        crate::phaseseg::collapse_non_transition(&self.phases)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticEpisode {
    pub spec: ScriptSpec,
    pub record: TrajectoryRecord,
    pub sidecar: Sidecar,
}

fn yaw_pose(pos: Vec3, yaw_deg: f64) -> RigidTransform {
    // gripper pointing down: half-turn about x, then yaw about world z
    let down = RigidTransform::from_axis_angle([1.0, 0.0, 0.0], std::f64::consts::PI, [0.0; 3]);
    let yaw = RigidTransform::from_axis_angle([0.0, 0.0, 1.0], yaw_deg.to_radians(), pos);
    yaw.compose(&down)
}

fn media_paths(spec: &ScriptSpec, cam: &CameraSpec, frame: usize) -> PathBuf {
    PathBuf::from(&spec.id).join(&cam.name).join(format!("{frame:04}.png"))
}

fn depth_path(spec: &ScriptSpec, cam: &CameraSpec) -> PathBuf {
    PathBuf::from(&spec.id).join("depth").join(format!("{}.pfm", cam.name))
}

/// Builds the record and sidecar without touching the filesystem.
pub fn synthesize(spec: &ScriptSpec, seed: u64) -> Result<SyntheticEpisode, SynthError> {
    if spec.segments.is_empty() {
        return Err(SynthError::Empty);
    }
    if let Some(i) = spec.segments.iter().position(|s| s.frames == 0) {
        return Err(SynthError::ZeroDuration(i));
    }
    if !(spec.fps > 0.0) {
        return Err(SynthError::Invalid("fps must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = |sigma: f64| Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let n_ap = noise(spec.noise.aperture);
    let n_pos = noise(spec.noise.position_m);
    let n_f = noise(spec.noise.force_n);
    let range = spec.gripper_range;

    let mut frames = Vec::with_capacity(spec.total_frames());
    let mut phases = Vec::with_capacity(spec.total_frames());
    let mut segments = Vec::with_capacity(spec.segments.len());
    let mut ee_path = Vec::with_capacity(spec.total_frames());
    let (mut ap, mut ee, mut yaw) = (spec.initial_aperture, spec.initial_ee, spec.initial_yaw_deg);

    for seg in &spec.segments {
        let (ap0, ee0, yaw0) = (ap, ee, yaw);
        let ap1 = seg.aperture.unwrap_or(ap0);
        let ee1 = seg.ee.unwrap_or(ee0);
        let yaw1 = seg.yaw_deg.unwrap_or(yaw0);
        let start = frames.len();
        for k in 0..seg.frames {
            let f = (k + 1) as f64 / seg.frames as f64;
            let s = ap0 + (ap1 - ap0) * f;
            let pos = geom::lerp3(ee0, ee1, f);
            let yaw_k = yaw0 + (yaw1 - yaw0) * f;
            let idx = frames.len();

            let s_noisy = s + n_ap.sample(&mut rng);
            let raw = range.open_raw + s_noisy * (range.closed_raw - range.open_raw);
            let jitter = [n_pos.sample(&mut rng), n_pos.sample(&mut rng), n_pos.sample(&mut rng)];
            let noisy_pos = [pos[0] + jitter[0], pos[1] + jitter[1], pos[2] + jitter[2]];
            let force = (seg.force_n + n_f.sample(&mut rng)).max(0.0);
            let wrench = spec.force_channel.then_some([0.0, 0.0, -force, 0.0, 0.0, 0.0]);

            let mut images = BTreeMap::new();
            let mut depth = BTreeMap::new();
            for cam in &spec.cameras {
                images.insert(cam.name.clone(), media_paths(spec, cam, idx));
                if cam.depth {
                    depth.insert(cam.name.clone(), Some(depth_path(spec, cam)));
                }
            }
            frames.push(FrameObservation {
                time_s: idx as f64 / spec.fps,
                images,
                depth,
                ee_pose: yaw_pose(noisy_pos, yaw_k),
                gripper_raw: raw,
                wrench,
            });
            phases.push(seg.phase);
            ee_path.push(pos);
        }
        segments.push(SidecarSegment { phase: seg.phase, start, end: frames.len() - 1 });
        ap = ap1;
        ee = ee1;
        yaw = yaw1;
    }

    let record = TrajectoryRecord {
        id: spec.id.clone(),
        instruction: spec.instruction.clone(),
        success: spec.success,
        scene_tag: spec.scene_tag.clone(),
        gripper_range: range,
        target_object: spec.target_object.clone(),
        cameras: spec.cameras.iter().map(CameraSpec::rig).collect(),
        frames,
        media_root: PathBuf::new(),
    };
    manifest::validate(&record)?;
    let sidecar = Sidecar {
        id: spec.id.clone(),
        seed,
        phases,
        segments,
        object_point: spec.target_object.as_ref().and_then(|o| o.point_world),
        success: spec.success,
        ee_path,
    };
    Ok(SyntheticEpisode { spec: spec.clone(), record, sidecar })
}

/// Paths produced by [`write_episode`].
#[derive(Debug, Clone)]
pub struct WrittenEpisode {
    pub manifest: PathBuf,
    pub sidecar: PathBuf,
}

/// Renders media and writes `<id>.json` plus `<id>.sidecar.json` into
/// `out_dir`.
pub fn write_episode(ep: &SyntheticEpisode, out_dir: &Path) -> Result<WrittenEpisode, SynthError> {
    write_episode_with(ep, out_dir, true)
}

/// As [`write_episode`]; with `images == false` only depth maps, manifest
/// and sidecar are written (the manifest still names the stills).
pub fn write_episode_with(ep: &SyntheticEpisode, out_dir: &Path, images: bool) -> Result<WrittenEpisode, SynthError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    let spec = &ep.spec;
    for (cam, rig) in spec.cameras.iter().zip(&ep.record.cameras) {
        let dir = out_dir.join(&spec.id).join(&cam.name);
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let depth = render_depth(rig);
        if cam.depth {
            let p = out_dir.join(depth_path(spec, cam));
            fs::create_dir_all(p.parent().unwrap()).map_err(io(&p))?;
            pfm::write(&p, &depth).map_err(io(&p))?;
        }
        if !images {
            continue;
        }
        let background = render_background(rig, &depth);
        let frames: Vec<usize> = (0..ep.record.frames.len()).collect();
        let results = crate::par::map(&frames, 0, |&i| {
            let img = render_frame(&background, rig, &ep.record, i);
            let p = out_dir.join(media_paths(spec, cam, i));
            annotate::write_png(&img, &p).map_err(|e| SynthError::Image(format!("{}: {e}", p.display())))
        });
        results.into_iter().collect::<Result<Vec<()>, _>>()?;
    }
    let manifest_path = out_dir.join(format!("{}.json", spec.id));
    manifest::write_manifest(&ep.record, &manifest_path)?;
    let sidecar_path = out_dir.join(format!("{}.sidecar.json", spec.id));
    let mut text = serde_json::to_string_pretty(&ep.sidecar).expect("sidecar serializes");
    text.push('\n');
    fs::write(&sidecar_path, text).map_err(io(&sidecar_path))?;
    Ok(WrittenEpisode { manifest: manifest_path, sidecar: sidecar_path })
}

pub fn generate(
    spec: &ScriptSpec,
    seed: u64,
    out_dir: &Path,
) -> Result<(SyntheticEpisode, WrittenEpisode), SynthError> {
    let ep = synthesize(spec, seed)?;
    let written = write_episode(&ep, out_dir)?;
    Ok((ep, written))
}

const SCENES: [&str; 5] = ["kitchen", "lab", "office", "living room", "workshop"];
const COLORS: [&str; 6] = ["red", "blue", "green", "yellow", "white", "black"];
const OBJECTS: [&str; 8] = ["cup", "marker", "sponge", "block", "bottle", "spoon", "can", "mug"];
const PLACEMENTS: [(&str, &str); 6] =
    [("put", "in"), ("place", "on"), ("move", "to"), ("put", "into"), ("place", "in"), ("move", "onto")];
const LOCATIONS: [&str; 6] = ["drawer", "tray", "bin", "basket", "shelf", "box"];
const RESOLUTIONS: [(u32, u32); 3] = [(320, 256), (256, 192), (384, 288)];

fn seg(phase: PhaseLabel, frames: usize) -> SegmentSpec {
    SegmentSpec { phase, frames, aperture: None, ee: None, yaw_deg: None, force_n: 0.0 }
}

/// A randomized pick-and-place script: one to three grasp cycles with
/// jittered durations, poses and sensor noise, occasional aborted grasps and
/// randomly missing modalities. Deterministic in `seed`.
pub fn random_spec(seed: u64) -> ScriptSpec {
    use rand::seq::IndexedRandom;
    use rand::Rng;
    use PhaseLabel::*;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let color = *COLORS.choose(rng).unwrap();
    let object = *OBJECTS.choose(rng).unwrap();
    let (verb, prep) = *PLACEMENTS.choose(rng).unwrap();
    let location = *LOCATIONS.choose(rng).unwrap();
    let name = format!("{color} {object}");
    let instruction = format!("{verb} the {name} {prep} the {location}");
    let obj = [rng.random_range(0.35..0.55), rng.random_range(-0.15..0.15), 0.02];

    let (w, h) = *RESOLUTIONS.choose(rng).unwrap();
    let f = 0.8125 * w as f64;
    let jitter = |rng: &mut ChaCha8Rng, p: Vec3, r: f64| -> Vec3 {
        [p[0] + rng.random_range(-r..r), p[1] + rng.random_range(-r..r), p[2] + rng.random_range(-r..r)]
    };
    let has_depth = rng.random_bool(0.8);
    let has_stereo = rng.random_bool(0.8);
    let left = CameraSpec {
        name: "ext1".into(),
        fx: f,
        fy: f,
        w,
        h,
        eye: jitter(rng, [1.25, -0.35, 0.65], 0.05),
        target: [0.40, 0.05, 0.05],
        depth: has_depth,
        stereo: has_stereo.then(|| StereoPair { right_camera_name: "ext2".into(), baseline_m: 0.6 }),
    };
    let right = CameraSpec {
        name: "ext2".into(),
        fx: f,
        fy: f,
        w,
        h,
        eye: jitter(rng, [1.25, 0.25, 0.65], 0.05),
        target: [0.40, -0.05, 0.05],
        depth: false,
        stereo: None,
    };

    let force_channel = rng.random_bool(0.85);
    let cycles = match rng.random_range(0..20) {
        0 => 3,
        1..=5 => 2,
        _ => 1,
    };
    let mut segments = Vec::new();
    let mut aperture = 0.24;
    let mut succeeded = false;
    for c in 0..cycles {
        let above = [obj[0], obj[1], rng.random_range(0.10..0.16)];
        let mut pre = seg(Transition, rng.random_range(3..8));
        pre.ee = Some([obj[0] - 0.05, obj[1] - 0.05, 0.30]);
        segments.push(pre);
        let mut app = seg(Approach, ((aperture / 0.03) as usize).clamp(4, 8));
        app.aperture = Some(0.0);
        app.ee = Some(above);
        segments.push(app);
        let mut stab = seg(Stabilize, rng.random_range(4..8));
        stab.ee = Some([obj[0], obj[1], obj[2] + 0.01]);
        segments.push(stab);
        let closed = rng.random_range(0.78..0.86);
        let mut close = seg(Transition, rng.random_range(4..8));
        close.aperture = Some(closed);
        segments.push(close);
        if force_channel && rng.random_bool(0.15) {
            // aborted grasp: closes on nothing, reopens and leaves
            let mut hold = seg(Transition, rng.random_range(5..10));
            hold.force_n = 0.5;
            segments.push(hold);
            let mut reopen = seg(Transition, rng.random_range(4..7));
            reopen.aperture = Some(0.0);
            reopen.ee = Some(above);
            segments.push(reopen);
            break;
        }
        let force = rng.random_range(3.0..10.0);
        let mut contact = seg(Contact, rng.random_range(6..12));
        contact.force_n = force;
        segments.push(contact);
        let mut carry = seg(Transition, rng.random_range(10..20));
        carry.ee = Some([rng.random_range(0.05..0.25), rng.random_range(0.3..0.6), rng.random_range(0.15..0.3)]);
        carry.yaw_deg = Some(rng.random_range(-45.0..45.0));
        carry.force_n = force;
        segments.push(carry);
        let mut release = seg(Release, rng.random_range(3..6));
        release.aperture = Some(1.0);
        segments.push(release);
        segments.push(seg(Transition, rng.random_range(3..6)));
        let mut open = seg(Transition, rng.random_range(4..7));
        open.aperture = Some(0.0);
        segments.push(open);
        segments.push(seg(Transition, rng.random_range(3..6)));
        aperture = rng.random_range(0.20..0.24);
        let mut reset = seg(Reset, 5);
        reset.aperture = Some(aperture);
        reset.ee = Some([0.25, 0.3 - 0.2 * c as f64, 0.45]);
        segments.push(reset);
        succeeded = true;
    }
    segments.push(seg(Transition, rng.random_range(5..20)));

    ScriptSpec {
        id: format!("rand{seed:06}"),
        instruction,
        scene_tag: Some(SCENES.choose(rng).unwrap().to_string()),
        success: rng.random_bool(0.8).then_some(succeeded),
        fps: 10.0,
        gripper_range: GripperRange { open_raw: 0.085, closed_raw: 0.0 },
        initial_aperture: 0.24,
        initial_ee: [0.30, -0.20, 0.40],
        initial_yaw_deg: 0.0,
        force_channel,
        target_object: Some(TargetObject { name, point_world: rng.random_bool(0.9).then_some(obj) }),
        cameras: vec![left, right],
        segments,
        noise: NoiseSpec {
            aperture: rng.random_range(0.0..0.004),
            position_m: rng.random_range(0.0..0.001),
            force_n: rng.random_range(0.0..0.3),
        },
    }
}

const FAR_PLANE_M: f64 = 4.0;
const TABLE_HALF_EXTENT_M: f64 = 1.0;

/// Z-depth of the static scene: a table at world z = 0 and a far wall.
fn render_depth(rig: &CameraRig) -> DepthMap {
    let (w, h) = (rig.image_size.w, rig.image_size.h);
    let cam_from_world = &rig.extrinsic;
    let world_from_cam = cam_from_world.inverse();
    let center = world_from_cam.t;
    let rot = world_from_cam.rotation();
    let k = rig.intrinsics;
    let mut data = Vec::with_capacity((w * h) as usize);
    for v in 0..h {
        for u in 0..w {
            // ray through the pixel center in camera coordinates, z = 1
            let d_cam = nalgebra::Vector3::new((u as f64 + 0.5 - k.cx) / k.fx, (v as f64 + 0.5 - k.cy) / k.fy, 1.0);
            let d_world = rot * d_cam;
            let mut z = FAR_PLANE_M;
            if d_world.z < -1e-9 {
                let s = -center[2] / d_world.z;
                let hit = [center[0] + s * d_world.x, center[1] + s * d_world.y];
                if s > 0.0 && s < z && hit[0].abs() <= TABLE_HALF_EXTENT_M && hit[1].abs() <= TABLE_HALF_EXTENT_M {
                    z = s;
                }
            }
            data.push(z as f32);
        }
    }
    DepthMap::new(w, h, data)
}

fn render_background(rig: &CameraRig, depth: &DepthMap) -> RgbImage {
    let (w, h) = (rig.image_size.w, rig.image_size.h);
    let world_from_cam = rig.extrinsic.inverse();
    let k = rig.intrinsics;
    RgbImage::from_fn(w, h, |u, v| {
        let z = depth.get(u, v).unwrap_or(FAR_PLANE_M as f32) as f64;
        if z >= FAR_PLANE_M - 1e-6 {
            let shade = 190 + (40.0 * v as f64 / h as f64) as u8;
            return Rgb([shade, shade, shade.saturating_add(8)]);
        }
        let p_cam = [(u as f64 + 0.5 - k.cx) / k.fx * z, (v as f64 + 0.5 - k.cy) / k.fy * z, z];
        let p = world_from_cam.transform_point(p_cam);
        let checker = ((p[0] * 10.0).floor() as i64 + (p[1] * 10.0).floor() as i64).rem_euclid(2) == 0;
        if checker {
            Rgb([172, 132, 92])
        } else {
            Rgb([150, 112, 76])
        }
    })
}

fn fill_disk(img: &mut RgbImage, cu: f64, cv: f64, r: f64, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let (u0, u1) = ((cu - r).floor().max(0.0) as i64, (cu + r).ceil().min(w as f64 - 1.0) as i64);
    let (v0, v1) = ((cv - r).floor().max(0.0) as i64, (cv + r).ceil().min(h as f64 - 1.0) as i64);
    for v in v0..=v1 {
        for u in u0..=u1 {
            if (u as f64 - cu).powi(2) + (v as f64 - cv).powi(2) <= r * r {
                img.put_pixel(u as u32, v as u32, color);
            }
        }
    }
}

fn fill_rect(img: &mut RgbImage, cu: f64, cv: f64, half: f64, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let (u0, u1) = ((cu - half).round().max(0.0) as i64, (cu + half).round().min(w as f64 - 1.0) as i64);
    let (v0, v1) = ((cv - half).round().max(0.0) as i64, (cv + half).round().min(h as f64 - 1.0) as i64);
    for v in v0..=v1 {
        for u in u0..=u1 {
            let stripe = ((u - u0) / 3) % 2 == 0;
            img.put_pixel(u as u32, v as u32, if stripe { color } else { Rgb([20, 20, 20]) });
        }
    }
}

fn render_frame(background: &RgbImage, rig: &CameraRig, record: &TrajectoryRecord, i: usize) -> RgbImage {
    let mut img = background.clone();
    let fx = rig.intrinsics.fx;
    if let Some(p) = record.object_point() {
        let p_cam = rig.extrinsic.transform_point(p);
        if let Some(px) = geom::project_camera_point(rig, p_cam) {
            let half = (fx * 0.03 / p_cam[2]).clamp(2.0, 40.0);
            fill_rect(&mut img, px.u, px.v, half, Rgb([235, 200, 30]));
        }
    }
    let fr = &record.frames[i];
    let p_cam = rig.extrinsic.transform_point(fr.ee_position());
    if let Some(px) = geom::project_camera_point(rig, p_cam) {
        let r = (fx * 0.025 / p_cam[2]).clamp(2.0, 40.0);
        fill_disk(&mut img, px.u, px.v, r, Rgb([55, 58, 70]));
        let s = super::normalize_aperture(fr.gripper_raw, record.gripper_range).unwrap_or(0.0);
        let spread = r * (0.4 + 0.8 * (1.0 - s));
        for side in [-1.0, 1.0] {
            fill_disk(&mut img, px.u + side * spread, px.v + r * 0.9, r * 0.35, Rgb([210, 210, 215]));
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ScriptSpec {
        ScriptSpec {
            id: "tiny".into(),
            instruction: "pick up the cube".into(),
            scene_tag: None,
            success: Some(true),
            fps: 10.0,
            gripper_range: GripperRange { open_raw: 0.08, closed_raw: 0.0 },
            initial_aperture: 0.2,
            initial_ee: [0.4, 0.0, 0.3],
            initial_yaw_deg: 0.0,
            force_channel: false,
            target_object: None,
            cameras: vec![CameraSpec {
                name: "c".into(),
                fx: 100.0,
                fy: 100.0,
                w: 128,
                h: 128,
                eye: [1.2, 0.0, 0.6],
                target: [0.4, 0.0, 0.0],
                depth: true,
                stereo: None,
            }],
            segments: vec![
                SegmentSpec {
                    phase: PhaseLabel::Transition,
                    frames: 3,
                    aperture: None,
                    ee: None,
                    yaw_deg: None,
                    force_n: 0.0,
                },
                SegmentSpec {
                    phase: PhaseLabel::Approach,
                    frames: 4,
                    aperture: Some(0.0),
                    ee: Some([0.4, 0.1, 0.1]),
                    yaw_deg: None,
                    force_n: 0.0,
                },
            ],
            noise: NoiseSpec::default(),
        }
    }

    #[test]
    fn random_specs_synthesize_and_vary() {
        let a = random_spec(1);
        assert_eq!(a, random_spec(1));
        assert_ne!(a, random_spec(2));
        for seed in 0..50 {
            let ep = synthesize(&random_spec(seed), seed).unwrap();
            assert_eq!(ep.record.frames.len(), ep.sidecar.phases.len());
            assert_eq!(ep.sidecar.phase_order().first(), Some(&PhaseLabel::Approach));
        }
    }

    #[test]
    fn zero_duration_segment_is_rejected() {
        let mut s = tiny_spec();
        s.segments[1].frames = 0;
        assert!(matches!(synthesize(&s, 1), Err(SynthError::ZeroDuration(1))));
    }

    #[test]
    fn no_force_channel_means_no_wrench() {
        let ep = synthesize(&tiny_spec(), 3).unwrap();
        assert!(ep.record.frames.iter().all(|f| f.wrench.is_none()));
        assert_eq!(ep.record.len(), 7);
        assert_eq!(ep.sidecar.phases.len(), 7);
    }

    #[test]
    fn written_episode_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let (ep, w) = generate(&tiny_spec(), 5, dir.path()).unwrap();
        let loaded = super::super::load_manifest(&w.manifest).unwrap();
        assert_eq!(loaded.frames, ep.record.frames);
        assert_eq!(loaded.cameras, ep.record.cameras);
        let d = pfm::read(&dir.path().join("tiny/depth/c.pfm")).unwrap();
        let (lo, hi) = d.valid_range().unwrap();
        assert!(lo < hi);
    }
}
