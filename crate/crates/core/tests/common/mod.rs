#![allow(dead_code)]

use std::path::{Path, PathBuf};

use trajvqa::geom::Vec3;
use trajvqa::trajmodel::synthetic::{self, CameraSpec, ScriptSpec, SyntheticEpisode};
use trajvqa::trajmodel::{load_manifest_with, LoadOptions, TrajectoryRecord};

pub const SEED: u64 = 7;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn spec(name: &str) -> ScriptSpec {
    ScriptSpec::load(&fixtures().join(format!("{name}.spec.json"))).expect("fixture spec")
}

pub fn episode(name: &str) -> SyntheticEpisode {
    synthetic::synthesize(&spec(name), SEED).expect("fixture synthesizes")
}

pub fn no_media() -> LoadOptions {
    LoadOptions { strict: false, skip_media_check: true }
}

/// Writes a fixture episode into `dir` and loads it back.
pub fn written(name: &str, dir: &Path, images: bool) -> (SyntheticEpisode, TrajectoryRecord) {
    let ep = episode(name);
    let w = synthetic::write_episode_with(&ep, dir, images).expect("write episode");
    let opts = if images { LoadOptions::default() } else { no_media() };
    let traj = load_manifest_with(&w.manifest, opts).expect("load");
    (ep, traj)
}

/// Look-at pinhole camera computed directly from the script parameters.
pub struct OracleCam {
    eye: Vec3,
    axes: [Vec3; 3],
    f: [f64; 2],
    c: [f64; 2],
    pub w: u32,
    pub h: u32,
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(a: Vec3) -> Vec3 {
    let n = dot(a, a).sqrt();
    a.map(|x| x / n)
}

impl OracleCam {
    pub fn new(c: &CameraSpec) -> Self {
        let z = unit([c.target[0] - c.eye[0], c.target[1] - c.eye[1], c.target[2] - c.eye[2]]);
        let x = unit(cross(z, [0.0, 0.0, 1.0]));
        let y = cross(z, x);
        Self { eye: c.eye, axes: [x, y, z], f: [c.fx, c.fy], c: [c.w as f64 / 2.0, c.h as f64 / 2.0], w: c.w, h: c.h }
    }

    /// Pixel coordinates and camera-frame depth.
    pub fn project(&self, p: Vec3) -> (f64, f64, f64) {
        let d = [p[0] - self.eye[0], p[1] - self.eye[1], p[2] - self.eye[2]];
        let [xc, yc, zc] = self.axes.map(|a| dot(d, a));
        (self.f[0] * xc / zc + self.c[0], self.f[1] * yc / zc + self.c[1], zc)
    }

    pub fn in_bounds(&self, p: Vec3) -> bool {
        let (u, v, z) = self.project(p);
        z > 0.0 && u >= 0.0 && v >= 0.0 && u < self.w as f64 && v < self.h as f64
    }
}
