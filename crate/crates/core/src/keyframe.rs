//! Keyframe selection: phase-run boundaries and long-run midpoints as
//! candidates, filtered by camera visibility, then thinned by greedy max-min
//! pose diversity. Onsets of non-transition phases are kept ahead of the
//! diversity fill.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geom;
use crate::phaseseg::{PhaseLabel, PhaseRun};
use crate::trajmodel::{CameraRig, TrajectoryRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame_index: usize,
    pub phase: PhaseLabel,
    pub cameras_visible: BTreeSet<String>,
    /// Min pose distance to the keyframes chosen before this one.
    pub diversity_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeyframeParams {
    pub budget: usize,
    pub min_gap: usize,
    /// Meters per radian of rotation in the pose distance.
    pub lambda: f64,
}

impl Default for KeyframeParams {
    fn default() -> Self {
        Self { budget: 8, min_gap: 5, lambda: 0.1 }
    }
}

fn visible_in(cam: &CameraRig, p: geom::Vec3) -> bool {
    geom::project_in_bounds(cam, p).is_some()
}

/// The end effector, and the target object when its position is known, both
/// project inside `cam`'s image at `frame_index`.
pub fn visibility(traj: &TrajectoryRecord, cam: &CameraRig, frame_index: usize) -> bool {
    let ee = traj.frames[frame_index].ee_position();
    visible_in(cam, ee) && traj.object_point().is_none_or(|p| visible_in(cam, p))
}

pub fn visible_cameras(traj: &TrajectoryRecord, frame_index: usize) -> BTreeSet<String> {
    traj.cameras.iter().filter(|c| visibility(traj, c, frame_index)).map(|c| c.name.clone()).collect()
}

pub fn pose_distance(traj: &TrajectoryRecord, a: usize, b: usize, lambda: f64) -> f64 {
    let (pa, pb) = (&traj.frames[a].ee_pose, &traj.frames[b].ee_pose);
    pa.translation_distance(pb) + lambda * pa.rotation_angle_to(pb)
}

/// Run starts plus midpoints of runs longer than `2 * min_gap`, sorted.
pub fn candidates(runs: &[PhaseRun], min_gap: usize) -> Vec<usize> {
    let mut out = BTreeSet::new();
    for r in runs {
        out.insert(r.start_index);
        if r.len() > 2 * min_gap {
            out.insert((r.start_index + r.end_index) / 2);
        }
    }
    out.into_iter().collect()
}

/// Greedy max-min selection over a symmetric distance matrix. Starts from the
/// farthest pair (lowest indices on ties) and repeatedly adds the point whose
/// distance to the chosen set is largest. Returns `(index, gain)` in pick
/// order.
pub fn greedy_maxmin(dist: &[Vec<f64>], budget: usize) -> Vec<(usize, f64)> {
    let n = dist.len();
    if n == 0 || budget == 0 {
        return Vec::new();
    }
    if budget == 1 || n == 1 {
        return vec![(0, 0.0)];
    }
    let mut best = (0, 1, f64::NEG_INFINITY);
    for (i, row) in dist.iter().enumerate() {
        for (j, &d) in row.iter().enumerate().skip(i + 1) {
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let mut picked = vec![(best.0, best.2), (best.1, best.2)];
    let mut min_to_set: Vec<f64> = (0..n).map(|k| dist[k][best.0].min(dist[k][best.1])).collect();
    let mut taken = vec![false; n];
    taken[best.0] = true;
    taken[best.1] = true;
    while picked.len() < budget.min(n) {
        let mut next: Option<(usize, f64)> = None;
        for k in (0..n).filter(|&k| !taken[k]) {
            if next.is_none_or(|(_, g)| min_to_set[k] > g) {
                next = Some((k, min_to_set[k]));
            }
        }
        let Some((k, gain)) = next else { break };
        taken[k] = true;
        picked.push((k, gain));
        for m in 0..n {
            min_to_set[m] = min_to_set[m].min(dist[m][k]);
        }
    }
    picked
}

/// Greedy max-min that first keeps `seeds` (in the given order) and then
/// fills the rest of the budget by distance to the chosen set. When the seeds
/// alone exceed the budget, plain greedy max-min runs over the seeds.
pub fn greedy_maxmin_seeded(dist: &[Vec<f64>], seeds: &[usize], budget: usize) -> Vec<(usize, f64)> {
    let n = dist.len();
    if seeds.is_empty() {
        return greedy_maxmin(dist, budget);
    }
    if seeds.len() > budget {
        let sub: Vec<Vec<f64>> = seeds.iter().map(|&i| seeds.iter().map(|&j| dist[i][j]).collect()).collect();
        return greedy_maxmin(&sub, budget).into_iter().map(|(k, g)| (seeds[k], g)).collect();
    }
    let mut taken = vec![false; n];
    let mut min_to_set = vec![f64::INFINITY; n];
    let mut picked = Vec::with_capacity(budget.min(n));
    for &s in seeds {
        let gain = if picked.is_empty() { 0.0 } else { min_to_set[s] };
        picked.push((s, gain));
        taken[s] = true;
        for m in 0..n {
            min_to_set[m] = min_to_set[m].min(dist[m][s]);
        }
    }
    while picked.len() < budget.min(n) {
        let mut next: Option<(usize, f64)> = None;
        for k in (0..n).filter(|&k| !taken[k]) {
            if next.is_none_or(|(_, g)| min_to_set[k] > g) {
                next = Some((k, min_to_set[k]));
            }
        }
        let Some((k, gain)) = next else { break };
        taken[k] = true;
        picked.push((k, gain));
        for m in 0..n {
            min_to_set[m] = min_to_set[m].min(dist[m][k]);
        }
    }
    picked
}

/// Minimum pairwise distance within `subset`.
pub fn min_pairwise(dist: &[Vec<f64>], subset: &[usize]) -> f64 {
    let mut m = f64::INFINITY;
    for (a, &i) in subset.iter().enumerate() {
        for &j in &subset[a + 1..] {
            m = m.min(dist[i][j]);
        }
    }
    m
}

pub fn select_keyframes(traj: &TrajectoryRecord, runs: &[PhaseRun], params: &KeyframeParams) -> Vec<Keyframe> {
    let cands: Vec<(usize, BTreeSet<String>)> = candidates(runs, params.min_gap)
        .into_iter()
        .filter(|&i| i < traj.len())
        .map(|i| (i, visible_cameras(traj, i)))
        .filter(|(_, cams)| !cams.is_empty())
        .collect();
    let dist: Vec<Vec<f64>> = cands
        .iter()
        .map(|(a, _)| cands.iter().map(|(b, _)| pose_distance(traj, *a, *b, params.lambda)).collect())
        .collect();
    let phase_of = |i: usize| runs.iter().find(|r| r.contains(i)).map_or(PhaseLabel::Transition, |r| r.label);
    let onsets: Vec<usize> = (0..cands.len())
        .filter(|&k| {
            let i = cands[k].0;
            phase_of(i) != PhaseLabel::Transition && runs.iter().any(|r| r.start_index == i)
        })
        .collect();
    let mut out: Vec<Keyframe> = greedy_maxmin_seeded(&dist, &onsets, params.budget)
        .into_iter()
        .map(|(k, gain)| {
            let (frame_index, cams) = &cands[k];
            Keyframe {
                frame_index: *frame_index,
                phase: phase_of(*frame_index),
                cameras_visible: cams.clone(),
                diversity_score: gain,
            }
        })
        .collect();
    out.sort_by_key(|k| k.frame_index);
    out
}
