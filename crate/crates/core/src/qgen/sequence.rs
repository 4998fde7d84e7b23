//! Temporal prototypes: goal configuration, phase understanding and
//! prediction, trajectory description, motion direction and phase ordering.

use std::collections::BTreeSet;

use serde_json::json;

use super::{
    fill, instruction_clause, make_item, templates, Category, GeneratedItem, MediaRecipe, SkipReason, TrajContext,
};
use crate::annotate::{Color, Layout, Primitive, PALETTE};
use crate::geom;
use crate::phaseseg::PhaseLabel;
use crate::rng::RngStream;

const REJECTION_DRAWS: usize = 500;

fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

/// Last frame of the last Reset run, or the final frame.
pub fn goal_frame(ctx: &TrajContext<'_>) -> usize {
    ctx.seg.runs.iter().rev().find(|r| r.label == PhaseLabel::Reset).map_or(ctx.traj.len() - 1, |r| r.end_index)
}

/// `n` frames before `correct`, pairwise and to `correct` at least `gap`
/// apart.
fn sample_earlier_frames(rng: &mut RngStream, correct: usize, n: usize, gap: usize) -> Option<Vec<usize>> {
    if correct < gap {
        return None;
    }
    let hi = correct - gap + 1;
    let mut out: Vec<usize> = Vec::with_capacity(n);
    for _ in 0..REJECTION_DRAWS {
        let f = rng.below(hi);
        if out.iter().all(|o| o.abs_diff(f) >= gap) {
            out.push(f);
            if out.len() == n {
                return Some(out);
            }
        }
    }
    None
}

pub fn gen_goal_config(ctx: &TrajContext<'_>, kf_index: usize) -> Result<GeneratedItem, SkipReason> {
    let kf = &ctx.keyframes[kf_index];
    let cam = ctx.primary_camera(kf)?;
    let correct = goal_frame(ctx);
    let mut rng = ctx.rng(Category::TsGl, kf.frame_index);
    let mut frames =
        sample_earlier_frames(&mut rng, correct, 4, ctx.params.goal_min_gap).ok_or(SkipReason::TooFewFrames)?;
    frames.push(correct);
    rng.shuffle(&mut frames);
    let correct_tile = frames.iter().position(|&f| f == correct).expect("goal frame present");

    let labels: Vec<String> = (0..frames.len()).map(|i| format!("Configuration {}", letter(i))).collect();
    let mut choices = vec![labels[correct_tile].clone()];
    choices.extend(labels.iter().enumerate().filter(|(i, _)| *i != correct_tile).map(|(_, l)| l.clone()));
    let panels = frames
        .iter()
        .map(|&f| Ok((ctx.image_path(&cam.name, f)?, Vec::new())))
        .collect::<Result<Vec<_>, SkipReason>>()?;

    let question =
        fill(templates().question(Category::TsGl), &[("instruction", &instruction_clause(&ctx.traj.instruction))]);
    let mut meta = ctx.base_meta("phase_segmentation", &choices[0]);
    meta.insert("camera".into(), json!(cam.name));
    meta.insert("goal_frame".into(), json!(correct));
    meta.insert("tile_frames".into(), json!(frames));
    let media = vec![(
        format!("media/{}.png", ctx.item_id(Category::TsGl, kf.frame_index)),
        MediaRecipe::Compose { panels, layout: Layout::Grid, labels: Some(labels) },
    )];
    Ok(make_item(ctx, Category::TsGl, kf, question, choices, 0, media, frames, meta))
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Phase understanding (`next == false`) or next-phase prediction.
pub fn gen_phase_question(ctx: &TrajContext<'_>, kf_index: usize, next: bool) -> Result<GeneratedItem, SkipReason> {
    let kf = &ctx.keyframes[kf_index];
    let t = kf.frame_index;
    if kf.phase == PhaseLabel::Transition {
        return Err(SkipReason::Undetermined);
    }
    let tpl = templates();
    let (cat, target, question) = if next {
        let target = ctx.seg.next_phase_after(t).ok_or(SkipReason::NoNextPhase)?;
        let q = fill(tpl.question(Category::Ip), &[("current_phase", &lower_first(tpl.describe(kf.phase)))]);
        (Category::Ip, target, q)
    } else {
        let q = fill(tpl.question(Category::Au), &[("instruction", &instruction_clause(&ctx.traj.instruction))]);
        (Category::Au, kf.phase, q)
    };
    let cam = ctx.primary_camera(kf)?;
    let mut choices = vec![tpl.describe(target).to_string()];
    choices.extend(PhaseLabel::CHAIN.iter().filter(|p| **p != target).map(|p| tpl.describe(*p).to_string()));

    let mut meta = ctx.base_meta("phase_segmentation", &choices[0]);
    meta.insert("camera".into(), json!(cam.name));
    meta.insert("target_phase".into(), json!(target));
    let media = vec![ctx.frame_media(&cam.name, t)?];
    Ok(make_item(ctx, cat, kf, question, choices, 0, media, vec![t], meta))
}

/// Up to four distractor instructions built from the description templates,
/// avoiding nouns that appear in the real instruction.
pub fn trajectory_distractors(ctx: &TrajContext<'_>, rng: &mut RngStream) -> Vec<String> {
    let instr = ctx.traj.instruction.trim();
    let lower = instr.to_lowercase();
    let objects: Vec<&String> = ctx.vocab.objects.iter().filter(|o| !lower.contains(o.as_str())).collect();
    let locations: Vec<&String> = ctx.vocab.locations.iter().filter(|l| !lower.contains(l.as_str())).collect();
    if objects.is_empty() || locations.is_empty() {
        return Vec::new();
    }
    let mut tpls: Vec<&String> = templates().trajectory_distractors.iter().collect();
    rng.shuffle(&mut tpls);
    let mut seen = BTreeSet::from([lower.trim_end_matches('.').to_string()]);
    let mut out = Vec::new();
    for t in tpls {
        let o = objects[rng.below(objects.len())];
        let l = locations[rng.below(locations.len())];
        let text = fill(t, &[("object", o), ("location", l)]);
        if seen.insert(text.to_lowercase()) {
            out.push(text);
            if out.len() == 4 {
                break;
            }
        }
    }
    out
}

pub fn gen_trajectory_q(ctx: &TrajContext<'_>, kf_index: usize) -> Result<GeneratedItem, SkipReason> {
    let kf = &ctx.keyframes[kf_index];
    let t = kf.frame_index;
    if ctx.parsed.is_none() {
        return Err(SkipReason::ParseFailure);
    }
    let cam = ctx.primary_camera(kf)?;
    let mut path: Vec<[i64; 2]> = Vec::new();
    for f in &ctx.traj.frames[t..] {
        let Some(px) = geom::project_in_bounds(cam, f.ee_position()) else {
            continue;
        };
        let p = [px.u.floor() as i64, px.v.floor() as i64];
        if path.last().is_none_or(|q| ((p[0] - q[0]).pow(2) + (p[1] - q[1]).pow(2)) >= 9) {
            path.push(p);
        }
    }
    if path.len() < 2 {
        return Err(SkipReason::Degenerate);
    }
    let n = path.len() - 1;
    let prims: Vec<Primitive> = path
        .windows(2)
        .enumerate()
        .map(|(i, w)| Primitive::Arrow {
            from: w[0],
            to: w[1],
            color: Color::Red,
            head: if i + 1 == n { 8 } else { 0 },
        })
        .collect();

    let mut rng = ctx.rng(Category::Tu, t);
    let distractors = trajectory_distractors(ctx, &mut rng);
    if distractors.len() < 4 {
        return Err(SkipReason::PlacementInfeasible);
    }
    let mut choices = vec![ctx.traj.instruction.trim().to_string()];
    choices.extend(distractors);

    let mut meta = ctx.base_meta("instruction", &choices[0]);
    meta.insert("camera".into(), json!(cam.name));
    meta.insert("path_points".into(), json!(path.len()));
    let source = ctx.image_path(&cam.name, t)?;
    let media = vec![(
        format!("media/{}.png", ctx.item_id(Category::Tu, t)),
        MediaRecipe::Overlay { source, primitives: prims },
    )];
    Ok(make_item(
        ctx,
        Category::Tu,
        kf,
        templates().question(Category::Tu).to_string(),
        choices,
        0,
        media,
        vec![t],
        meta,
    ))
}

/// Distractor angles (degrees) at least `min_sep` from `correct` and from
/// each other.
pub fn sample_arrow_angles(correct: f64, n: usize, min_sep: f64, rng: &mut RngStream) -> Option<Vec<f64>> {
    let mut all = vec![correct];
    for _ in 0..REJECTION_DRAWS {
        let a = rng.range_f64(0.0, 360.0);
        if all.iter().all(|b| geom::angle_diff_deg(a, *b) >= min_sep) {
            all.push(a);
            if all.len() == n + 1 {
                return Some(all.split_off(1));
            }
        }
    }
    None
}

/// Longest length along `angle_deg` from `from` that stays inside the image.
fn max_len_in_bounds(from: [i64; 2], angle_deg: f64, w: i64, h: i64) -> f64 {
    let (dx, dy) = (angle_deg.to_radians().cos(), angle_deg.to_radians().sin());
    let limit = |p: f64, d: f64, hi: f64| {
        if d > 1e-9 {
            (hi - p) / d
        } else if d < -1e-9 {
            -p / d
        } else {
            f64::INFINITY
        }
    };
    limit(from[0] as f64, dx, (w - 1) as f64).min(limit(from[1] as f64, dy, (h - 1) as f64))
}

pub fn gen_arrow(ctx: &TrajContext<'_>, kf_index: usize) -> Result<GeneratedItem, SkipReason> {
    let kf = &ctx.keyframes[kf_index];
    let t = kf.frame_index;
    let t2 = (t + ctx.params.arrow_horizon).min(ctx.traj.len() - 1);
    if t2 == t {
        return Err(SkipReason::TooFewFrames);
    }
    let cam = ctx.primary_camera(kf)?;
    let p0 = geom::project_in_bounds(cam, ctx.traj.frames[t].ee_position()).ok_or(SkipReason::NotVisible)?;
    let p1 = geom::project(cam, ctx.traj.frames[t2].ee_position()).ok_or(SkipReason::NotVisible)?;
    let (du, dv) = (p1.u - p0.u, p1.v - p0.v);
    let disp = du.hypot(dv);
    if disp < ctx.params.arrow_min_px {
        return Err(SkipReason::SmallDisplacement);
    }
    let correct = dv.atan2(du).to_degrees().rem_euclid(360.0);
    let mut rng = ctx.rng(Category::Ad, t);
    let distractors = sample_arrow_angles(correct, 4, ctx.params.arrow_min_sep_deg, &mut rng)
        .ok_or(SkipReason::PlacementInfeasible)?;
    let mut palette = PALETTE.to_vec();
    rng.shuffle(&mut palette);

    let (w, h) = (cam.image_size.w as i64, cam.image_size.h as i64);
    let origin = [p0.u.floor() as i64, p0.v.floor() as i64];
    let nominal = 0.15 * (w.min(h) as f64);
    let mut prims = Vec::new();
    let mut arrows = Vec::new();
    for (angle, color) in std::iter::once(correct).chain(distractors.iter().copied()).zip(palette.iter().copied()) {
        let len = nominal.min(max_len_in_bounds(origin, angle, w, h));
        if len < 10.0 {
            return Err(SkipReason::PlacementInfeasible);
        }
        let (c, s) = (angle.to_radians().cos(), angle.to_radians().sin());
        let to = [origin[0] + (c * len).round() as i64, origin[1] + (s * len).round() as i64];
        let to = [to[0].clamp(0, w - 1), to[1].clamp(0, h - 1)];
        prims.push(Primitive::Arrow { from: origin, to, color, head: 8 });
        arrows.push(json!({"color": color.name(), "angle_deg": angle}));
    }
    let choices: Vec<String> = palette.iter().map(|c| c.name().to_string()).collect();

    let mut meta = ctx.base_meta("kinematic", &choices[0]);
    meta.insert("camera".into(), json!(cam.name));
    meta.insert("correct_angle_deg".into(), json!(correct));
    meta.insert("displacement_px".into(), json!(disp));
    meta.insert("target_frame".into(), json!(t2));
    meta.insert("arrows".into(), json!(arrows));
    let source = ctx.image_path(&cam.name, t)?;
    let media = vec![(
        format!("media/{}.png", ctx.item_id(Category::Ad, t)),
        MediaRecipe::Overlay { source, primitives: prims },
    )];
    Ok(make_item(
        ctx,
        Category::Ad,
        kf,
        templates().question(Category::Ad).to_string(),
        choices,
        0,
        media,
        vec![t, t2],
        meta,
    ))
}

fn order_string(order: &[usize]) -> String {
    order.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" → ")
}

pub fn gen_temporal_sequence(ctx: &TrajContext<'_>, kf_index: usize) -> Result<GeneratedItem, SkipReason> {
    let kf = &ctx.keyframes[kf_index];
    let mut chosen: Vec<_> = ctx.distinct_phase_keyframes().into_iter().take(5).collect();
    if chosen.len() < 3 {
        return Err(SkipReason::TooFewPhases);
    }
    chosen.sort_by_key(|k| k.frame_index);
    let mut rng = ctx.rng(Category::TSeq, kf.frame_index);
    // shown[i] = chronological index of the i-th presented image
    let mut shown: Vec<usize> = (0..chosen.len()).collect();
    rng.shuffle(&mut shown);
    // correct answer lists presented labels in chronological order
    let mut correct = vec![0; chosen.len()];
    for (pos, &chrono) in shown.iter().enumerate() {
        correct[chrono] = pos;
    }
    let correct_text = order_string(&correct);
    let mut seen = BTreeSet::from([correct_text.clone()]);
    let mut choices = vec![correct_text];
    for _ in 0..REJECTION_DRAWS {
        let mut perm: Vec<usize> = (0..chosen.len()).collect();
        rng.shuffle(&mut perm);
        let text = order_string(&perm);
        if seen.insert(text.clone()) {
            choices.push(text);
            if choices.len() == 5 {
                break;
            }
        }
    }
    if choices.len() < 5 {
        return Err(SkipReason::TooFewPhases);
    }

    let id = ctx.item_id(Category::TSeq, kf.frame_index);
    let mut media = Vec::new();
    let mut cams = Vec::new();
    for (pos, &chrono) in shown.iter().enumerate() {
        let k = chosen[chrono];
        let cam = ctx.primary_camera(k)?;
        let source = ctx.image_path(&cam.name, k.frame_index)?;
        let scale = if cam.image_size.h >= 200 { 2 } else { 1 };
        let label = Primitive::TextLabel { anchor: [4, 4], text: (pos + 1).to_string(), color: Color::Black, scale };
        media.push((format!("media/{id}-{}.png", pos + 1), MediaRecipe::Overlay { source, primitives: vec![label] }));
        cams.push(cam.name.clone());
    }
    let mut meta = ctx.base_meta("phase_segmentation", &choices[0]);
    meta.insert("cameras".into(), json!(cams));
    meta.insert("phases".into(), json!(chosen.iter().map(|k| k.phase).collect::<Vec<_>>()));
    meta.insert("presented_frames".into(), json!(shown.iter().map(|&c| chosen[c].frame_index).collect::<Vec<_>>()));
    let frames: Vec<usize> = chosen.iter().map(|k| k.frame_index).collect();
    Ok(make_item(
        ctx,
        Category::TSeq,
        kf,
        templates().question(Category::TSeq).to_string(),
        choices,
        0,
        media,
        frames,
        meta,
    ))
}
