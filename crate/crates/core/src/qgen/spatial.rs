//! Spatial prototypes: relative direction, relative depth and cross-view
//! correspondence.

use serde_json::json;

use super::{fill, make_item, templates, Category, GeneratedItem, MediaRecipe, SkipReason, TrajContext};
use crate::annotate::{Color, Layout, Primitive, PALETTE};
use crate::geom::{self, DirectionLabel, Pixel};
use crate::ground::{self, GroundValue};
use crate::rng::RngStream;
use crate::trajmodel::CameraRig;

/// Four distinct labels other than `correct`, drawn without replacement;
/// labels sharing a component with `correct` weigh `share_weight`, others 1.
pub fn sample_direction_distractors(
    correct: &DirectionLabel,
    share_weight: f64,
    rng: &mut RngStream,
) -> Vec<DirectionLabel> {
    let mut pool: Vec<DirectionLabel> = DirectionLabel::all().into_iter().filter(|l| l != correct).collect();
    let mut weights: Vec<f64> =
        pool.iter().map(|l| if l.shared_components(correct) > 0 { share_weight } else { 1.0 }).collect();
    let mut out = Vec::with_capacity(4);
    while out.len() < 4 {
        let i = rng.weighted_index(&weights).expect("pool has 25 labels");
        out.push(pool.remove(i));
        weights.remove(i);
    }
    out
}

pub fn gen_direction(ctx: &TrajContext<'_>, kf_index: usize) -> Result<GeneratedItem, SkipReason> {
    let kf = &ctx.keyframes[kf_index];
    let t = kf.frame_index;
    let cam = ctx.primary_camera(kf)?;
    let gt = ground::ground_direction(ctx.traj, cam, t, ctx.params.direction_theta)?;
    let GroundValue::Direction(label) = gt.value else {
        return Err(SkipReason::Undetermined);
    };
    let mut rng = ctx.rng(Category::Sr, t);
    let distractors = sample_direction_distractors(&label, ctx.params.share_weight, &mut rng);
    let mut choices = vec![label.to_string()];
    choices.extend(distractors.iter().map(|d| d.to_string()));

    let step = t.to_string();
    let object = ctx.object_name();
    let question =
        fill(templates().question(Category::Sr), &[("camera", &cam.name), ("step", &step), ("object", &object)]);
    let mut meta = ctx.base_meta("kinematic", &choices[0]);
    meta.insert("camera".into(), json!(cam.name));
    let obj = cam.extrinsic.transform_point(ctx.traj.object_point().expect("checked by ground_direction"));
    let ee = cam.extrinsic.transform_point(ctx.traj.frames[t].ee_position());
    meta.insert("offset_camera_m".into(), json!(geom::sub(obj, ee)));
    let media = vec![ctx.frame_media(&cam.name, t)?];
    Ok(make_item(ctx, Category::Sr, kf, question, choices, 0, media, vec![t], meta))
}

/// Index of the nearest (`closest`) or farthest depth.
pub fn pick_extreme(depths: &[f64], closest: bool) -> usize {
    let mut best = 0;
    for (i, d) in depths.iter().enumerate() {
        if (closest && *d < depths[best]) || (!closest && *d > depths[best]) {
            best = i;
        }
    }
    best
}

const MARGIN_PX: i64 = 10;
const MIN_MARKER_GAP_PX: f64 = 20.0;
const DEPTH_DRAWS: usize = 2000;

fn marker_radius(cam: &CameraRig) -> u32 {
    (cam.image_size.w.min(cam.image_size.h) / 40).max(4)
}

fn sample_pixel(rng: &mut RngStream, u0: i64, u1: i64, v0: i64, v1: i64) -> Option<[i64; 2]> {
    if u1 <= u0 || v1 <= v0 {
        return None;
    }
    Some([u0 + rng.below((u1 - u0) as usize) as i64, v0 + rng.below((v1 - v0) as usize) as i64])
}

fn px_dist(a: [i64; 2], b: [i64; 2]) -> f64 {
    (((a[0] - b[0]).pow(2) + (a[1] - b[1]).pow(2)) as f64).sqrt()
}

pub fn gen_depth(ctx: &TrajContext<'_>, kf_index: usize) -> Result<GeneratedItem, SkipReason> {
    let kf = &ctx.keyframes[kf_index];
    let t = kf.frame_index;
    let cam = ctx.depth_camera(kf).ok_or(SkipReason::NoDepth)?;
    let dm = ctx.depth_map(&cam.name, t)?;
    let (w, h) = (cam.image_size.w as i64, cam.image_size.h as i64);
    if (dm.width as i64, dm.height as i64) != (w, h) {
        return Err(SkipReason::BadMedia);
    }
    let (lo, hi) = dm.valid_range().ok_or(SkipReason::NoDepth)?;
    let sep = ctx.params.depth_sep_min_m.max(ctx.params.depth_sep_frac * (hi - lo));

    let mut rng = ctx.rng(Category::Su, t);
    let mut points: Vec<([i64; 2], f64)> = Vec::with_capacity(5);
    for _ in 0..DEPTH_DRAWS {
        let Some(px) = sample_pixel(&mut rng, MARGIN_PX, w - MARGIN_PX, MARGIN_PX, h - MARGIN_PX) else {
            break;
        };
        let Some(d) = dm.valid(px[0] as u32, px[1] as u32) else {
            continue;
        };
        let ok = points.iter().all(|(q, e)| (d - e).abs() >= sep && px_dist(px, *q) >= MIN_MARKER_GAP_PX);
        if ok {
            points.push((px, d));
            if points.len() == 5 {
                break;
            }
        }
    }
    if points.len() < 5 {
        return Err(SkipReason::DepthSeparation);
    }
    let closest = rng.bernoulli(0.5);
    let depths: Vec<f64> = points.iter().map(|p| p.1).collect();
    let answer = pick_extreme(&depths, closest);

    let radius = marker_radius(cam);
    let prims: Vec<Primitive> =
        points.iter().zip(PALETTE).map(|((px, _), color)| Primitive::Dot { center: *px, radius, color }).collect();
    let mut choices = vec![PALETTE[answer].name().to_string()];
    choices.extend(PALETTE.iter().enumerate().filter(|(i, _)| *i != answer).map(|(_, c)| c.name().to_string()));

    let extreme = if closest { "closest" } else { "farthest" };
    let question = fill(templates().question(Category::Su), &[("camera", &cam.name), ("extreme", extreme)]);
    let mut meta = ctx.base_meta("depth", &choices[0]);
    meta.insert("camera".into(), json!(cam.name));
    meta.insert("variant".into(), json!(extreme));
    meta.insert("separation_m".into(), json!(sep));
    meta.insert(
        "points".into(),
        json!(points
            .iter()
            .zip(PALETTE)
            .map(|((px, d), c)| json!({"color": c.name(), "pixel": px, "depth_m": d}))
            .collect::<Vec<_>>()),
    );
    let source = ctx.image_path(&cam.name, t)?;
    let media = vec![(
        format!("media/{}.png", ctx.item_id(Category::Su, t)),
        MediaRecipe::Overlay { source, primitives: prims },
    )];
    Ok(make_item(ctx, Category::Su, kf, question, choices, 0, media, vec![t], meta))
}

fn quadrant(px: [i64; 2], w: i64, h: i64) -> usize {
    (px[0] >= w / 2) as usize + 2 * (px[1] >= h / 2) as usize
}

fn quadrant_bounds(q: usize, w: i64, h: i64) -> (i64, i64, i64, i64) {
    let (u0, u1) = if q.is_multiple_of(2) { (MARGIN_PX, w / 2) } else { (w / 2, w - MARGIN_PX) };
    let (v0, v1) = if q / 2 == 0 { (MARGIN_PX, h / 2) } else { (h / 2, h - MARGIN_PX) };
    (u0, u1, v0, v1)
}

pub fn gen_correspondence(ctx: &TrajContext<'_>, kf_index: usize) -> Result<GeneratedItem, SkipReason> {
    let kf = &ctx.keyframes[kf_index];
    let t = kf.frame_index;
    let (cam_a, cam_b) = ctx.stereo_pair(t).ok_or(SkipReason::NoStereo)?;
    let dm = ctx.depth_map(&cam_a.name, t)?;
    let (wa, ha) = (cam_a.image_size.w as i64, cam_a.image_size.h as i64);
    if (dm.width as i64, dm.height as i64) != (wa, ha) {
        return Err(SkipReason::BadMedia);
    }
    let (wb, hb) = (cam_b.image_size.w as i64, cam_b.image_size.h as i64);
    let mut rng = ctx.rng(Category::Mv, t);

    // source pixel with depth whose 3-D point lands inside the other view
    let mut found = None;
    for _ in 0..ctx.params.corr_max_tries {
        let Some(src) = sample_pixel(&mut rng, MARGIN_PX, wa - MARGIN_PX, MARGIN_PX, ha - MARGIN_PX) else {
            break;
        };
        let Some(d) = dm.valid(src[0] as u32, src[1] as u32) else {
            continue;
        };
        let uv = Pixel::new(src[0] as f64 + 0.5, src[1] as f64 + 0.5);
        let Ok(p) = geom::backproject(cam_a, uv, d) else {
            continue;
        };
        let Some(q) = geom::project(cam_b, p) else {
            continue;
        };
        let margin = MARGIN_PX as f64;
        if q.u >= margin && q.v >= margin && q.u < (wb - MARGIN_PX) as f64 && q.v < (hb - MARGIN_PX) as f64 {
            found = Some((src, uv, d, p, q));
            break;
        }
    }
    let (src, src_uv, src_depth, world, correct_uv) = found.ok_or(SkipReason::ProjectionOutside)?;
    let correct_px = [correct_uv.u.floor() as i64, correct_uv.v.floor() as i64];

    let q0 = quadrant(correct_px, wb, hb);
    let others: Vec<usize> = (0..4).filter(|q| *q != q0).collect();
    let mut points = vec![correct_px];
    for slot in 0..ctx.params.corr_distractors {
        let (u0, u1, v0, v1) = quadrant_bounds(others[slot % others.len()], wb, hb);
        for _ in 0..ctx.params.corr_max_tries {
            let Some(px) = sample_pixel(&mut rng, u0, u1, v0, v1) else {
                break;
            };
            if points.iter().all(|p| px_dist(px, *p) >= ctx.params.corr_min_px) {
                points.push(px);
                break;
            }
        }
    }
    if points.len() < 4 {
        return Err(SkipReason::PlacementInfeasible);
    }
    // letters follow raster order of the points
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| (points[i][1], points[i][0]));
    let letter = |rank: usize| ((b'A' + rank as u8) as char).to_string();
    let correct_rank = order.iter().position(|&i| i == 0).expect("correct point ranked");

    let radius = marker_radius(cam_b);
    let mut right = Vec::new();
    let mut labeled = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        let p = points[i];
        right.push(Primitive::Dot { center: p, radius, color: Color::Yellow });
        let anchor = [(p[0] + radius as i64 + 2).min(wb - 1), (p[1] - radius as i64 - 8).clamp(0, hb - 1)];
        right.push(Primitive::TextLabel { anchor, text: letter(rank), color: Color::Black, scale: 1 });
        labeled.push(json!({"label": letter(rank), "pixel": p}));
    }
    let left = vec![Primitive::Dot { center: src, radius: marker_radius(cam_a), color: Color::Red }];

    let choices_sorted: Vec<String> = (0..points.len()).map(|r| format!("Point {}", letter(r))).collect();
    let mut choices = vec![choices_sorted[correct_rank].clone()];
    choices.extend(choices_sorted.iter().enumerate().filter(|(r, _)| *r != correct_rank).map(|(_, c)| c.clone()));

    let question = fill(templates().question(Category::Mv), &[("camera1", &cam_a.name), ("camera2", &cam_b.name)]);
    let mut meta = ctx.base_meta("stereo_geometry", &choices[0]);
    meta.insert("cameras".into(), json!([cam_a.name, cam_b.name]));
    meta.insert("source_pixel".into(), json!([src_uv.u, src_uv.v]));
    meta.insert("source_depth_m".into(), json!(src_depth));
    meta.insert("world_point".into(), json!(world));
    meta.insert("correct_pixel".into(), json!([correct_uv.u, correct_uv.v]));
    meta.insert("points".into(), json!(labeled));
    let panels = vec![(ctx.image_path(&cam_a.name, t)?, left), (ctx.image_path(&cam_b.name, t)?, right)];
    let media = vec![(
        format!("media/{}.png", ctx.item_id(Category::Mv, t)),
        MediaRecipe::Compose { panels, layout: Layout::SideBySide, labels: None },
    )];
    Ok(make_item(ctx, Category::Mv, kf, question, choices, 0, media, vec![t], meta))
}
