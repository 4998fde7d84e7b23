//! Yes/No prototypes: gripper state, reachability, task success and grasp
//! stability.

use serde_json::json;

use super::{fill, instruction_clause, make_item, templates, Category, GeneratedItem, SkipReason, TrajContext};
use crate::ground::{self, GroundTruth};

pub fn gen_binary(ctx: &TrajContext<'_>, kf_index: usize, cat: Category) -> Result<GeneratedItem, SkipReason> {
    let kf = &ctx.keyframes[kf_index];
    let t = kf.frame_index;
    let tpl = templates();
    let (gt, grounding, question): (GroundTruth, &str, String) = match cat {
        Category::Rs => {
            (ground::ground_gripper_open(ctx.seg.s[t], ctx.th), "proprioceptive", tpl.question(cat).to_string())
        }
        Category::Os => (
            ground::ground_reachable(ctx.traj, &ctx.params.reach)?,
            "geometric",
            fill(tpl.question(cat), &[("object", &ctx.object_name())]),
        ),
        Category::TsS => (
            ground::ground_task_success(ctx.traj),
            "manifest",
            fill(tpl.question(cat), &[("instruction", &instruction_clause(&ctx.traj.instruction))]),
        ),
        Category::TsG => (
            ground::ground_stable_grasp(ctx.traj, ctx.seg, t, ctx.th, &ctx.params.grasp)?,
            "force",
            fill(tpl.question(cat), &[("object", &ctx.object_name())]),
        ),
        _ => unreachable!("{cat} is not a binary prototype"),
    };
    let yes = gt.as_bool().ok_or(SkipReason::Undetermined)?;
    let cam = ctx.primary_camera(kf)?;
    let media = vec![ctx.frame_media(&cam.name, t)?];

    let mut choices = tpl.binary_choices.clone();
    choices.push(tpl.partial_choice[cat.as_str()].clone());
    let correct_index = if yes { 0 } else { 1 };
    let mut meta = ctx.base_meta(grounding, &choices[correct_index]);
    meta.insert("camera".into(), json!(cam.name));
    if cat == Category::Rs {
        meta.insert("aperture".into(), json!(ctx.seg.s[t]));
    }
    if cat == Category::Os {
        meta.insert("reach".into(), serde_json::to_value(ctx.params.reach).expect("reach serializes"));
    }
    if cat == Category::TsG {
        meta.insert("grasp".into(), serde_json::to_value(ctx.params.grasp).expect("grasp serializes"));
    }
    Ok(make_item(ctx, cat, kf, question, choices, correct_index, media, vec![t], meta))
}
