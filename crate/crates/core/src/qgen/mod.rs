//! Question generation: prototype gating, per-category generators with
//! engineered distractors, and the final shuffle with "None of the above"
//! injection.
//!
//! Generators never touch pixels. They return a [`GeneratedItem`]: the
//! finished [`VQAItem`] plus [`MediaRecipe`]s that the dataset writer
//! materializes.

mod binary;
mod sequence;
mod spatial;

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::annotate::{self, Layout, Primitive};
use crate::ground::{GraspParams, ParsedInstruction, ReachParams, Vocab};
use crate::keyframe::Keyframe;
use crate::phaseseg::{PhaseLabel, SegThresholds, Segmentation};
use crate::rng::RngStream;
use crate::trajmodel::pfm::{self, DepthMap};
use crate::trajmodel::{CameraRig, TrajectoryRecord};

pub use binary::gen_binary;
pub use sequence::{gen_arrow, gen_goal_config, gen_phase_question, gen_temporal_sequence, gen_trajectory_q};
pub use spatial::{gen_correspondence, gen_depth, gen_direction, sample_direction_distractors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "RS")]
    Rs,
    #[serde(rename = "OS")]
    Os,
    #[serde(rename = "SR")]
    Sr,
    #[serde(rename = "SU")]
    Su,
    #[serde(rename = "MV")]
    Mv,
    #[serde(rename = "TS-G")]
    TsG,
    #[serde(rename = "TS-S")]
    TsS,
    #[serde(rename = "TS-GL")]
    TsGl,
    #[serde(rename = "AU")]
    Au,
    #[serde(rename = "IP")]
    Ip,
    #[serde(rename = "TU")]
    Tu,
    #[serde(rename = "AD")]
    Ad,
    #[serde(rename = "TSeq")]
    TSeq,
}

impl Category {
    pub const ALL: [Category; 13] = [
        Category::Rs,
        Category::Os,
        Category::Sr,
        Category::Su,
        Category::Mv,
        Category::TsG,
        Category::TsS,
        Category::TsGl,
        Category::Au,
        Category::Ip,
        Category::Tu,
        Category::Ad,
        Category::TSeq,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Rs => "RS",
            Category::Os => "OS",
            Category::Sr => "SR",
            Category::Su => "SU",
            Category::Mv => "MV",
            Category::TsG => "TS-G",
            Category::TsS => "TS-S",
            Category::TsGl => "TS-GL",
            Category::Au => "AU",
            Category::Ip => "IP",
            Category::Tu => "TU",
            Category::Ad => "AD",
            Category::TSeq => "TSeq",
        }
    }

    /// Yes/No questions with exactly four choices and no NAB.
    pub fn is_binary(self) -> bool {
        matches!(self, Category::Rs | Category::Os | Category::TsS | Category::TsG)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL.iter().copied().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VQAItem {
    pub id: String,
    pub category: Category,
    pub question: String,
    pub choices: Vec<String>,
    pub correct_index: usize,
    pub images: Vec<String>,
    pub traj_id: String,
    pub frame_indices: Vec<usize>,
    pub phase: PhaseLabel,
    pub meta: BTreeMap<String, Value>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("item `{id}`: {message}")]
pub struct ItemError {
    pub id: String,
    pub message: String,
}

impl VQAItem {
    pub fn validate(&self) -> Result<(), ItemError> {
        let fail = |m: &str| Err(ItemError { id: self.id.clone(), message: m.to_string() });
        let n = self.choices.len();
        if !(4..=5).contains(&n) {
            return fail("needs 4 or 5 choices");
        }
        if self.correct_index >= n {
            return fail("correct_index out of range");
        }
        let distinct: BTreeSet<&String> = self.choices.iter().collect();
        if distinct.len() != n {
            return fail("duplicate choices");
        }
        if self.category.is_binary() && n != 4 {
            return fail("binary items have exactly four choices");
        }
        if self.category.is_binary() && self.choices.iter().any(|c| c == &templates().none_of_the_above) {
            return fail("binary items never offer None of the above");
        }
        if self.images.is_empty() {
            return fail("no images");
        }
        if self.frame_indices.is_empty() {
            return fail("no frame indices");
        }
        Ok(())
    }

    pub fn correct_text(&self) -> &str {
        &self.choices[self.correct_index]
    }

    /// Correct answer before any "None of the above" replacement.
    pub fn grounded_answer(&self) -> Option<&str> {
        self.meta.get("answer").and_then(Value::as_str)
    }

    pub fn correct_letter(&self) -> char {
        (b'A' + self.correct_index as u8) as char
    }
}

/// How one output image is produced from trajectory media.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MediaRecipe {
    Copy { source: PathBuf },
    Overlay { source: PathBuf, primitives: Vec<Primitive> },
    Compose { panels: Vec<(PathBuf, Vec<Primitive>)>, layout: Layout, labels: Option<Vec<String>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedItem {
    pub item: VQAItem,
    /// `(relative output path, recipe)`, one per entry of `item.images`.
    pub media: Vec<(String, MediaRecipe)>,
}

/// Distractor and grounding constants. All are stamped into item metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QgenParams {
    pub nab_p: f64,
    pub direction_theta: f64,
    pub share_weight: f64,
    pub depth_sep_min_m: f64,
    pub depth_sep_frac: f64,
    pub corr_min_px: f64,
    pub corr_max_tries: usize,
    pub corr_distractors: usize,
    pub arrow_horizon: usize,
    pub arrow_min_px: f64,
    pub arrow_min_sep_deg: f64,
    pub goal_min_gap: usize,
    pub grasp: GraspParams,
    pub reach: ReachParams,
    pub enabled: Vec<Category>,
}

impl Default for QgenParams {
    fn default() -> Self {
        Self {
            nab_p: 0.2,
            direction_theta: crate::geom::DEFAULT_DIRECTION_THETA,
            share_weight: 3.0,
            depth_sep_min_m: 0.05,
            depth_sep_frac: 0.10,
            corr_min_px: 40.0,
            corr_max_tries: 100,
            corr_distractors: 4,
            arrow_horizon: 10,
            arrow_min_px: 10.0,
            arrow_min_sep_deg: 45.0,
            goal_min_gap: 10,
            grasp: GraspParams::default(),
            reach: ReachParams::default(),
            enabled: Category::ALL.to_vec(),
        }
    }
}

/// Why a prototype produced no item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    Undetermined,
    MissingObjectPoint,
    NotVisible,
    LowResolution,
    MissingImage,
    Degenerate,
    NoDepth,
    DepthSeparation,
    ProjectionOutside,
    PlacementInfeasible,
    TooFewFrames,
    NoNextPhase,
    ParseFailure,
    SmallDisplacement,
    TooFewPhases,
    NotInContact,
    NoStereo,
    BadMedia,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::Undetermined => "undetermined",
            SkipReason::MissingObjectPoint => "missing_object_point",
            SkipReason::NotVisible => "not_visible",
            SkipReason::LowResolution => "low_resolution",
            SkipReason::MissingImage => "missing_image",
            SkipReason::Degenerate => "degenerate",
            SkipReason::NoDepth => "no_depth",
            SkipReason::DepthSeparation => "depth_separation",
            SkipReason::ProjectionOutside => "projection_outside",
            SkipReason::PlacementInfeasible => "placement_infeasible",
            SkipReason::TooFewFrames => "too_few_frames",
            SkipReason::NoNextPhase => "no_next_phase",
            SkipReason::ParseFailure => "parse_failure",
            SkipReason::SmallDisplacement => "small_displacement",
            SkipReason::TooFewPhases => "too_few_phases",
            SkipReason::NotInContact => "not_in_contact",
            SkipReason::NoStereo => "no_stereo",
            SkipReason::BadMedia => "bad_media",
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<crate::ground::GroundError> for SkipReason {
    fn from(e: crate::ground::GroundError) -> Self {
        use crate::ground::GroundError as G;
        match e {
            G::MissingObjectPoint => SkipReason::MissingObjectPoint,
            G::NotInContact(_) => SkipReason::NotInContact,
            G::BehindCamera(_) => SkipReason::NotVisible,
            G::Degenerate => SkipReason::Degenerate,
        }
    }
}

/// Versioned question wording and fixed answer strings.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Templates {
    pub version: u32,
    pub questions: BTreeMap<String, String>,
    pub binary_choices: Vec<String>,
    pub partial_choice: BTreeMap<String, String>,
    pub none_of_the_above: String,
    pub phase_descriptions: BTreeMap<PhaseLabel, String>,
    pub trajectory_distractors: Vec<String>,
}

pub const TEMPLATES_JSON: &str = include_str!("../../templates/questions.json");

pub fn templates() -> &'static Templates {
    static T: OnceLock<Templates> = OnceLock::new();
    T.get_or_init(|| serde_json::from_str(TEMPLATES_JSON).expect("built-in question templates parse"))
}

impl Templates {
    pub fn question(&self, cat: Category) -> &str {
        &self.questions[cat.as_str()]
    }

    pub fn describe(&self, phase: PhaseLabel) -> &str {
        &self.phase_descriptions[&phase]
    }

    /// Phase whose description is exactly `text`.
    pub fn phase_of_description(&self, text: &str) -> Option<PhaseLabel> {
        self.phase_descriptions.iter().find(|(_, d)| d.as_str() == text).map(|(p, _)| *p)
    }
}

/// Replaces `{key}` placeholders.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// Instruction text as it reads inside a question: trimmed, trailing period
/// dropped, first letter lowercased.
pub fn instruction_clause(instr: &str) -> String {
    let t = instr.trim().trim_end_matches('.');
    let mut c = t.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Everything a generator needs about one trajectory.
pub struct TrajContext<'a> {
    pub traj: &'a TrajectoryRecord,
    pub seg: &'a Segmentation,
    pub keyframes: &'a [Keyframe],
    pub parsed: Option<ParsedInstruction>,
    pub th: &'a SegThresholds,
    pub params: &'a QgenParams,
    pub vocab: &'a Vocab,
    pub seed: u64,
    depth_cache: RefCell<BTreeMap<PathBuf, Option<Arc<DepthMap>>>>,
}

impl<'a> TrajContext<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        traj: &'a TrajectoryRecord,
        seg: &'a Segmentation,
        keyframes: &'a [Keyframe],
        parsed: Option<ParsedInstruction>,
        th: &'a SegThresholds,
        params: &'a QgenParams,
        vocab: &'a Vocab,
        seed: u64,
    ) -> Self {
        Self { traj, seg, keyframes, parsed, th, params, vocab, seed, depth_cache: RefCell::new(BTreeMap::new()) }
    }

    pub fn rng(&self, cat: Category, frame: usize) -> RngStream {
        RngStream::new(self.seed, &self.traj.id, cat.as_str(), frame)
    }

    /// Name used for the target object in question text.
    pub fn object_name(&self) -> String {
        match (&self.traj.target_object, &self.parsed) {
            (Some(o), _) if !o.name.trim().is_empty() => o.name.trim().to_string(),
            (_, Some(p)) => crate::ground::instruction::bare_noun(&p.target_object).to_string(),
            _ => "object".to_string(),
        }
    }

    pub fn camera(&self, name: &str) -> Option<&'a CameraRig> {
        self.traj.camera(name)
    }

    /// Camera passes the resolution filter.
    pub fn usable(&self, cam: &CameraRig) -> bool {
        annotate::resolution_filter(cam.image_size)
    }

    /// First visible camera at the keyframe that passes the resolution
    /// filter.
    pub fn primary_camera(&self, kf: &Keyframe) -> Result<&'a CameraRig, SkipReason> {
        let mut any = false;
        for name in &kf.cameras_visible {
            if let Some(c) = self.camera(name) {
                any = true;
                if self.usable(c) {
                    return Ok(c);
                }
            }
        }
        Err(if any { SkipReason::LowResolution } else { SkipReason::NotVisible })
    }

    pub fn image_path(&self, cam: &str, frame: usize) -> Result<PathBuf, SkipReason> {
        self.traj.frames[frame].images.get(cam).map(|p| self.traj.resolve(p)).ok_or(SkipReason::MissingImage)
    }

    pub fn depth_map(&self, cam: &str, frame: usize) -> Result<Arc<DepthMap>, SkipReason> {
        let rel = self.traj.frames[frame].depth_path(cam).ok_or(SkipReason::NoDepth)?;
        let path = self.traj.resolve(rel);
        let mut cache = self.depth_cache.borrow_mut();
        let entry = cache.entry(path.clone()).or_insert_with(|| match pfm::read(&path) {
            Ok(m) => Some(Arc::new(m)),
            Err(e) => {
                log::warn!("[{}] depth {}: {e}", self.traj.id, path.display());
                None
            }
        });
        entry.clone().ok_or(SkipReason::BadMedia)
    }

    /// Usable camera with a depth map at `frame` and a usable stereo partner.
    pub fn stereo_pair(&self, frame: usize) -> Option<(&'a CameraRig, &'a CameraRig)> {
        self.traj.cameras.iter().find_map(|a| {
            let s = a.stereo.as_ref()?;
            let b = self.camera(&s.right_camera_name)?;
            let has_depth = self.traj.frames[frame].depth_path(&a.name).is_some();
            (has_depth && self.usable(a) && self.usable(b)).then_some((a, b))
        })
    }

    /// Visible usable camera with a depth map at the keyframe.
    pub fn depth_camera(&self, kf: &Keyframe) -> Option<&'a CameraRig> {
        kf.cameras_visible
            .iter()
            .filter_map(|n| self.camera(n))
            .find(|c| self.usable(c) && self.traj.frames[kf.frame_index].depth_path(&c.name).is_some())
    }

    /// Index of the last keyframe whose phase is not Transition.
    pub fn last_confident_keyframe(&self) -> Option<usize> {
        self.keyframes.iter().rposition(|k| k.phase != PhaseLabel::Transition)
    }

    /// Keyframes with distinct phases, earliest occurrence of each.
    pub fn distinct_phase_keyframes(&self) -> Vec<&'a Keyframe> {
        let mut seen = BTreeSet::new();
        self.keyframes.iter().filter(|k| k.phase != PhaseLabel::Transition && seen.insert(k.phase)).collect()
    }

    pub fn item_id(&self, cat: Category, frame: usize) -> String {
        format!("{}-{frame:05}-{}", self.traj.id, cat.as_str())
    }

    /// Provenance shared by every item.
    pub fn base_meta(&self, grounding: &str, answer: &str) -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        m.insert("seed".into(), json!(self.seed));
        m.insert("grounding".into(), json!(grounding));
        m.insert("answer".into(), json!(answer));
        m.insert("thresholds".into(), serde_json::to_value(self.th).expect("thresholds serialize"));
        m.insert("camera_convention".into(), json!("x-right,y-down,z-forward"));
        m.insert("templates_version".into(), json!(templates().version));
        m.insert("scene_tag".into(), json!(self.traj.scene_tag));
        m.insert("skill_verb".into(), json!(self.parsed.as_ref().map(|p| p.skill_verb.as_str())));
        m
    }

    /// Media entry that copies the raw frame from `cam`.
    pub fn frame_media(&self, cam: &str, frame: usize) -> Result<(String, MediaRecipe), SkipReason> {
        let source = self.image_path(cam, frame)?;
        Ok((format!("media/{}/{cam}/{frame:05}.png", self.traj.id), MediaRecipe::Copy { source }))
    }
}

fn phases(list: &[PhaseLabel]) -> BTreeSet<PhaseLabel> {
    list.iter().copied().collect()
}

/// Prototypes whose phase gate and modality requirements hold at
/// `ctx.keyframes[kf_index]`.
pub fn applicable_prototypes(ctx: &TrajContext<'_>, kf_index: usize) -> BTreeSet<Category> {
    use PhaseLabel::*;
    let kf = &ctx.keyframes[kf_index];
    let p = kf.phase;
    let traj = ctx.traj;
    let obj = traj.object_point().is_some();
    let in_phases = |list: &[PhaseLabel]| phases(list).contains(&p);
    let mut out = BTreeSet::new();
    let mut add = |c: Category, ok: bool| {
        if ok {
            out.insert(c);
        }
    };
    add(Category::Rs, in_phases(&[Stabilize, Contact, Release]));
    add(Category::Os, obj && p == Approach);
    add(Category::Sr, obj && in_phases(&[Approach, Stabilize]));
    add(Category::Su, in_phases(&[Approach, Stabilize]) && ctx.depth_camera(kf).is_some());
    add(Category::Mv, in_phases(&[Approach, Stabilize, Release, Reset]) && ctx.stereo_pair(kf.frame_index).is_some());
    add(Category::TsS, traj.success.is_some() && p == Reset);
    add(Category::TsG, obj && p == Contact);
    add(Category::TsGl, obj && traj.success == Some(true) && in_phases(&[Approach, Stabilize, Contact, Release]));
    add(Category::Au, obj && p != Transition);
    add(
        Category::Ip,
        obj && in_phases(&[Approach, Stabilize, Contact, Release])
            && ctx.seg.next_phase_after(kf.frame_index).is_some(),
    );
    add(Category::Tu, obj && p == Approach && ctx.parsed.is_some());
    add(Category::Ad, obj && in_phases(&[Approach, Stabilize, Contact, Release]));
    add(
        Category::TSeq,
        obj && ctx.last_confident_keyframe() == Some(kf_index) && ctx.distinct_phase_keyframes().len() >= 3,
    );
    out
}

/// Shuffles the choices (tracking the correct one) and, for five-choice
/// non-binary items, replaces the correct answer with "None of the above"
/// with probability `nab_p`, then reshuffles.
pub fn shuffle_and_nab(mut item: VQAItem, nab_p: f64, rng: &mut RngStream) -> VQAItem {
    let correct = item.choices[item.correct_index].clone();
    rng.shuffle(&mut item.choices);
    item.correct_index = item.choices.iter().position(|c| *c == correct).expect("correct choice survives shuffle");
    let mut nab = false;
    if item.choices.len() == 5 && !item.category.is_binary() && rng.bernoulli(nab_p) {
        let label = templates().none_of_the_above.clone();
        item.choices.remove(item.correct_index);
        item.choices.push(label.clone());
        rng.shuffle(&mut item.choices);
        item.correct_index = item.choices.iter().position(|c| *c == label).expect("NAB present");
        nab = true;
    }
    item.meta.insert("nab".into(), json!(nab));
    item
}

/// Output of [`generate_for_trajectory`].
#[derive(Debug, Clone, Default)]
pub struct TrajItems {
    pub items: Vec<GeneratedItem>,
    /// `(category, reason)` counts.
    pub skips: BTreeMap<(Category, SkipReason), usize>,
    /// Union of applicable prototypes over all keyframes.
    pub applicable: BTreeSet<Category>,
}

fn dispatch(ctx: &TrajContext<'_>, kf_index: usize, cat: Category) -> Result<GeneratedItem, SkipReason> {
    match cat {
        Category::Rs | Category::Os | Category::TsS | Category::TsG => gen_binary(ctx, kf_index, cat),
        Category::Sr => gen_direction(ctx, kf_index),
        Category::Su => gen_depth(ctx, kf_index),
        Category::Mv => gen_correspondence(ctx, kf_index),
        Category::TsGl => gen_goal_config(ctx, kf_index),
        Category::Au => gen_phase_question(ctx, kf_index, false),
        Category::Ip => gen_phase_question(ctx, kf_index, true),
        Category::Tu => gen_trajectory_q(ctx, kf_index),
        Category::Ad => gen_arrow(ctx, kf_index),
        Category::TSeq => gen_temporal_sequence(ctx, kf_index),
    }
}

/// Runs every applicable, enabled prototype on every keyframe.
pub fn generate_for_trajectory(ctx: &TrajContext<'_>) -> TrajItems {
    let enabled: BTreeSet<Category> = ctx.params.enabled.iter().copied().collect();
    let mut out = TrajItems::default();
    for (k, kf) in ctx.keyframes.iter().enumerate() {
        let applicable = applicable_prototypes(ctx, k);
        out.applicable.extend(applicable.iter().copied());
        for cat in applicable.into_iter().filter(|c| enabled.contains(c)) {
            match dispatch(ctx, k, cat) {
                Ok(mut g) => {
                    let mut rng = RngStream::substream(ctx.seed, &ctx.traj.id, cat.as_str(), kf.frame_index, "shuffle");
                    g.item = shuffle_and_nab(g.item, ctx.params.nab_p, &mut rng);
                    g.item.validate().expect("generators build valid items");
                    out.items.push(g);
                }
                Err(reason) => *out.skips.entry((cat, reason)).or_default() += 1,
            }
        }
    }
    out
}

/// Assembles an item from parts; choices are in generation order with the
/// correct one at `correct_index`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn make_item(
    ctx: &TrajContext<'_>,
    cat: Category,
    kf: &Keyframe,
    question: String,
    choices: Vec<String>,
    correct_index: usize,
    media: Vec<(String, MediaRecipe)>,
    frame_indices: Vec<usize>,
    mut meta: BTreeMap<String, Value>,
) -> GeneratedItem {
    meta.insert("keyframe".into(), json!(kf.frame_index));
    meta.insert("constants".into(), serde_json::to_value(constants_meta(ctx.params)).expect("constants serialize"));
    let item = VQAItem {
        id: ctx.item_id(cat, kf.frame_index),
        category: cat,
        question,
        choices,
        correct_index,
        images: media.iter().map(|(p, _)| p.clone()).collect(),
        traj_id: ctx.traj.id.clone(),
        frame_indices,
        phase: kf.phase,
        meta,
    };
    GeneratedItem { item, media }
}

fn constants_meta(p: &QgenParams) -> Value {
    json!({
        "direction_theta": p.direction_theta,
        "share_weight": p.share_weight,
        "depth_sep_min_m": p.depth_sep_min_m,
        "depth_sep_frac": p.depth_sep_frac,
        "corr_min_px": p.corr_min_px,
        "arrow_horizon": p.arrow_horizon,
        "arrow_min_px": p.arrow_min_px,
        "arrow_min_sep_deg": p.arrow_min_sep_deg,
        "goal_min_gap": p.goal_min_gap,
        "nab_p": p.nab_p,
    })
}
