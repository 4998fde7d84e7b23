//! End-to-end generation: manifest → segmentation → keyframes → grounding and
//! question generation → dataset writing, with a run summary.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::RunConfig;
use crate::datasetio::{self, DatasetError, WriteOptions, WrittenDataset};
use crate::evalharness::ChatClient;
use crate::ground::instruction::parse_instruction_endpoint;
use crate::ground::{parse_instruction, ParseError, ParsedInstruction, Vocab};
use crate::keyframe::{select_keyframes, Keyframe};
use crate::phaseseg::{segment_full, Segmentation};
use crate::qgen::{generate_for_trajectory, Category, GeneratedItem, SkipReason, TrajContext, TrajItems};
use crate::trajmodel::{load_manifest_with, ApertureError, LoadOptions, ManifestError, TrajectoryRecord};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("trajectory `{0}`: {1}")]
    Aperture(String, ApertureError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Segmentation and keyframes of one trajectory.
pub fn analyze(traj: &TrajectoryRecord, cfg: &RunConfig) -> Result<(Segmentation, Vec<Keyframe>), PipelineError> {
    let seg = segment_full(traj, &cfg.thresholds).map_err(|e| PipelineError::Aperture(traj.id.clone(), e))?;
    let kfs = select_keyframes(traj, &seg.runs, &cfg.keyframes);
    Ok((seg, kfs))
}

/// All items for one loaded trajectory.
pub fn process_trajectory(traj: &TrajectoryRecord, cfg: &RunConfig, vocab: &Vocab) -> Result<TrajItems, PipelineError> {
    let (seg, kfs) = analyze(traj, cfg)?;
    let parsed = match parse_with(cfg, &traj.instruction, vocab) {
        Ok(p) => Some(p),
        Err(e) => {
            log::info!("[{}] instruction not parsed: {e}", traj.id);
            None
        }
    };
    let parse_failed = parsed.is_none();
    let ctx = TrajContext::new(traj, &seg, &kfs, parsed, &cfg.thresholds, &cfg.qgen, vocab, cfg.seed);
    let mut out = generate_for_trajectory(&ctx);
    if parse_failed && cfg.qgen.enabled.contains(&Category::Tu) {
        *out.skips.entry((Category::Tu, SkipReason::ParseFailure)).or_default() += 1;
    }
    Ok(out)
}

fn parse_with(cfg: &RunConfig, instr: &str, vocab: &Vocab) -> Result<ParsedInstruction, ParseError> {
    let Some(ep) = &cfg.instruction_endpoint else {
        return parse_instruction(instr, vocab);
    };
    let key = std::env::var(&ep.api_key_env).ok().filter(|k| !k.is_empty());
    let client = ChatClient::new(ep.url.clone(), key, ep.model.clone(), std::time::Duration::from_secs(60));
    parse_instruction_endpoint(instr, &client).or_else(|e| {
        log::warn!("instruction endpoint failed ({e}); using rules");
        parse_instruction(instr, vocab)
    })
}

/// Machine-readable summary of a `generate` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trajectories_processed: usize,
    pub trajectories_failed: usize,
    pub items_total: usize,
    pub items_per_category: BTreeMap<String, usize>,
    /// category → skip reason → count
    pub skips: BTreeMap<String, BTreeMap<String, usize>>,
    pub errors: Vec<String>,
    pub config: Value,
}

pub struct GenerateOutput {
    pub items: Vec<GeneratedItem>,
    pub applicable: BTreeMap<String, BTreeSet<Category>>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenerateOptions {
    pub jobs: usize,
    pub load: LoadOptions,
}

/// Loads and processes every manifest; per-trajectory failures are recorded
/// in the summary instead of aborting the run.
pub fn generate(
    manifests: &[PathBuf],
    cfg: &RunConfig,
    opts: GenerateOptions,
) -> Result<GenerateOutput, PipelineError> {
    let vocab = cfg.load_vocab().map_err(|e| DatasetError::Invalid(e.to_string()))?;
    let results = crate::par::map(manifests, opts.jobs, |path| {
        let traj = load_manifest_with(path, opts.load)?;
        let items = process_trajectory(&traj, cfg, &vocab)?;
        Ok::<_, PipelineError>((traj.id, items))
    });
    let mut items = Vec::new();
    let mut applicable = BTreeMap::new();
    let mut per_cat: BTreeMap<String, usize> = Category::ALL.iter().map(|c| (c.as_str().to_string(), 0)).collect();
    let mut skips: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut errors = Vec::new();
    let mut processed = 0;
    for (path, r) in manifests.iter().zip(results) {
        match r {
            Ok((id, t)) => {
                processed += 1;
                for ((cat, reason), n) in t.skips {
                    *skips.entry(cat.as_str().into()).or_default().entry(reason.as_str().into()).or_default() += n;
                }
                for g in &t.items {
                    *per_cat.entry(g.item.category.as_str().into()).or_default() += 1;
                }
                items.extend(t.items);
                applicable.insert(id, t.applicable);
            }
            Err(e) => {
                log::error!("{}: {e}", path.display());
                errors.push(format!("{}: {e}", path.display()));
            }
        }
    }
    let summary = RunSummary {
        trajectories_processed: processed,
        trajectories_failed: errors.len(),
        items_total: items.len(),
        items_per_category: per_cat,
        skips,
        errors,
        config: cfg.to_json(),
    };
    Ok(GenerateOutput { items, applicable, summary })
}

pub const SUMMARY_FILE: &str = "run_summary.json";

/// Generates, writes `items.jsonl`, media and `run_summary.json`.
pub fn generate_to_dir(
    manifests: &[PathBuf],
    cfg: &RunConfig,
    out_dir: &Path,
    opts: GenerateOptions,
    media: bool,
) -> Result<(GenerateOutput, WrittenDataset), PipelineError> {
    let mut out = generate(manifests, cfg, opts)?;
    let written = datasetio::write_dataset(&mut out.items, out_dir, WriteOptions { jobs: opts.jobs, media })?;
    let path = out_dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|source| DatasetError::Io { path, source })?;
    Ok((out, written))
}

/// Manifest files (`*.json`, excluding sidecars) in `dir`, or `dir` itself
/// when it is a file.
pub fn find_manifests(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    if dir.is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension().is_some_and(|e| e == "json")
                && !p
                    .file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.ends_with(".sidecar.json") || n.ends_with(".spec.json"))
        })
        .collect();
    out.sort();
    Ok(out)
}
