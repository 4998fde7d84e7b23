//! Dataset output: JSONL items plus materialized media, reading back,
//! statistics, curation and cross-item consistency checks.

pub mod consistency;
pub mod curate;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::annotate::{self, AnnotateError};
use crate::qgen::{GeneratedItem, MediaRecipe, VQAItem};

pub use consistency::{check_consistency, Contradiction};
pub use curate::{curate, CurationReport, CurationTargets, StratumField};
pub use stats::{compute_stats, compute_stats_file, StatsReport};

pub const ITEMS_FILE: &str = "items.jsonl";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("duplicate item id `{0}`")]
    DuplicateId(String),
    #[error("media `{0}` produced by two different recipes")]
    MediaConflict(String),
    #[error("media `{path}`: {source}")]
    Media { path: String, source: AnnotateError },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteOptions {
    /// Worker threads for media rendering; 0 = all cores.
    pub jobs: usize,
    /// Render media files; when false only the JSONL is written.
    pub media: bool,
}

impl Default for WriteOptions {
    fn default() -> Self {
        Self { jobs: 0, media: true }
    }
}

/// Files produced by [`write_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct WrittenDataset {
    pub jsonl: PathBuf,
    pub media: Vec<PathBuf>,
    pub items: usize,
}

fn sort_frame(item: &VQAItem) -> usize {
    item.meta
        .get("keyframe")
        .and_then(serde_json::Value::as_u64)
        .map_or(item.frame_indices.first().copied().unwrap_or(0), |k| k as usize)
}

/// Canonical output order: trajectory, keyframe, category, id.
pub fn sort_items(items: &mut [GeneratedItem]) {
    items.sort_by(|a, b| {
        let (a, b) = (&a.item, &b.item);
        (&a.traj_id, sort_frame(a), a.category, &a.id).cmp(&(&b.traj_id, sort_frame(b), b.category, &b.id))
    });
}

/// Writes `items.jsonl` and renders every media recipe under `out_dir`.
///
/// Items are sorted canonically first. Media shared by several items (raw
/// frame copies) is rendered once.
pub fn write_dataset(
    items: &mut [GeneratedItem],
    out_dir: &Path,
    opts: WriteOptions,
) -> Result<WrittenDataset, DatasetError> {
    sort_items(items);
    let mut ids = BTreeSet::new();
    for g in items.iter() {
        if !ids.insert(g.item.id.as_str()) {
            return Err(DatasetError::DuplicateId(g.item.id.clone()));
        }
    }
    let mut recipes: BTreeMap<&str, &MediaRecipe> = BTreeMap::new();
    for g in items.iter() {
        for (rel, recipe) in &g.media {
            match recipes.get(rel.as_str()) {
                Some(existing) if *existing != recipe => return Err(DatasetError::MediaConflict(rel.clone())),
                _ => {
                    recipes.insert(rel, recipe);
                }
            }
        }
    }

    let media_dir = out_dir.join("media");
    fs::create_dir_all(&media_dir).map_err(io_err(&media_dir))?;
    let jsonl = out_dir.join(ITEMS_FILE);
    let file = fs::File::create(&jsonl).map_err(io_err(&jsonl))?;
    let mut w = BufWriter::new(file);
    for g in items.iter() {
        let line = serde_json::to_string(&g.item).expect("items serialize");
        writeln!(w, "{line}").map_err(io_err(&jsonl))?;
    }
    w.flush().map_err(io_err(&jsonl))?;

    let mut media = Vec::new();
    if opts.media {
        let entries: Vec<(&str, &MediaRecipe)> = recipes.into_iter().collect();
        let results = crate::par::map(&entries, opts.jobs, |(rel, recipe)| {
            let dest = out_dir.join(rel);
            materialize(recipe, &dest).map(|_| dest)
        });
        for r in results {
            media.push(r?);
        }
    }
    Ok(WrittenDataset { jsonl, media, items: items.len() })
}

/// Renders one recipe to `dest`.
pub fn materialize(recipe: &MediaRecipe, dest: &Path) -> Result<(), DatasetError> {
    let wrap = |source: AnnotateError| DatasetError::Media { path: dest.display().to_string(), source };
    if let Some(dir) = dest.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    match recipe {
        MediaRecipe::Copy { source } => {
            fs::copy(source, dest).map_err(io_err(source))?;
        }
        MediaRecipe::Overlay { source, primitives } => {
            let mut img = annotate::load_rgb(source).map_err(wrap)?;
            annotate::draw(&mut img, primitives).map_err(wrap)?;
            annotate::write_png(&img, dest).map_err(wrap)?;
        }
        MediaRecipe::Compose { panels, layout, labels } => {
            let mut imgs = Vec::with_capacity(panels.len());
            for (source, prims) in panels {
                let mut img = annotate::load_rgb(source).map_err(wrap)?;
                annotate::draw(&mut img, prims).map_err(wrap)?;
                imgs.push(img);
            }
            let out = annotate::compose(&imgs, *layout, labels.as_deref()).map_err(wrap)?;
            annotate::write_png(&out, dest).map_err(wrap)?;
        }
    }
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<VQAItem>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: VQAItem = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Writes plain items (no media) as JSONL in the given order.
pub fn write_items(items: &[VQAItem], path: &Path) -> Result<(), DatasetError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for it in items {
        writeln!(w, "{}", serde_json::to_string(it).expect("items serialize")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
