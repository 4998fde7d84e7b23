//! `trajvqa`: trajectory logs in, grounded multiple-choice VQA datasets and
//! model scores out.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use trajvqa::config::RunConfig;
use trajvqa::datasetio::{self, CurationTargets};
use trajvqa::evalharness::{self, CannedResponder, EndpointResponder, EvalConfig, PromptMode, ResponseCache};
use trajvqa::phaseseg::SignMode;
use trajvqa::pipeline::{self, GenerateOptions};
use trajvqa::trajmodel::synthetic::{self, ScriptSpec};
use trajvqa::trajmodel::{load_manifest_with, LoadOptions};

#[derive(Parser, Debug)]
#[command(name = "trajvqa", version, about = "Grounded multiple-choice VQA from robot trajectory logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate manifests and their media.
    IngestCheck(IngestArgs),
    /// Print phase runs and keyframes of one trajectory.
    Segment(SegmentArgs),
    /// Generate a dataset from manifests.
    Generate(GenerateArgs),
    /// Dataset statistics for an items.jsonl file.
    Stats(StatsArgs),
    /// Stratified downsampling toward target weights.
    Curate(CurateArgs),
    /// Score a model endpoint or canned responses.
    Eval(EvalArgs),
    /// Write a scripted synthetic episode.
    Synth(SynthArgs),
}

/// Overrides applied on top of the run config.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Run configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tau_g: Option<f64>,
    #[arg(long)]
    tau_c: Option<f64>,
    #[arg(long)]
    tau_f: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    smooth_window: Option<usize>,
    /// paper | kinematic
    #[arg(long)]
    sign_mode: Option<SignMode>,
    #[arg(long)]
    keyframe_budget: Option<usize>,
    #[arg(long)]
    min_gap: Option<usize>,
    #[arg(long)]
    nab_p: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let th = &mut cfg.thresholds;
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.tau_g {
            th.tau_g = v;
        }
        if let Some(v) = self.tau_c {
            th.tau_c = v;
        }
        if let Some(v) = self.tau_f {
            th.tau_f = v;
        }
        if let Some(v) = self.epsilon {
            th.epsilon = v;
        }
        if let Some(v) = self.smooth_window {
            th.smooth_window = v;
        }
        if let Some(v) = self.sign_mode {
            th.sign_mode = v;
        }
        if let Some(v) = self.keyframe_budget {
            cfg.keyframes.budget = v;
        }
        if let Some(v) = self.min_gap {
            cfg.keyframes.min_gap = v;
        }
        if let Some(v) = self.nab_p {
            cfg.qgen.nab_p = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Manifest files or directories of manifests.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Reject unknown manifest keys.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct SegmentArgs {
    manifest: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Also print per-frame labels.
    #[arg(long)]
    frames: bool,
    /// Do not require the referenced media files to exist.
    #[arg(long)]
    no_media: bool,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Manifest files or directories of manifests.
    #[arg(long = "input", short, required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Worker threads; 0 = all cores, 1 = sequential.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    strict: bool,
    /// Write items.jsonl only, without rendering media.
    #[arg(long)]
    no_media: bool,
}

#[derive(Args, Debug)]
struct StatsArgs {
    items: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct CurateArgs {
    items: PathBuf,
    /// Target weights JSON: {"fields": [...], "weights": {...}, "caps": {...}}.
    #[arg(long)]
    targets: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write achieved vs target weights here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    items: PathBuf,
    /// Eval configuration JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Chat endpoint URL (default: $ROBO2VLM_ENDPOINT).
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// zero_shot | cot_appendix | cot_maintext
    #[arg(long)]
    mode: Option<PromptMode>,
    #[arg(long)]
    max_parallel: Option<usize>,
    #[arg(long)]
    nab_fraction: Option<f64>,
    /// Use canned responses instead of an endpoint.
    #[arg(long)]
    dry_run: bool,
    /// Canned responses: `oracle`, `random`, or a JSON/JSONL file by item id.
    #[arg(long, default_value = "random")]
    canned: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Response cache (JSONL); reruns only query missing items.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-item results (JSONL) here.
    #[arg(long)]
    results: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scripted episode to render.
    #[arg(long, required_unless_present = "random", conflicts_with = "random")]
    spec: Option<PathBuf>,
    /// Instead of a script, write this many randomized episodes with seeds
    /// `seed..seed+N`.
    #[arg(long)]
    random: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
    /// Skip rendering camera stills.
    #[arg(long)]
    no_images: bool,
}

fn manifests(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for i in inputs {
        out.extend(pipeline::find_manifests(i).with_context(|| format!("listing {}", i.display()))?);
    }
    if out.is_empty() {
        bail!("no manifests found");
    }
    Ok(out)
}

fn write_json(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn ingest_check(a: IngestArgs) -> Result<bool> {
    let opts = LoadOptions { strict: a.strict, skip_media_check: false };
    let mut ok = true;
    for m in manifests(&a.inputs)? {
        match load_manifest_with(&m, opts) {
            Ok(t) => println!("ok\t{}\t{} frames\t{} cameras", t.id, t.len(), t.cameras.len()),
            Err(e) => {
                ok = false;
                println!("error\t{}\t{e}", m.display());
            }
        }
    }
    Ok(ok)
}

fn segment(a: SegmentArgs) -> Result<bool> {
    let cfg = a.cfg.resolve()?;
    let traj = load_manifest_with(&a.manifest, LoadOptions { strict: false, skip_media_check: a.no_media })?;
    let (seg, kfs) = pipeline::analyze(&traj, &cfg)?;
    let mut v = json!({"id": traj.id, "runs": seg.runs, "keyframes": kfs});
    if a.frames {
        v["labels"] = json!(seg.labels);
        v["aperture"] = json!(seg.s);
    }
    write_json(&v, None)?;
    Ok(true)
}

fn generate(a: GenerateArgs) -> Result<bool> {
    let cfg = a.cfg.resolve()?;
    let files = manifests(&a.inputs)?;
    let opts = GenerateOptions { jobs: a.jobs, load: LoadOptions { strict: a.strict, skip_media_check: a.no_media } };
    let (out, written) = pipeline::generate_to_dir(&files, &cfg, &a.out, opts, !a.no_media)?;
    let s = &out.summary;
    eprintln!(
        "{} trajectories processed, {} failed, {} items written to {}",
        s.trajectories_processed,
        s.trajectories_failed,
        written.items,
        written.jsonl.display()
    );
    for (cat, n) in &s.items_per_category {
        eprintln!("  {cat:<6} {n}");
    }
    for (cat, reasons) in &s.skips {
        for (r, n) in reasons {
            eprintln!("  skipped {cat:<6} {r}: {n}");
        }
    }
    Ok(s.errors.is_empty())
}

fn stats(a: StatsArgs) -> Result<bool> {
    let report = datasetio::compute_stats_file(&a.items, a.jobs)?;
    write_json(&serde_json::to_value(report)?, a.out.as_deref())?;
    Ok(true)
}

fn curate(a: CurateArgs) -> Result<bool> {
    let items = datasetio::read_jsonl(&a.items)?;
    let text = std::fs::read_to_string(&a.targets).with_context(|| format!("reading {}", a.targets.display()))?;
    let targets: CurationTargets =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.targets.display()))?;
    let (sel, report) = datasetio::curate(&items, &targets, a.seed)?;
    let subset: Vec<_> = sel.iter().map(|&i| items[i].clone()).collect();
    datasetio::write_items(&subset, &a.out)?;
    eprintln!("kept {} of {} items", report.output, report.input);
    write_json(&serde_json::to_value(report)?, a.report.as_deref())?;
    Ok(true)
}

fn eval(a: EvalArgs) -> Result<bool> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<EvalConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => EvalConfig::default(),
    };
    if a.endpoint.is_some() {
        cfg.endpoint_url = a.endpoint.clone();
    }
    if let Some(m) = &a.model {
        cfg.model = m.clone();
    }
    if let Some(m) = a.mode {
        cfg.prompt_mode = m;
    }
    if let Some(n) = a.max_parallel {
        cfg.max_parallel = n;
    }
    if a.nab_fraction.is_some() {
        cfg.nab_fraction = a.nab_fraction;
    }
    cfg.seed = a.seed;
    cfg.validate()?;

    let items = datasetio::read_jsonl(&a.items)?;
    let mut cache = match &a.cache {
        Some(p) => ResponseCache::open(p)?,
        None => ResponseCache::in_memory(),
    };
    let media_root = a.items.parent().unwrap_or(Path::new("."));
    let (report, results) = if a.dry_run {
        let canned = match a.canned.as_str() {
            "oracle" => CannedResponder::Oracle,
            "random" => CannedResponder::Random { seed: a.seed },
            path => CannedResponder::load(Path::new(path))?,
        };
        evalharness::evaluate(&items, &cfg, &canned, &mut cache)?
    } else {
        let responder = EndpointResponder::from_config(&cfg, media_root)?;
        evalharness::evaluate(&items, &cfg, &responder, &mut cache)?
    };
    if let Some(p) = &a.results {
        let mut text = String::new();
        for r in &results {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    write_json(&serde_json::to_value(&report)?, a.out.as_deref())?;
    Ok(true)
}

fn synth(a: SynthArgs) -> Result<bool> {
    if let Some(n) = a.random {
        for seed in a.seed..a.seed + n {
            let ep = synthetic::synthesize(&synthetic::random_spec(seed), seed)?;
            synthetic::write_episode_with(&ep, &a.out, !a.no_images)?;
        }
        eprintln!("wrote {n} episodes to {}", a.out.display());
        return Ok(true);
    }
    let spec = ScriptSpec::load(a.spec.as_deref().expect("clap requires --spec"))?;
    let ep = synthetic::synthesize(&spec, a.seed)?;
    let w = synthetic::write_episode_with(&ep, &a.out, !a.no_images)?;
    eprintln!("wrote {} and {}", w.manifest.display(), w.sidecar.display());
    Ok(true)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::IngestCheck(a) => ingest_check(a),
        Command::Segment(a) => segment(a),
        Command::Generate(a) => generate(a),
        Command::Stats(a) => stats(a),
        Command::Curate(a) => curate(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
