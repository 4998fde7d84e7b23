use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use trajvqa::config::RunConfig;
use trajvqa::ground::Vocab;
use trajvqa::par::{self, Mode};
use trajvqa::phaseseg::segment_full;
use trajvqa::pipeline::process_trajectory;
use trajvqa::trajmodel::synthetic::{self, random_spec};
use trajvqa::trajmodel::{load_manifest, TrajectoryRecord};

const EPISODES: u64 = 24;

fn episodes(dir: &std::path::Path) -> Vec<TrajectoryRecord> {
    (0..EPISODES)
        .map(|seed| {
            let ep = synthetic::synthesize(&random_spec(seed), seed).expect("random spec");
            let w = synthetic::write_episode(&ep, dir).expect("write episode");
            load_manifest(&w.manifest).expect("load")
        })
        .collect()
}

fn modes() -> [(&'static str, Mode); 2] {
    [("sequential", Mode::Sequential), ("parallel", Mode::Parallel(0))]
}

fn bench(c: &mut Criterion) {
    let dir = tempfile::tempdir().expect("tempdir");
    let trajs = episodes(dir.path());
    let cfg = RunConfig::default();
    let vocab = Vocab::builtin();

    let mut g = c.benchmark_group("segmentation");
    for (name, mode) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::map_with(mode, &trajs, |t| segment_full(t, &cfg.thresholds).expect("segments").runs.len()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("items");
    g.sample_size(10);
    for (name, mode) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::map_with(mode, &trajs, |t| process_trajectory(t, &cfg, vocab).expect("items").items.len()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
