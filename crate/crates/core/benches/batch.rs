use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use coplay::batch::{run_batch, Execution};
use coplay::session::SessionConfig;
use coplay::stats::{wilcoxon_signed_rank_with, PairedSamples};

const MATCH: &str = r#"
[session]
mode = "partial_automation"
match_seconds = 10
preset = "P2"

[[players]]
name = "pilot"
role = "pilot"
source = "idle"

[[players]]
name = "bot"
role = "copilot"
source = "agent:heuristic"
"#;

fn matches(c: &mut Criterion) {
    let configs: Vec<SessionConfig> = (0..8)
        .map(|seed| {
            let mut cfg = SessionConfig::from_toml_str(MATCH).unwrap();
            cfg.arena.seed = seed;
            cfg
        })
        .collect();
    let mut g = c.benchmark_group("batch_8x1200_ticks");
    g.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| run_batch(&configs, exec))
        });
    }
    g.finish();
}

fn wilcoxon(c: &mut Criterion) {
    let pairs: Vec<(f64, f64)> = (1..=20)
        .map(|i| (0.0, if i % 3 == 0 { -(i as f64) } else { i as f64 / 2.0 }))
        .collect();
    let samples = PairedSamples::from_pairs(&pairs);
    let mut g = c.benchmark_group("wilcoxon_n20");
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| wilcoxon_signed_rank_with(&samples, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, matches, wilcoxon);
criterion_main!(benches);
