use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use doc_core::analytic::{optimal_config, NetworkParams};
use doc_core::channel::RateModel;
use doc_core::par;
use doc_core::sim::{run_episode, EpisodeSetup, Sampling};

fn network() -> NetworkParams {
    let models = (0..10)
        .map(|i| RateModel::iid_rayleigh(1e7, if i < 5 { 1.0 } else { 4.0 }).unwrap())
        .collect();
    NetworkParams::new(10, 100_000, models).unwrap()
}

fn replications(c: &mut Criterion) {
    let params = network();
    let optimal = optimal_config(&params).unwrap();
    let mut setup = EpisodeSetup::all_honest(params);
    setup.reference = Some(optimal);
    setup.sampling = Sampling::Aggregate;
    let reps: Vec<u64> = (0..8).collect();
    let run = |&r: &u64| run_episode(&setup, 20, 1, r).unwrap().elapsed.len();

    let mut group = c.benchmark_group("episode_replications");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", reps.len()), |b| {
        b.iter(|| par::map(&reps, run))
    });
    group.bench_function(BenchmarkId::new("sequential", reps.len()), |b| {
        b.iter(|| par::sequential_map(&reps, run))
    });
    group.finish();
}

criterion_group!(benches, replications);
criterion_main!(benches);
