use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use fovea_bench::{codebooks, events, samples, sizes};
use fovea_core::codebook::{kmeans, KMeansParams};
use fovea_core::explorer::{explore, ExplorationConfig};
use fovea_core::model::{normalize, EntropyMatrix, TransitionTensor};
use fovea_core::retina::{sense, FieldId, Position};
use fovea_core::scene::generate_random_scene;

fn encode(c: &mut Criterion) {
    let books = codebooks(5_000);
    let scene = generate_random_scene(256, 256, 9).unwrap();
    let inputs = sense(&scene, Position::new(100, 100)).unwrap();
    c.bench_function("encode_all_fields", |b| {
        b.iter(|| books.encode_all(black_box(&inputs)))
    });
}

fn kmeans_fovea(c: &mut Criterion) {
    let set = samples(20_000)
        .into_iter()
        .find(|s| s.field == FieldId::FOVEA)
        .unwrap();
    let mut group = c.benchmark_group("kmeans");
    group.sample_size(10);
    group.throughput(Throughput::Elements(set.len() as u64));
    group.bench_function("fovea_k50_20k", |b| {
        b.iter(|| kmeans(&set.data, set.dim, &KMeansParams::new(50), 4).unwrap())
    });
    group.finish();
}

fn accumulate(c: &mut Criterion) {
    let evs = events(10_000);
    let mut group = c.benchmark_group("tensor");
    group.throughput(Throughput::Elements(evs.len() as u64));
    group.bench_function("accumulate_10k", |b| {
        b.iter_batched(
            || TransitionTensor::new(sizes()),
            |mut t| {
                for e in &evs {
                    t.accumulate(e).unwrap();
                }
                t
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn analysis(c: &mut Criterion) {
    let mut tensor = TransitionTensor::new(sizes());
    for e in &events(200_000) {
        tensor.accumulate(e).unwrap();
    }
    c.bench_function("entropy_matrix", |b| {
        b.iter(|| EntropyMatrix::compute(black_box(&tensor)))
    });
    c.bench_function("normalize", |b| b.iter(|| normalize(black_box(&tensor))));
}

fn exploration(c: &mut Criterion) {
    let books = codebooks(5_000);
    let config = ExplorationConfig {
        schedule: fovea_bench::random_schedule(1, 5_000, 256),
        seed: 5,
    };
    let mut group = c.benchmark_group("explore");
    group.sample_size(10);
    group.throughput(Throughput::Elements(5_000));
    group.bench_function("walk_5k", |b| {
        b.iter(|| explore(&config, &books, |_| Ok(())).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    encode,
    kmeans_fovea,
    accumulate,
    analysis,
    exploration
);
criterion_main!(benches);
