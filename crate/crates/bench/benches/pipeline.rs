use criterion::{criterion_group, criterion_main, Criterion};
use isp_core::cluster::KMeansParams;
use isp_core::{
    distance_matrix, forward_confidences, generate, generate_pseudo_labels, kmeans, pool_descriptor, PartClassifier,
    SyntheticSpec,
};
use rand::{Rng, SeedableRng};
use std::hint::black_box;

fn bench_kmeans(c: &mut Criterion) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let data: Vec<f64> = (0..4096 * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let params = KMeansParams::new(6, 3);
    c.bench_function("kmeans 4096x16 k6", |b| b.iter(|| kmeans(black_box(&data), 16, &params).unwrap()));
}

fn bench_parsing(c: &mut Criterion) {
    let data = generate(&SyntheticSpec::default()).unwrap();
    let shape = data.features.shape();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let weights = (0..6 * shape.c).map(|_| rng.random_range(-1.0..1.0)).collect();
    let clf = PartClassifier::from_weights(6, shape.c, weights).unwrap();
    let map = &data.features.maps()[0];
    c.bench_function("forward_confidences 64x32", |b| b.iter(|| forward_confidences(&clf, black_box(map)).unwrap()));

    let descs: Vec<_> = data.features.maps().iter().map(|m| pool_descriptor(&clf, m).unwrap()).collect();
    c.bench_function("distance_matrix all-vs-all", |b| b.iter(|| distance_matrix(black_box(&descs), &descs).unwrap()));
}

fn bench_cascade(c: &mut Criterion) {
    let spec = SyntheticSpec { n_id: 4, imgs_per_id: 4, ..Default::default() };
    let data = generate(&spec).unwrap();
    let mut group = c.benchmark_group("cascade");
    group.sample_size(10);
    group.bench_function("pseudo labels 16 images", |b| {
        b.iter(|| generate_pseudo_labels(black_box(&data.features), 6, 0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_kmeans, bench_parsing, bench_cascade);
criterion_main!(benches);
