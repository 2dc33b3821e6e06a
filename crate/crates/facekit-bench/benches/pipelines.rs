//! Wall-time benchmarks for the heavy paths: patch descriptors, detector
//! training, the SVM solver, and subspace basis construction.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use facekit::imaging::GrayImage;
use facekit::subspace::{image_vector, ProjectionBasis};
use facekit::svm::{smo_train, KernelSpec};
use facekit::synthetic;
use facekit::{SomDetector, SomTrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn class_images(n: usize) -> Vec<GrayImage> {
    let ds = synthetic::generate(0);
    ds.samples()[..n].iter().map(|s| s.image.clone()).collect()
}

fn blob_points(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        let center = label * 0.6;
        points.push(vec![
            center + rng.random_range(-1.0..1.0),
            -center + rng.random_range(-1.0..1.0),
        ]);
        labels.push(label);
    }
    (points, labels)
}

fn bench_patch_descriptors(c: &mut Criterion) {
    let image = class_images(1).pop().unwrap();
    c.bench_function("patch_descriptors_one_window", |b| {
        b.iter(|| {
            let patches = black_box(&image).split_patches().unwrap();
            patches
                .iter()
                .map(facekit::features::raw_descriptor)
                .collect::<Vec<_>>()
        })
    });
}

fn bench_som_train(c: &mut Criterion) {
    let images = class_images(10);
    c.bench_function("som_train_10_images", |b| {
        b.iter(|| {
            SomDetector::train(
                black_box(&images),
                SomTrainConfig::for_corpus(images.len(), 0),
                10,
            )
            .unwrap()
        })
    });
}

fn bench_smo_solve(c: &mut Criterion) {
    let (points, labels) = blob_points(80);
    c.bench_function("smo_train_rbf_80_points", |b| {
        b.iter(|| {
            smo_train(
                black_box(&points),
                black_box(&labels),
                KernelSpec::Rbf { gamma: 1.0 },
                1.0,
                1e-3,
            )
            .unwrap()
        })
    });
}

fn bench_pca_basis(c: &mut Criterion) {
    let vectors: Vec<Vec<f64>> = class_images(30)
        .iter()
        .map(|img| image_vector(img).unwrap())
        .collect();
    c.bench_function("pca_basis_30x10000_dim20", |b| {
        b.iter(|| ProjectionBasis::pca(black_box(&vectors), 20).unwrap())
    });
}

fn bench_random_projection(c: &mut Criterion) {
    let vector = image_vector(&class_images(1)[0]).unwrap();
    let basis = ProjectionBasis::random(vector.len(), 100, 0).unwrap();
    c.bench_function("random_basis_10000_to_100", |b| {
        b.iter(|| ProjectionBasis::random(vector.len(), 100, black_box(0)).unwrap())
    });
    c.bench_function("project_10000_to_100", |b| {
        b.iter(|| basis.project(black_box(&vector)).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_patch_descriptors,
        bench_som_train,
        bench_smo_solve,
        bench_pca_basis,
        bench_random_projection
}
criterion_main!(benches);
