//! Throughput of the four engine families: combinatorial enumeration,
//! partition moments, determinant generating functionals, and samplers.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;

use isokit_bench::fixture;
use isokit_core::mgf::{self, DiagonalLoad};
use isokit_core::sample::{sample_inverse_lt_field, sample_path, RngStream};
use isokit_core::{combinat, kernels, moments};

fn bench_permanent(c: &mut Criterion) {
    let model = fixture("nonsym3.json");
    let u = kernels::potential(&model).expect("transient fixture");
    // Seven repeated points: 7! = 5040 permutations, cycle-decomposed.
    let points = vec![0, 1, 2, 0, 1, 2, 0];
    c.bench_function("alpha_permanent_7_points", |b| {
        b.iter(|| {
            combinat::alpha_permanent(black_box(u.matrix()), black_box(&points), 0.5).unwrap()
        })
    });
}

fn bench_partition_moments(c: &mut Criterion) {
    let model = fixture("k2.json");
    let u = kernels::potential(&model).expect("transient fixture");
    // 4140 set partitions at order 8, a cyclic sum inside every block.
    let points = vec![0, 1, 0, 1, 0, 1, 0, 1];
    c.bench_function("gauss_square_moment_order_8", |b| {
        b.iter(|| moments::gauss_square_moment(black_box(&u), black_box(&points)).unwrap())
    });
    c.bench_function("soup_field_moment_order_8", |b| {
        b.iter(|| moments::soup_field_moment(black_box(&u), 0.5, black_box(&points)).unwrap())
    });
}

fn bench_mgf(c: &mut Criterion) {
    let model = fixture("k2.json");
    let u = kernels::potential(&model).expect("transient fixture");
    let load = DiagonalLoad::uniform(u.len(), 0.2).expect("admissible load");
    let shift = DVector::from_element(u.len(), 0.4);
    c.bench_function("gauss_square_mgf", |b| {
        b.iter(|| mgf::gauss_square_mgf(black_box(&u), black_box(&load), black_box(&shift)).unwrap())
    });
    c.bench_function("shifted_square_mgf", |b| {
        b.iter(|| {
            mgf::shifted_square_mgf(black_box(&u), black_box(&load), black_box(&shift)).unwrap()
        })
    });
}

fn bench_samplers(c: &mut Criterion) {
    let k2 = fixture("k2.json");
    c.bench_function("sample_path_k2", |b| {
        let mut trial = 0u64;
        b.iter(|| {
            let mut rng = RngStream::new(9, "bench-path", trial).rng();
            trial += 1;
            sample_path(black_box(&k2), 0, &mut rng).unwrap()
        })
    });
    let c3 = fixture("c3.json");
    c.bench_function("tau_field_c3", |b| {
        let mut trial = 0u64;
        b.iter(|| {
            let mut rng = RngStream::new(9, "bench-tau", trial).rng();
            trial += 1;
            sample_inverse_lt_field(black_box(&c3), 0, 1.0, &mut rng).unwrap()
        })
    });
}

criterion_group!(
    engines,
    bench_permanent,
    bench_partition_moments,
    bench_mgf,
    bench_samplers
);
criterion_main!(engines);
