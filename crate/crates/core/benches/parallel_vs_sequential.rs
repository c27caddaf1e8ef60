//! Compares the rayon-backed index/chunk maps against their sequential
//! twins on the three workloads that dominate wall time: per-client local
//! updates, chunked full-gradient accumulation, and residue trials.
//!
//! Both paths produce bit-identical results; this suite measures what the
//! thread pool buys (or costs) at each granularity.

use criterion::{criterion_group, criterion_main, Criterion};
use lsgd_core::data::rng::{RngStream, StreamDomain};
use lsgd_core::data::synthetic::{
    make_synthetic_images, make_synthetic_quadratic, SyntheticImagesConfig,
};
use lsgd_core::data::{partition_indices, sample_batch, ClientShard};
use lsgd_core::fedsim::local_client_update;
use lsgd_core::model::LossProblem;
use lsgd_core::par;
use ndarray::Array1;
use std::hint::black_box;
use std::sync::Arc;

fn quadratic_fixture(dim: usize, clients: usize, batch: usize) -> (LossProblem, Vec<ClientShard>) {
    let eigs: Vec<f64> = (0..dim).map(|i| 0.01 + i as f64 / dim as f64).collect();
    let problem = make_synthetic_quadratic(dim, &eigs, 7)
        .unwrap()
        .with_gradient_noise(0.01)
        .unwrap()
        .with_virtual_len(clients * batch)
        .unwrap();
    let shards = partition_indices(clients * batch, clients, 3).unwrap();
    (problem, shards)
}

fn bench_client_round(c: &mut Criterion) {
    let clients = 16;
    let (batch, steps) = (4, 20);
    let (problem, shards) = quadratic_fixture(100, clients, batch);
    let x = Array1::from_elem(problem.dim(), 0.5);

    let round = |mapper: fn(usize, &(dyn Fn(usize) -> Array1<f64> + Sync)) -> Vec<Array1<f64>>| {
        let job = |client: usize| {
            let stream = RngStream::new(11, StreamDomain::Batch)
                .for_client(client as u64)
                .for_round(0);
            local_client_update(&problem, &shards[client], &x, steps, 0.05, batch, stream)
                .unwrap()
                .delta
        };
        mapper(clients, &job)
    };

    let mut group = c.benchmark_group("client_round");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(round(|n, f| par::map_indices(n, f))))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(round(|n, f| par::map_indices_seq(n, f))))
    });
    group.finish();
}

fn bench_gradient_chunks(c: &mut Criterion) {
    let data = make_synthetic_images(&SyntheticImagesConfig {
        samples: 4096,
        classes: 10,
        rows: 14,
        cols: 14,
        pixel_noise: 0.05,
        label_noise: 0.03,
        seed: 1,
    })
    .unwrap();
    let n = data.len();
    let problem = LossProblem::softmax_linear(Arc::new(data)).unwrap();
    let x = Array1::from_elem(problem.dim(), 0.01);

    let fold = |partials: Vec<Array1<f64>>| {
        let mut acc = Array1::<f64>::zeros(problem.dim());
        for p in partials {
            acc += &p;
        }
        acc / n as f64
    };
    let job = |range: std::ops::Range<usize>| {
        let idx: Vec<usize> = range.collect();
        problem.grad(&x, &idx).unwrap() * idx.len() as f64
    };

    let mut group = c.benchmark_group("gradient_chunks");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(fold(par::map_chunks(n, 512, job))))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(fold(par::map_chunks_seq(n, 512, job))))
    });
    group.finish();
}

fn bench_residue_trials(c: &mut Criterion) {
    let trials = 32;
    let (batch, depth) = (4, 10);
    let (problem, shards) = quadratic_fixture(80, 1, 64);
    let shard = &shards[0];
    let x0 = Array1::from_elem(problem.dim(), 0.3);

    let trial = |t: usize| {
        let stream = RngStream::new(5, StreamDomain::Trial)
            .for_client(t as u64)
            .for_round(0);
        let noise = stream.with_domain(StreamDomain::GradientNoise);
        let mut x = x0.clone();
        for k in 0..depth {
            let idx = sample_batch(shard, batch, stream.at(k as u64)).unwrap();
            let g = problem.stochastic_grad(&x, &idx, noise.at(k as u64)).unwrap();
            x = &x - &(g * 0.05);
        }
        lsgd_core::residue::residue(&problem, &x0, &x).unwrap()
    };

    let mut group = c.benchmark_group("residue_trials");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(par::map_indices(trials, trial)))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(par::map_indices_seq(trials, trial)))
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_client_round,
    bench_gradient_chunks,
    bench_residue_trials
);
criterion_main!(benches);
