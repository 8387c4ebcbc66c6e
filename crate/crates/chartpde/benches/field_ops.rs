//! Parallel vs sequential per-node kernels. With the default `parallel`
//! feature, `map_nodes` fans out over rayon; `map_nodes_seq` is the
//! reference path. Built with --no-default-features the two coincide.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use chartpde::disc::{map_nodes, map_nodes_seq};
use chartpde::geometry::{self, test_charts, ScalarField};

fn bench_ricci(c: &mut Criterion) {
    let mut group = c.benchmark_group("ricci-field");
    for n in [32usize, 64] {
        let chart = Arc::new(test_charts::sphere_band(n, 0.6, 1.4));
        let nodes = chart.grid.len();
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, _| {
            b.iter(|| {
                map_nodes(nodes, |node| {
                    chart.ricci(node).expect("ricci").trace()
                })
            })
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, _| {
            b.iter(|| {
                map_nodes_seq(nodes, |node| {
                    chart.ricci(node).expect("ricci").trace()
                })
            })
        });
    }
    group.finish();
}

fn bench_hessian_pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("hessian-norm");
    for n in [64usize, 128] {
        let chart = Arc::new(test_charts::annulus(n));
        let phi = ScalarField::from_fn(&chart, |x| (x[0].ln()) * (2.0 * x[1]).cos());
        group.bench_with_input(BenchmarkId::new("pipeline", n), &n, |b, _| {
            b.iter(|| geometry::hessian_norm_sq(&geometry::hessian(&phi)).sup_norm())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_ricci, bench_hessian_pipeline);
criterion_main!(benches);
