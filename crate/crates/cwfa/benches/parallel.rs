//! Parallel-vs-sequential throughput on the three data-parallel workloads:
//! a level of independent model fits, whole grid cells, and k-means
//! restarts. `exec::map` uses the rayon pool (default `parallel` feature);
//! `exec::map_sequential` is the fallback path, so one binary measures both.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cwfa::aecm::FitConfig;
use cwfa::{
    example1_spec, fit, hierarchical_fit_family, kmeans_partition, sample_dataset, ConstraintCode,
    Dataset,
};

fn benchmark_data() -> (Dataset, Vec<usize>) {
    let (data, _) = sample_dataset(&example1_spec(42)).unwrap();
    let partition = kmeans_partition(&data, 2, 10, 42).unwrap();
    (data, partition)
}

fn bench_independent_fits(c: &mut Criterion) {
    let (data, partition) = benchmark_data();
    let config = FitConfig::default();
    let codes = ConstraintCode::all();
    let mut group = c.benchmark_group("sixteen_model_fits");
    group.sample_size(10);

    group.bench_function(BenchmarkId::new("map", "parallel"), |b| {
        b.iter(|| {
            cwfa::exec::map(codes.clone(), |code| {
                fit(&data, code, 2, 2, &partition, &config).map(|r| r.final_loglik)
            })
        })
    });
    group.bench_function(BenchmarkId::new("map", "sequential"), |b| {
        b.iter(|| {
            cwfa::exec::map_sequential(codes.clone(), |code| {
                fit(&data, code, 2, 2, &partition, &config).map(|r| r.final_loglik)
            })
        })
    });
    group.finish();
}

fn bench_grid_cells(c: &mut Criterion) {
    let (data, _) = benchmark_data();
    let config = FitConfig::default();
    let cells: Vec<(usize, usize)> = vec![(2, 1), (2, 2), (3, 1), (3, 2)];
    let run_cell = |&(g, q): &(usize, usize)| {
        let partition = kmeans_partition(&data, g, config.restarts, 42).unwrap();
        hierarchical_fit_family(&data, g, q, &partition, &config)
            .map(|family| family.len())
            .unwrap_or(0)
    };
    let mut group = c.benchmark_group("grid_cells");
    group.sample_size(10);

    group.bench_function(BenchmarkId::new("map", "parallel"), |b| {
        b.iter(|| cwfa::exec::map(cells.clone(), |cell| run_cell(&cell)))
    });
    group.bench_function(BenchmarkId::new("map", "sequential"), |b| {
        b.iter(|| cwfa::exec::map_sequential(cells.clone(), |cell| run_cell(&cell)))
    });
    group.finish();
}

fn bench_kmeans_restarts(c: &mut Criterion) {
    let (data, _) = benchmark_data();
    let mut group = c.benchmark_group("kmeans_restarts");

    // kmeans_partition runs its restarts through exec::map internally; the
    // sequential comparison drives single restarts through the fallback path.
    group.bench_function(BenchmarkId::new("restarts_64", "parallel"), |b| {
        b.iter(|| kmeans_partition(&data, 3, 64, 7).unwrap())
    });
    group.bench_function(BenchmarkId::new("restarts_64", "sequential"), |b| {
        b.iter(|| {
            let runs = cwfa::exec::map_sequential((0..64u64).collect::<Vec<_>>(), |r| {
                kmeans_partition(&data, 3, 1, 7 + r).unwrap()
            });
            runs.into_iter().next().unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_independent_fits, bench_grid_cells, bench_kmeans_restarts);
criterion_main!(benches);
