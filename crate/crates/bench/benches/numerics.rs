use std::hint::black_box;

use cavflux::calibration::{fit_arcs, FitOptions};
use cavflux::hermitian::eigh;
use cavflux::map::{ProbeRange, Sweep};
use cavflux::resonator::fit_reflection;
use cavflux::spectrum::simulate_map;
use cavflux::synth::{gen_reflection_trace, NoiseSpec};
use cavflux_bench::{arc_observations, hermitian, perturbed_seed, three_qubit_model};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_eigh(c: &mut Criterion) {
    let mut group = c.benchmark_group("eigh");
    for n in [2, 4, 8, 16] {
        let h = hermitian(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &h, |b, h| b.iter(|| eigh(black_box(h)).unwrap()));
    }
    group.finish();
}

fn bench_simulate_map(c: &mut Criterion) {
    let model = three_qubit_model();
    let sweep = Sweep { coil: 0, start: -5.0, stop: 5.0, points: 201 };
    let probe = ProbeRange { start: 4.0, stop: 7.0, points: 601 };
    c.bench_function("simulate_map_201x601", |b| b.iter(|| simulate_map(&model, &sweep, &probe).unwrap()));
}

fn bench_fit_arcs(c: &mut Criterion) {
    let obs = arc_observations(61);
    let seed = perturbed_seed();
    let options = FitOptions::default();
    let mut group = c.benchmark_group("fit_arcs");
    group.sample_size(20);
    group.bench_function("3x3", |b| b.iter(|| fit_arcs(black_box(&obs), &seed, &options).unwrap()));
    group.finish();
}

fn bench_fit_reflection(c: &mut Criterion) {
    let noise = NoiseSpec::new(1, 0.0, 0.005).unwrap();
    let trace = gen_reflection_trace(7.5905, 1.02e5, 1.0e5, 1.5e-3, 1001, &noise).unwrap();
    c.bench_function("fit_reflection_1001", |b| b.iter(|| fit_reflection(black_box(&trace)).unwrap()));
}

criterion_group!(benches, bench_eigh, bench_simulate_map, bench_fit_arcs, bench_fit_reflection);
criterion_main!(benches);
