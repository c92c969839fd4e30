use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use phasecert_bench::{certificate_inputs, point_clouds, short_sim, vp_geometry};
use phasecert_core::simulate::{run_reflection, run_synchronous};
use phasecert_core::transport::{w_cost_discrete, Cost};
use phasecert_core::{build_switch, CertificateEngine, Envelope};

fn geometry(c: &mut Criterion) {
    let geom = vp_geometry();
    c.bench_function("gamma over the horizon", |b| {
        b.iter(|| geom.gamma(black_box(8.0)).unwrap())
    });
    c.bench_function("window margin", |b| {
        b.iter(|| geom.window_margin(black_box(2.0)).unwrap())
    });
    c.bench_function("build switch", |b| {
        b.iter(|| build_switch(&geom, black_box(2.0)).unwrap())
    });
}

fn certificates(c: &mut Criterion) {
    let mut group = c.benchmark_group("certificate");
    group.sample_size(10);
    for steps in [80, 400] {
        let inputs = certificate_inputs(steps);
        group.bench_with_input(BenchmarkId::new("engine setup", steps), &inputs, |b, inputs| {
            b.iter(|| CertificateEngine::new(inputs).unwrap())
        });
        let engine = CertificateEngine::new(&inputs).unwrap();
        let grid = inputs.disc.aligned_switches();
        group.bench_with_input(BenchmarkId::new("optimize", steps), &grid, |b, grid| {
            b.iter(|| engine.optimize(grid).unwrap())
        });
    }
    group.finish();
}

fn transport(c: &mut Criterion) {
    let sw = build_switch(&vp_geometry(), 2.0).unwrap();
    let mut group = c.benchmark_group("exact transport");
    for n in [4, 6, 7] {
        let (mu, nu) = point_clouds(n);
        group.bench_with_input(BenchmarkId::new("phi cost", n), &(mu, nu), |b, (mu, nu)| {
            b.iter(|| w_cost_discrete(mu, nu, Cost::Phi(&sw)).unwrap())
        });
    }
    group.finish();
}

fn couplings(c: &mut Criterion) {
    let cfg = short_sim();
    let sw = cfg
        .certified_geometry(Envelope::Constant(0.0))
        .and_then(|g| build_switch(&g, 3.0))
        .unwrap();
    let mut group = c.benchmark_group("coupling");
    group.sample_size(10);
    group.bench_function("synchronous", |b| {
        b.iter(|| run_synchronous(&cfg, 1.0, Some(&sw)).unwrap())
    });
    group.bench_function("reflection", |b| {
        b.iter(|| run_reflection(&cfg, 1.0, Some(&sw)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, geometry, certificates, transport, couplings);
criterion_main!(benches);
