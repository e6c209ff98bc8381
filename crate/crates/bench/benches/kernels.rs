use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use cutoff_core::rng::stream;
use cutoff_core::simulator::EventKernel;
use cutoff_core::*;

fn eigensolve(c: &mut Criterion) {
    let mut group = c.benchmark_group("eigendecompose");
    group.sample_size(10);
    for n in [32usize, 64, 128] {
        let lap = assemble_laplacian(&build_torus(1, n).unwrap());
        group.bench_with_input(BenchmarkId::new("torus", n), &lap, |b, lap| b.iter(|| eigendecompose(black_box(lap)).unwrap()));
    }
    let lap = assemble_laplacian(&build_sierpinski(4, &[FaceSpec::open(0.5, 0.5, 0.0); 3]).unwrap());
    group.bench_function("sierpinski-4", |b| b.iter(|| eigendecompose(black_box(&lap)).unwrap()));
    group.finish();
}

fn events(c: &mut Criterion) {
    let mut group = c.benchmark_group("event_kernel");
    let steps = 100_000u64;
    group.throughput(Throughput::Elements(steps));
    let open = FaceSpec::open(0.6, 0.3, 0.0);
    for (name, g) in [("torus-256", build_torus(1, 256).unwrap()), ("square-16", build_lattice(2, 16, &[open; 4]).unwrap())] {
        let kernel = EventKernel::new(&g);
        group.bench_function(name, |b| {
            let mut rng = stream(1, 0, 0);
            let mut eta: Vec<u8> = (0..g.num_vertices()).map(|i| (i % 2) as u8).collect();
            b.iter(|| {
                for _ in 0..steps {
                    black_box(kernel.next(&mut eta, &mut rng));
                }
            })
        });
    }
    group.finish();
}

fn pair_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("stationary_correlation");
    group.sample_size(10);
    for n in [16usize, 32, 64] {
        let g = build_segment(n, FaceSpec::open(0.2, 0.8, 0.0), FaceSpec::open(0.8, 0.2, 0.0)).unwrap();
        let rho = solve_stationary_density(&g, None).unwrap().rho_ss;
        group.bench_with_input(BenchmarkId::new("segment", n), &(g, rho), |b, (g, rho)| {
            b.iter(|| stationary_correlation(black_box(g), rho).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, eigensolve, events, pair_solve);
criterion_main!(benches);
