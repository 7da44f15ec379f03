//! One worker against the full pool for the image-sized operators and a
//! full solver sweep. Build with `--no-default-features` to time the plain
//! sequential loops instead.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use twostep::engine::{Family, Stepper};
use twostep::linops::{
    make_haar_undecimated, make_partial_fourier, make_tv_operator, LinearOperator,
};
use twostep::mri::{radial_mask, MriConfig, MriInstance};
use twostep::parallel::{with_workers, worker_count};

const SIZES: [usize; 2] = [128, 256];

fn image(d: usize) -> Vec<f64> {
    (0..d * d).map(|i| ((i * 7919) % 255) as f64).collect()
}

fn worker_settings() -> Vec<usize> {
    let n = worker_count().max(1);
    if n == 1 {
        vec![1]
    } else {
        vec![1, n]
    }
}

fn bench_operator(c: &mut Criterion, name: &str, make: impl Fn(usize) -> Box<dyn LinearOperator>) {
    let mut group = c.benchmark_group(name);
    for d in SIZES {
        let op = make(d);
        let u = image(d);
        let mut out = vec![0.0; op.rows()];
        let w = op.forward(&u);
        let mut back = vec![0.0; op.cols()];
        for workers in worker_settings() {
            group.bench_with_input(
                BenchmarkId::new(format!("forward/{workers}w"), d),
                &d,
                |b, _| {
                    with_workers(workers, || {
                        b.iter(|| op.forward_into(black_box(&u), &mut out))
                    })
                },
            );
            group.bench_with_input(
                BenchmarkId::new(format!("adjoint/{workers}w"), d),
                &d,
                |b, _| {
                    with_workers(workers, || {
                        b.iter(|| op.adjoint_into(black_box(&w), &mut back))
                    })
                },
            );
        }
    }
    group.finish();
}

fn operators(c: &mut Criterion) {
    bench_operator(c, "tv", |d| Box::new(make_tv_operator(d, d).unwrap()));
    bench_operator(c, "haar", |d| {
        Box::new(make_haar_undecimated(d, d).unwrap())
    });
    bench_operator(c, "fourier", |d| {
        let mask = radial_mask(d, d, 17).unwrap();
        Box::new(make_partial_fourier(d, d, &mask).unwrap())
    });
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("2sfppa_sweep");
    group.sample_size(20);
    for d in SIZES {
        let inst = MriInstance::new(MriConfig {
            d1: d,
            d2: d,
            n_lines: 17,
            ..MriConfig::default()
        })
        .unwrap();
        let spec = inst.spec_for(&Family::TwoStepExplicit);
        for workers in worker_settings() {
            group.bench_with_input(BenchmarkId::new(format!("{workers}w"), d), &d, |b, _| {
                let mut state = inst.initial_state();
                let mut stepper = Stepper::new(&inst.problem, &spec).unwrap();
                with_workers(workers, || b.iter(|| stepper.advance(&mut state)))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, operators, sweep);
criterion_main!(benches);
