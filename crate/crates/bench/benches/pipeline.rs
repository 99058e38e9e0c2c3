use criterion::{criterion_group, criterion_main, Criterion};
use lpv_bench::{BenchCase, CaseId};
use lpv_core::factor::factor_row;
use lpv_core::{embed, fit_lasso, models, LassoOptions, Selection};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn lasso(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = DMatrix::from_fn(5000, 10, |_, b| if b == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
    let y = DVector::from_fn(5000, |_, _| rng.random_range(-1.0..1.0));
    for gamma in [0.0, 10.0] {
        c.bench_function(&format!("lasso 5000x10 gamma={gamma}"), |b| {
            b.iter(|| fit_lasso(black_box(&x), black_box(&y), &LassoOptions { gamma, ..Default::default() }))
        });
    }
}

fn factorization(c: &mut Criterion) {
    let sys = models::robot2dof().unwrap();
    let f = sys.f[2].clone();
    let x = [0.3, -0.7, 1.5, -2.0];
    c.bench_function("residual row, robot f3", |b| {
        b.iter(|| factor_row(|z| Ok(f.eval(z)?), black_box(&x), &[0, 1, 2, 3]).unwrap())
    });
}

fn pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("embed");
    group.sample_size(10);
    for id in CaseId::ALL {
        let case = BenchCase::new(id);
        let sys = case.system().unwrap();
        group.bench_function(id.to_string(), |b| b.iter(|| embed(&sys, &case.config).unwrap()));
    }
    group.finish();

    let sys = models::robot2dof().unwrap();
    let model = embed(&sys, &BenchCase::new(CaseId::Example2).config)
        .unwrap()
        .lpv(Selection::Count(3))
        .unwrap();
    c.bench_function("eval robot, v=3", |b| {
        b.iter(|| model.eval(black_box(&[0.3, -0.7, 1.5, -2.0]), &[1.0, -1.0]).unwrap())
    });
}

criterion_group!(benches, lasso, factorization, pipeline);
criterion_main!(benches);
