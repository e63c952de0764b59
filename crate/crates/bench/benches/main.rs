use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cdekit::control::{build, Scheme};
use cdekit::neuralcde::{backward_fixed_step, cde_field, CdeModel, ModelConfig, OutputMode, Task};
use cdekit::series::{augment, AugmentedSeries};
use cdekit::solver::{integrate, Method, SolveConfig};
use cdekit::synth::{random_irregular_series, IrregularSpec};

fn series(len: usize, missing: f64) -> AugmentedSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = IrregularSpec {
        min_len: len,
        max_len: len,
        channels: 3,
        missing_fraction: missing,
        ..Default::default()
    };
    augment(&random_irregular_series(&mut rng, &spec), true, true)
}

fn bench_build(c: &mut Criterion) {
    let s = series(50, 0.3);
    let mut group = c.benchmark_group("build");
    for scheme in Scheme::ALL {
        group.bench_function(scheme.tag(), |b| {
            b.iter(|| build(scheme, black_box(&s)).unwrap())
        });
    }
    group.finish();
}

fn bench_eval(c: &mut Criterion) {
    let s = series(50, 0.3);
    let path = build(Scheme::HermiteBackward, &s).unwrap();
    let (lo, hi) = path.domain();
    let points: Vec<f64> = (0..256)
        .map(|i| lo + (hi - lo) * i as f64 / 255.0)
        .collect();
    c.bench_function("eval_256_points", |b| {
        b.iter(|| {
            for &q in &points {
                black_box(path.eval(q).unwrap());
            }
        })
    });
    c.bench_function("eval_deriv_256_points", |b| {
        b.iter(|| {
            for &q in &points {
                black_box(path.eval_deriv(q).unwrap());
            }
        })
    });
}

fn bench_solve(c: &mut Criterion) {
    let s = series(20, 0.3);
    let mut group = c.benchmark_group("cde_solve");
    for scheme in [Scheme::HermiteBackward, Scheme::Rectilinear] {
        let path = build(scheme, &s).unwrap();
        let model = CdeModel::new(&ModelConfig::default(), path.out_dim(), 1);
        let z0 = model.zeta.forward(&path.eval(path.domain().0).unwrap());
        let field = cde_field(&model, &path).unwrap();
        let (lo, hi) = path.domain();
        group.bench_function(format!("dopri5_{}", scheme.tag()), |b| {
            let cfg = SolveConfig::default().with_discontinuities(path.discontinuities());
            b.iter(|| integrate(&field, &z0, (lo, hi), &[hi], black_box(&cfg)).unwrap())
        });
        group.bench_function(format!("rk4_{}", scheme.tag()), |b| {
            let cfg =
                SolveConfig::fixed(Method::Rk4, 0.25).with_discontinuities(path.discontinuities());
            b.iter(|| integrate(&field, &z0, (lo, hi), &[hi], black_box(&cfg)).unwrap())
        });
    }
    group.finish();
}

fn bench_gradient(c: &mut Criterion) {
    let s = series(15, 0.2);
    let path = build(Scheme::HermiteBackward, &s).unwrap();
    let model = CdeModel::new(&ModelConfig::default(), path.out_dim(), 1);
    let cfg = SolveConfig::fixed(Method::Rk4, 0.5);
    c.bench_function("backward_rk4_15_knots", |b| {
        b.iter(|| {
            backward_fixed_step(
                &model,
                black_box(&path),
                &cfg,
                &[vec![1.0]],
                OutputMode::Terminal,
                Task::BinaryClassification,
            )
            .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_build,
    bench_eval,
    bench_solve,
    bench_gradient
);
criterion_main!(benches);
