use std::hint::black_box;

use cd_bench::{decomposition, example, model, rng, similarity_cache};
use cd_core::attribution::{integrated_gradients, shapley_attribution, LogitObjective, ShapleyMode};
use cd_core::decomposer::{frobenius_fit, FitInit};
use cd_core::numerics::svd;
use cd_core::submodular::{lazy_greedy, naive_greedy, SelectionConfig};
use cd_core::Matrix;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn transformer(c: &mut Criterion) {
    let m = model(1);
    let ex = example(&m, 12, 2);
    let prompt = Matrix::random_normal(m.d(), 2, 0.3, &mut rng(3));
    let input = Matrix::random_normal(m.d(), 12, 0.5, &mut rng(4));
    c.bench_function("forward", |b| b.iter(|| m.forward(black_box(&prompt), black_box(&input)).unwrap()));
    c.bench_function("cached logits", |b| {
        let pc = m.prompt_cache(&prompt).unwrap();
        b.iter(|| m.logits(black_box(&pc), black_box(&ex)))
    });
    c.bench_function("prompt grad", |b| {
        let pc = m.prompt_cache(&prompt).unwrap();
        b.iter(|| {
            let st = m.readout(&pc, &ex);
            m.prompt_grad(&pc, &ex, &st, &[1.0, -1.0])
        })
    });
}

fn selection(c: &mut Criterion) {
    let mut group = c.benchmark_group("greedy");
    for n in [50, 200] {
        let cache = similarity_cache(n, 5);
        let cfg = SelectionConfig {
            k: 10,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::new("naive", n), &cache, |b, cache| {
            b.iter(|| naive_greedy(cache, "y", &cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("lazy", n), &cache, |b, cache| {
            b.iter(|| lazy_greedy(cache, "y", &cfg).unwrap())
        });
    }
    group.finish();
}

fn factorization(c: &mut Criterion) {
    let p = Matrix::random_normal(64, 10, 1.0, &mut rng(6));
    c.bench_function("svd 64x10", |b| b.iter(|| svd(black_box(&p)).unwrap()));
    c.bench_function("frobenius fit 64x10 N_c=5", |b| {
        b.iter(|| frobenius_fit(black_box(&p), 5, 1e-10, &FitInit::Svd).unwrap())
    });
}

fn attribution(c: &mut Criterion) {
    let m = model(7);
    let ex = example(&m, 12, 8);
    let dec = decomposition(m.d(), 8, 1, 9);
    let obj = LogitObjective::predicted(&m, &dec, &ex).unwrap();
    c.bench_function("integrated gradients 64 steps", |b| {
        b.iter(|| integrated_gradients(&obj, &dec.q, 64).unwrap())
    });
    c.bench_function("exact shapley 8 concepts", |b| {
        b.iter(|| shapley_attribution(&obj, &dec.q, ShapleyMode::Exact).unwrap())
    });
    c.bench_function("monte carlo shapley 8 concepts 200 samples", |b| {
        b.iter(|| shapley_attribution(&obj, &dec.q, ShapleyMode::MonteCarlo { samples: 200, seed: 1 }).unwrap())
    });
}

criterion_group!(benches, transformer, selection, factorization, attribution);
criterion_main!(benches);
