//! Parallel versus single-threaded execution of the heaviest kernels.
//!
//! Each kernel runs inside a one-thread rayon pool and inside the default
//! pool. Building with `--no-default-features` turns every map sequential,
//! which the one-thread numbers approximate.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use xmarket::fusion::{fuse, MarketCombo};
use xmarket::ranker::{fit_ranker, RankerHyperParams, RankingData};
use xmarket::recommenders::{fit, Algorithm, HyperParams};
use xmarket::synth::{generate_synthetic, SynthConfig};
use xmarket::InteractionStore;

fn store() -> InteractionStore {
    let w = generate_synthetic(&SynthConfig::five_markets(300, 600, 3)).unwrap();
    fuse(&MarketCombo::parse("s1-s2-t1").unwrap(), &w.bundles).unwrap().store
}

fn ranking_data() -> RankingData {
    let (groups, size, width) = (60, 100, 12);
    let mut x = Vec::with_capacity(groups * size * width);
    let mut y = Vec::with_capacity(groups * size);
    for g in 0..groups {
        for i in 0..size {
            let pos = i == (g * 13) % size;
            for f in 0..width {
                let noise = ((g * 7919 + i * 104729 + f * 1299709) % 1000) as f64 / 1000.0;
                x.push(if f == 0 && pos { noise + 0.5 } else { noise });
            }
            y.push(if pos { 1.0 } else { 0.0 });
        }
    }
    RankingData::new(width, x, y, &vec![size; groups]).unwrap()
}

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("1-thread", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("all-threads", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn recommenders(c: &mut Criterion) {
    let s = store();
    let hp = HyperParams { factors: 16, iterations: 5, ..Default::default() };
    let mut group = c.benchmark_group("recommender_fit");
    group.sample_size(10);
    for algo in [Algorithm::ItemKnn, Algorithm::Rp3Beta, Algorithm::Slim, Algorithm::Als] {
        for (name, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(algo.name(), name), &algo, |b, &a| {
                b.iter(|| pool.install(|| fit(a, &s, &hp).unwrap()))
            });
        }
    }
    group.finish();
}

fn ranker(c: &mut Criterion) {
    let data = ranking_data();
    let hp = RankerHyperParams { n_trees: 20, early_stopping_patience: None, ..Default::default() };
    let mut group = c.benchmark_group("ranker_fit");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| pool.install(|| fit_ranker(&data, None, &hp, 1).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, recommenders, ranker);
criterion_main!(benches);
