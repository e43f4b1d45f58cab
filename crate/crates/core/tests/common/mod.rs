#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmarket::store::build_store;
use xmarket::{InteractionStore, RatingTriple};

/// Random store with `users × items` cells, each rated with probability
/// `density` (ratings 1..=5). Every user and item gets at least one rating.
pub fn random_store(users: usize, items: usize, density: f64, seed: u64) -> InteractionStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.random::<f64>() < density || i == u % items || u == i % users {
                let r = rng.random_range(1..=5) as f64;
                t.push(RatingTriple::new(format!("u{u}"), format!("i{i}"), r));
            }
        }
    }
    build_store(&t, None, None)
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
