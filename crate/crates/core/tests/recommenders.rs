mod common;

use common::{max_abs_diff, random_store};
use ndarray::Array2;
use proptest::prelude::*;
use xmarket::recommenders::{als_objective, fit, fit_als_traced, Algorithm, AlsParams, HyperParams};
use xmarket::store::build_store;
use xmarket::{InteractionStore, RatingTriple};

/// Cosine with additive shrink computed from dense columns.
fn dense_cosine(store: &InteractionStore, shrink: f64) -> Array2<f64> {
    let x = store.to_dense();
    let n = x.ncols();
    let mut s = Array2::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let (ca, cb) = (x.column(a), x.column(b));
            let dot = ca.dot(&cb);
            s[[a, b]] = dot / (ca.dot(&ca).sqrt() * cb.dot(&cb).sqrt() + shrink);
        }
    }
    s
}

fn all_items(store: &InteractionStore) -> Vec<usize> {
    (0..store.n_items()).collect()
}

fn unpruned(alpha: f64, beta: f64) -> HyperParams {
    HyperParams { top_k: usize::MAX, alpha, beta, shrink: 0.0, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn item_knn_matches_dense_cosine(seed in 0u64..1000, density in 0.15f64..0.6, shrink in 0.0f64..20.0) {
        let s = random_store(20, 20, density, seed);
        let hp = HyperParams { top_k: usize::MAX, shrink, ..Default::default() };
        let m = fit(Algorithm::ItemKnn, &s, &hp).unwrap();
        let xmarket::recommenders::Model::ItemSimilarity(sim) = &m else { panic!("item model expected") };
        prop_assert!(max_abs_diff(&sim.to_dense(), &dense_cosine(&s, shrink)) <= 1e-10);
        // user scores are profile times similarity
        let want = s.to_dense().dot(&dense_cosine(&s, shrink));
        for u in 0..s.n_users() {
            let got = m.score(&s, u, &all_items(&s)).unwrap();
            for i in 0..s.n_items() {
                prop_assert!((got[i] - want[[u, i]]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn p3alpha_rows_are_distributions(seed in 0u64..1000, density in 0.1f64..0.5) {
        let s = random_store(25, 18, density, seed);
        let m = fit(Algorithm::P3Alpha, &s, &unpruned(1.0, 0.0)).unwrap();
        for u in 0..s.n_users() {
            let total: f64 = m.score(&s, u, &all_items(&s)).unwrap().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-10, "user {} sums to {}", u, total);
        }
    }

    #[test]
    fn rp3beta_with_zero_beta_is_p3alpha(seed in 0u64..1000, alpha in 0.2f64..2.0, k in 2usize..30) {
        let s = random_store(25, 18, 0.3, seed);
        let hp = |b| HyperParams { top_k: k, alpha, beta: b, ..Default::default() };
        let p3 = fit(Algorithm::P3Alpha, &s, &hp(0.7)).unwrap();
        let rp3 = fit(Algorithm::Rp3Beta, &s, &hp(0.0)).unwrap();
        for u in 0..s.n_users() {
            let (a, b) = (p3.score(&s, u, &all_items(&s)).unwrap(), rp3.score(&s, u, &all_items(&s)).unwrap());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    /// Relabelling (reordering first appearance of) users and items leaves
    /// every token-level score unchanged.
    #[test]
    fn scores_are_permutation_equivariant(seed in 0u64..1000, algo_ix in 0usize..5) {
        let algo = [Algorithm::ItemKnn, Algorithm::UserKnn, Algorithm::P3Alpha, Algorithm::Rp3Beta, Algorithm::EaseR][algo_ix];
        let s = random_store(15, 12, 0.35, seed);
        let triples: Vec<RatingTriple> = s
            .entries()
            .map(|(u, i, r)| RatingTriple::new(s.user_map().token(u), s.item_map().token(i), r))
            .collect();
        let shuffled: Vec<RatingTriple> = triples.iter().rev().cloned().collect();
        let p = build_store(&shuffled, None, None);
        let hp = HyperParams { top_k: usize::MAX, lambda: 5.0, ..Default::default() };
        let (m1, m2) = (fit(algo, &s, &hp).unwrap(), fit(algo, &p, &hp).unwrap());
        for u in 0..s.n_users() {
            let tok = s.user_map().token(u);
            let pu = p.user_map().get(tok).unwrap();
            let items: Vec<usize> = (0..s.n_items()).collect();
            let pitems: Vec<usize> = items.iter().map(|&i| p.item_map().get(s.item_map().token(i)).unwrap()).collect();
            let a = m1.score(&s, u, &items).unwrap();
            let b = m2.score(&p, pu, &pitems).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{algo}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn als_objective_never_increases() {
    for seed in 0..4 {
        let s = random_store(40, 30, 0.2, seed);
        let params = AlsParams { factors: 6, iterations: 15, seed, ..AlsParams::default() };
        let (model, trace) = fit_als_traced(&s, &params).unwrap();
        assert_eq!(trace.len(), 15);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "objective rose from {} to {}", w[0], w[1]);
        }
        let end = als_objective(&s, &model.user_factors, &model.item_factors, &params);
        assert!((end - trace.last().unwrap()).abs() <= 1e-9 * end.abs());
    }
}

#[test]
fn cold_items_score_zero_for_every_algorithm() {
    let s = random_store(12, 10, 0.4, 3);
    let hp = HyperParams { factors: 4, lambda: 5.0, ..Default::default() };
    for algo in Algorithm::ALL {
        let m = fit(algo, &s, &hp).unwrap();
        let v = m.score(&s, 0, &[usize::MAX, 0]).unwrap();
        assert_eq!(v[0], 0.0, "{algo}");
        assert!(v[1].is_finite());
    }
}
