use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmarket::eval::{evaluate_run, mean_ndcg, ndcg_at_k, slate_ndcg, NDCG_CUTOFF};
use xmarket::CandidateSlate;

/// Brute force: full sort by (score desc, secondary desc, token asc), then
/// DCG over the top ten against an ideal DCG of one relevant item.
fn brute_ndcg(tokens: &[String], positive: usize, primary: &[f64], secondary: Option<&[f64]>) -> f64 {
    let mut idx: Vec<usize> = (0..tokens.len()).collect();
    idx.sort_by(|&a, &b| {
        primary[b]
            .partial_cmp(&primary[a])
            .unwrap()
            .then_with(|| match secondary {
                Some(s) => s[b].partial_cmp(&s[a]).unwrap(),
                None => std::cmp::Ordering::Equal,
            })
            .then_with(|| tokens[a].cmp(&tokens[b]))
    });
    let dcg: f64 = idx
        .iter()
        .take(10)
        .enumerate()
        .filter(|(_, &i)| i == positive)
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    dcg
}

fn tokens(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let mut t: Vec<String> = (0..n).map(|i| format!("P{:05}", i * 7 + rng.random_range(0..7))).collect();
    t.shuffle(rng);
    t
}

#[test]
fn matches_brute_force_on_random_slates_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..1000 {
        let n = 100;
        let toks = tokens(&mut rng, n);
        let levels = if trial % 2 == 0 { 4 } else { 1000 };
        let primary: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
        let secondary: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
        let pos = rng.random_range(0..n);
        for sec in [None, Some(secondary.as_slice())] {
            let got = slate_ndcg(&toks, pos, &primary, sec, NDCG_CUTOFF);
            assert!((got - brute_ndcg(&toks, pos, &primary, sec)).abs() <= 1e-12);
        }
        let mut ranked: Vec<usize> = (0..n).collect();
        ranked.shuffle(&mut rng);
        let list: Vec<String> = ranked.iter().map(|&i| toks[i].clone()).collect();
        let r = ranked.iter().position(|&i| i == pos).unwrap() + 1;
        let expect = if r <= 10 { 1.0 / ((r + 1) as f64).log2() } else { 0.0 };
        assert!((ndcg_at_k(&list, &toks[pos], 10).unwrap() - expect).abs() <= 1e-12);
    }
}

#[test]
fn random_scores_hit_the_uniform_rank_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 100;
    let expectation: f64 = (1..=10).map(|r| 1.0 / ((r + 1) as f64).log2()).sum::<f64>() / n as f64;
    let mut slates = Vec::new();
    let mut scores = Vec::new();
    for u in 0..10_000 {
        let toks = tokens(&mut rng, n);
        let pos = toks[rng.random_range(0..n)].clone();
        slates.push(CandidateSlate { user_id: format!("U{u}"), candidates: toks, positive: Some(pos) });
        scores.push((0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>());
    }
    let mean = mean_ndcg(&slates, &scores, NDCG_CUTOFF);
    assert!((mean - expectation).abs() <= 0.005, "{mean} vs {expectation}");
    assert!((mean - 0.04565).abs() <= 0.005);
}

proptest! {
    #[test]
    fn run_metrics_ignore_slate_order(seed in 0u64..500, n_users in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut slates = Vec::new();
        let mut scores = Vec::new();
        let mut qrels = BTreeMap::new();
        let mut lens = BTreeMap::new();
        for u in 0..n_users {
            let toks = tokens(&mut rng, 20);
            let user = format!("U{u}");
            qrels.insert(user.clone(), toks[rng.random_range(0..20)].clone());
            lens.insert(user.clone(), rng.random_range(1..20));
            slates.push(CandidateSlate { user_id: user, candidates: toks, positive: None });
            scores.push((0..20).map(|_| rng.random_range(0..5) as f64).collect::<Vec<f64>>());
        }
        let a = evaluate_run(&slates, &scores, None, &qrels, &lens).unwrap();
        let mut perm: Vec<usize> = (0..n_users).collect();
        perm.shuffle(&mut rng);
        let ps: Vec<_> = perm.iter().map(|&i| slates[i].clone()).collect();
        let pc: Vec<_> = perm.iter().map(|&i| scores[i].clone()).collect();
        let b = evaluate_run(&ps, &pc, None, &qrels, &lens).unwrap();
        prop_assert!((a.overall - b.overall).abs() <= 1e-12);
        prop_assert_eq!(a.group_count, b.group_count);
        for g in 0..4 {
            prop_assert!((a.group_mean[g] - b.group_mean[g]).abs() <= 1e-12);
        }
    }
}
