use std::sync::Mutex;

use xmarket::pipeline::{cv_train_predict, make_cv_plan, ModelSlot, RankerTrainer};
use xmarket::ranker::RankingData;
use xmarket::Result;

/// Groups carry their own index as the only feature.
fn indexed_groups(n_groups: usize, size: usize) -> RankingData {
    let mut f = Vec::new();
    let mut l = Vec::new();
    for g in 0..n_groups {
        for k in 0..size {
            f.push(g as f64);
            l.push(if k == 0 { 1.0 } else { 0.0 });
        }
    }
    RankingData::new(1, f, l, &vec![size; n_groups]).unwrap()
}

fn slot_code(s: ModelSlot) -> f64 {
    (100 * s.seed_index + s.fold) as f64
}

/// Predicts constants identifying the model; records which groups it saw.
struct Stub {
    seen: Mutex<Vec<(ModelSlot, Vec<usize>, Vec<usize>)>>,
}

fn groups_of(d: &RankingData) -> Vec<usize> {
    let mut g: Vec<usize> = (0..d.n_samples()).map(|i| d.value(i, 0) as usize).collect();
    g.dedup();
    g
}

impl RankerTrainer for Stub {
    fn fit_predict(&self, train: &RankingData, holdout: &RankingData, test: &RankingData, slot: ModelSlot) -> Result<(Vec<f64>, Vec<f64>)> {
        self.seen.lock().unwrap().push((slot, groups_of(train), groups_of(holdout)));
        let c = slot_code(slot);
        Ok((vec![c; holdout.n_samples()], (0..test.n_samples()).map(|i| c + i as f64 * 1e-3).collect()))
    }
}

#[test]
fn out_of_fold_predictions_and_exact_test_mean() {
    let (n_groups, size) = (23, 4);
    let valid = indexed_groups(n_groups, size);
    let test = indexed_groups(7, size);
    let plan = make_cv_plan(n_groups, 5, &[1, 2, 3]).unwrap();
    let stub = Stub { seen: Mutex::new(Vec::new()) };
    let out = cv_train_predict(&valid, &test, &stub, &plan).unwrap();

    let seen = stub.seen.into_inner().unwrap();
    assert_eq!(seen.len(), 15);
    for (slot, train, held) in &seen {
        assert!(train.iter().all(|g| !held.contains(g)));
        assert_eq!(train.len() + held.len(), n_groups);
        assert!(held.iter().all(|&g| plan.folds[slot.seed_index][g] == slot.fold));
    }
    for g in 0..n_groups {
        let expect: f64 = (0..3).map(|s| (100 * s + plan.folds[s][g]) as f64 / 3.0).sum();
        for i in g * size..(g + 1) * size {
            assert!((out.oof[i] - expect).abs() <= 1e-12);
        }
    }
    for i in 0..test.n_samples() {
        let expect: f64 = (0..3)
            .flat_map(|s| (0..5).map(move |f| (100 * s + f) as f64 + i as f64 * 1e-3))
            .sum::<f64>()
            / 15.0;
        assert!((out.test[i] - expect).abs() <= 1e-12);
    }
}

#[test]
fn folds_are_balanced_and_seeded() {
    let p = make_cv_plan(37, 5, &[1, 2]).unwrap();
    for s in 0..2 {
        let sizes: Vec<usize> = (0..5).map(|f| p.fold_groups(s, f).len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
    assert_ne!(p.folds[0], p.folds[1]);
    assert_eq!(p, make_cv_plan(37, 5, &[1, 2]).unwrap());
    assert!(make_cv_plan(3, 5, &[1]).is_err());
}
