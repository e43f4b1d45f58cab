//! Grouped k-fold cross-validation repeated over seeds, producing
//! out-of-fold predictions for stacking and averaged test predictions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::NDCG_CUTOFF;
use crate::par;
use crate::ranker::{fit_ranker, RankerHyperParams, RankingData};
use crate::tuner::{self, Config, SearchOptions};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];

/// Fold of every group, per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub k: usize,
    pub seeds: Vec<u64>,
    pub folds: Vec<Vec<usize>>,
}

impl CvPlan {
    pub fn n_groups(&self) -> usize {
        self.folds.first().map_or(0, Vec::len)
    }

    /// Group indices of fold `f` under seed position `s`.
    pub fn fold_groups(&self, s: usize, f: usize) -> Vec<usize> {
        (0..self.n_groups()).filter(|&g| self.folds[s][g] == f).collect()
    }

    pub fn train_groups(&self, s: usize, f: usize) -> Vec<usize> {
        (0..self.n_groups()).filter(|&g| self.folds[s][g] != f).collect()
    }

    /// The plan restricted to its first seed.
    pub fn first_seed(&self) -> CvPlan {
        CvPlan { k: self.k, seeds: self.seeds[..1].to_vec(), folds: self.folds[..1].to_vec() }
    }
}

/// Per seed, a uniformly random partition of the groups into `k` folds
/// whose sizes differ by at most one.
pub fn make_cv_plan(n_groups: usize, k: usize, seeds: &[u64]) -> Result<CvPlan> {
    if k < 2 || n_groups < k {
        return Err(Error::TooFewGroups { groups: n_groups, k });
    }
    if seeds.is_empty() {
        return Err(Error::InvalidParam("cross-validation needs at least one seed".into()));
    }
    let folds = seeds
        .iter()
        .map(|&seed| {
            let mut order: Vec<usize> = (0..n_groups).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut fold = vec![0; n_groups];
            for (pos, g) in order.into_iter().enumerate() {
                fold[g] = pos % k;
            }
            fold
        })
        .collect();
    Ok(CvPlan { k, seeds: seeds.to_vec(), folds })
}

/// Which of the `k × seeds` models is being trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSlot {
    pub seed_index: usize,
    pub fold: usize,
    pub seed: u64,
}

/// Something that trains on grouped data and scores other grouped data.
pub trait RankerTrainer: Sync {
    /// Fits on `train` (with `holdout` available for early stopping) and
    /// returns predictions for `holdout` and `test`.
    fn fit_predict(
        &self,
        train: &RankingData,
        holdout: &RankingData,
        test: &RankingData,
        slot: ModelSlot,
    ) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// The in-repo boosted ranker with fixed hyperparameters.
pub struct BoostedTrainer {
    pub hp: RankerHyperParams,
}

impl RankerTrainer for BoostedTrainer {
    fn fit_predict(
        &self,
        train: &RankingData,
        holdout: &RankingData,
        test: &RankingData,
        slot: ModelSlot,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let seed = slot.seed.wrapping_mul(1000).wrapping_add(slot.fold as u64);
        let (model, _) = fit_ranker(train, Some(holdout), &self.hp, seed)?;
        Ok((model.predict(holdout)?, model.predict(test)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutput {
    /// Out-of-fold prediction per validation sample, averaged over seeds.
    pub oof: Vec<f64>,
    /// Test prediction per sample, averaged over every fitted model.
    pub test: Vec<f64>,
    /// Held-out NDCG@10 of each model, `[seed][fold]`.
    pub fold_ndcg: Vec<Vec<f64>>,
}

impl CvOutput {
    pub fn mean_fold_ndcg(&self) -> f64 {
        let all: Vec<f64> = self.fold_ndcg.iter().flatten().copied().collect();
        all.iter().sum::<f64>() / all.len().max(1) as f64
    }
}

/// Trains one model per (seed, fold); each predicts only the fold it did
/// not train on, plus the whole test set.
pub fn cv_train_predict(
    valid: &RankingData,
    test: &RankingData,
    trainer: &dyn RankerTrainer,
    plan: &CvPlan,
) -> Result<CvOutput> {
    if plan.n_groups() != valid.n_groups() {
        return Err(Error::Shape(format!(
            "plan covers {} groups, data has {}",
            plan.n_groups(),
            valid.n_groups()
        )));
    }
    let slots: Vec<ModelSlot> = (0..plan.seeds.len())
        .flat_map(|s| (0..plan.k).map(move |f| (s, f)))
        .map(|(s, f)| ModelSlot { seed_index: s, fold: f, seed: plan.seeds[s] })
        .collect();
    let runs = par::map_slice(&slots, |slot| -> Result<_> {
        let held = plan.fold_groups(slot.seed_index, slot.fold);
        let train = valid.subset(&plan.train_groups(slot.seed_index, slot.fold));
        let holdout = valid.subset(&held);
        let (h, t) = trainer.fit_predict(&train, &holdout, test, *slot)?;
        if h.len() != holdout.n_samples() || t.len() != test.n_samples() {
            return Err(Error::Shape("ranker returned the wrong number of predictions".into()));
        }
        let ndcg = holdout.mean_ndcg(&h, NDCG_CUTOFF);
        Ok((held, h, t, ndcg))
    });
    let n_seeds = plan.seeds.len() as f64;
    let n_models = slots.len() as f64;
    let mut oof = vec![0.0; valid.n_samples()];
    let mut test_sum = vec![0.0; test.n_samples()];
    let mut fold_ndcg = vec![vec![0.0; plan.k]; plan.seeds.len()];
    for (slot, run) in slots.iter().zip(runs) {
        let (held, h, t, ndcg) = run?;
        let mut k = 0;
        for g in held {
            for i in valid.group(g) {
                oof[i] += h[k] / n_seeds;
                k += 1;
            }
        }
        for (acc, v) in test_sum.iter_mut().zip(t) {
            *acc += v;
        }
        fold_ndcg[slot.seed_index][slot.fold] = ndcg;
    }
    let test = test_sum.into_iter().map(|v| v / n_models).collect();
    Ok(CvOutput { oof, test, fold_ndcg })
}

/// Searches ranker hyperparameters by mean held-out NDCG@10 under the
/// plan's first seed, starting from `base`.
pub fn tune_ranker(
    valid: &RankingData,
    base: &RankerHyperParams,
    plan: &CvPlan,
    budget: usize,
    seed: u64,
) -> Result<(RankerHyperParams, f64)> {
    let quick = plan.first_seed();
    let empty = valid.subset(&[]);
    let objective = |cfg: &Config| {
        let trainer = BoostedTrainer { hp: base.with_config(cfg) };
        match cv_train_predict(valid, &empty, &trainer, &quick) {
            Ok(out) => out.mean_fold_ndcg(),
            Err(e) => {
                log::warn!("ranker trial failed: {e}");
                f64::NAN
            }
        }
    };
    let space = RankerHyperParams::search_space();
    let opts = SearchOptions::new(budget, seed);
    let res = tuner::search(&space, objective, &opts)?;
    Ok((base.with_config(&res.best.config), res.best.objective))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_balanced_partitions() {
        let plan = make_cv_plan(10, 5, &[1]).unwrap();
        for f in 0..5 {
            assert_eq!(plan.fold_groups(0, f).len(), 2);
        }
        let plan = make_cv_plan(23, 5, &[4, 5]).unwrap();
        for s in 0..2 {
            let sizes: Vec<usize> = (0..5).map(|f| plan.fold_groups(s, f).len()).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            assert_eq!(sizes.iter().sum::<usize>(), 23);
        }
    }

    #[test]
    fn seeds_determine_plans() {
        assert_eq!(make_cv_plan(30, 5, &[7]).unwrap(), make_cv_plan(30, 5, &[7]).unwrap());
        let p = make_cv_plan(30, 5, &[1, 2, 3]).unwrap();
        assert!(!(p.folds[0] == p.folds[1] && p.folds[1] == p.folds[2]));
        assert!(matches!(make_cv_plan(4, 5, &[1]), Err(Error::TooFewGroups { .. })));
    }
}
