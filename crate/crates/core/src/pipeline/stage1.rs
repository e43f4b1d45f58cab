//! Stage 1: recommender tuning and slate scoring on one fused dataset.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{mean_ndcg, NDCG_CUTOFF};
use crate::fusion::MarketCombo;
use crate::market::{CandidateSlate, MarketBundle, MarketId};
use crate::recommenders::{fit, Algorithm, HyperParams, Model};
use crate::store::InteractionStore;
use crate::tuner::{self, Config, SearchOptions, SearchSpace};

/// Validation and test slates of the combo's target markets, in canonical
/// market order.
pub fn dataset_slates(
    combo: &MarketCombo,
    bundles: &BTreeMap<MarketId, MarketBundle>,
) -> Result<(Vec<CandidateSlate>, Vec<CandidateSlate>)> {
    let (mut valid, mut test) = (Vec::new(), Vec::new());
    for m in &combo.targets {
        let b = bundles.get(m).ok_or_else(|| Error::Missing(format!("market {m}")))?;
        valid.extend(b.valid_slates.iter().cloned());
        test.extend(b.test_slates.iter().cloned());
    }
    Ok((valid, test))
}

/// Profile length of each slate user in `store`.
pub fn profile_lengths(store: &InteractionStore, slates: &[CandidateSlate]) -> Result<Vec<usize>> {
    slates
        .iter()
        .map(|s| {
            store
                .user_map()
                .get(&s.user_id)
                .map(|u| store.profile_len(u))
                .ok_or_else(|| Error::Missing(format!("slate user {} not in dataset", s.user_id)))
        })
        .collect()
}

/// Scores every candidate of every slate; items unknown to the store score 0.
pub fn score_slates(model: &Model, store: &InteractionStore, slates: &[CandidateSlate]) -> Result<Vec<Vec<f64>>> {
    slates
        .iter()
        .map(|s| {
            let user = store
                .user_map()
                .get(&s.user_id)
                .ok_or_else(|| Error::Missing(format!("slate user {} not in dataset", s.user_id)))?;
            let items: Vec<usize> = s
                .candidates
                .iter()
                .map(|c| store.item_map().get(c).unwrap_or(usize::MAX))
                .collect();
            model.score(store, user, &items)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TunedRecommender {
    pub hp: HyperParams,
    /// Validation NDCG@10 of the chosen configuration.
    pub objective: f64,
    pub trials: usize,
}

/// Picks hyperparameters for `algorithm` by validation NDCG@10. Spaces
/// without parameters are evaluated once.
pub fn tune_recommender(
    algorithm: Algorithm,
    store: &InteractionStore,
    valid: &[CandidateSlate],
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    journal: Option<&Path>,
) -> Result<TunedRecommender> {
    let objective = |cfg: &Config| {
        let hp = HyperParams::from_config(cfg, seed);
        let scores = fit(algorithm, store, &hp).and_then(|m| score_slates(&m, store, valid));
        match scores {
            Ok(s) => mean_ndcg(valid, &s, NDCG_CUTOFF),
            Err(e) => {
                log::warn!("{algorithm} trial failed: {e}");
                f64::NAN
            }
        }
    };
    let budget = if space.dim() == 0 { 1 } else { budget };
    let opts = SearchOptions::new(budget, seed);
    let res = match journal {
        Some(p) => tuner::search_with_journal(space, objective, &opts, p)?,
        None => tuner::search(space, objective, &opts)?,
    };
    if !res.best.objective.is_finite() {
        return Err(Error::InvalidParam(format!("every {algorithm} configuration failed")));
    }
    Ok(TunedRecommender {
        hp: HyperParams::from_config(&res.best.config, seed),
        objective: res.best.objective,
        trials: res.trials.len(),
    })
}
