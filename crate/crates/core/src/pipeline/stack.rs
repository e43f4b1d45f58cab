//! Stage 2 (per-dataset ensembles) and stage 3 (per-target stacking).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::eval::{mean_ndcg, NDCG_CUTOFF};
use crate::fusion::MarketCombo;
use crate::linear::{combine, optimize_params, GroupedParams};
use crate::market::{CandidateSlate, MarketId};
use crate::order::rank_order;
use crate::ranker::{RankerHyperParams, RankingData};
use crate::recommenders::{fit_als, AlsParams, FactorModel};
use crate::store::InteractionStore;
use crate::table::ScoreTable;

use super::cv::{cv_train_predict, make_cv_plan, tune_ranker, BoostedTrainer, DEFAULT_FOLDS, DEFAULT_SEEDS};
use super::features::{assemble_features, build_table, concat_tables, DatasetView, FeatureSpec, FeatureTable, ScoreBlock, ScoreVariant};
use super::stage1::profile_lengths;

pub const STAGE2_FACTORS: usize = 12;
pub const STAGE3_FACTORS: usize = 16;
pub const LINEAR_UNIT: &str = "linear";

pub fn boosted_unit(variant: ScoreVariant) -> String {
    format!("boosted_{variant}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSettings {
    /// Starting point of the ranker search (and its fixed `n_trees`).
    pub ranker: RankerHyperParams,
    /// Ranker search trials; 0 keeps `ranker` as is.
    pub ranker_budget: usize,
    pub linear_budget: usize,
    pub folds: usize,
    pub seeds: Vec<u64>,
    pub variants: Vec<ScoreVariant>,
    pub seed: u64,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            ranker: RankerHyperParams::default(),
            ranker_budget: 100,
            linear_budget: 100,
            folds: DEFAULT_FOLDS,
            seeds: DEFAULT_SEEDS.to_vec(),
            variants: ScoreVariant::ALL.to_vec(),
            seed: 0,
        }
    }
}

/// Fixed-default implicit ALS used for factor features.
pub fn factor_features_model(store: &InteractionStore, factors: usize, seed: u64) -> Result<FactorModel> {
    let params = AlsParams { factors, reg: 0.01, conf_alpha: 10.0, iterations: 15, seed, ..AlsParams::default() };
    fit_als(store, &params)
}

/// Valid and test score tables aligned with a dataset's slates.
#[derive(Debug, Clone, PartialEq)]
pub struct SlateScores {
    pub valid: ScoreTable,
    pub test: ScoreTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedSummary {
    pub variant: ScoreVariant,
    pub hp: RankerHyperParams,
    /// Mean held-out NDCG@10 over all CV models.
    pub cv_ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Output {
    /// Units `linear` and `boosted_<variant>`; validation rows of the boosted
    /// units are out-of-fold predictions.
    pub scores: SlateScores,
    pub linear: GroupedParams,
    pub linear_ndcg: f64,
    pub boosted: Vec<BoostedSummary>,
}

fn per_slate(flat: &[f64], data: &RankingData) -> Vec<Vec<f64>> {
    (0..data.n_groups()).map(|g| flat[data.group(g)].to_vec()).collect()
}

fn linear_blend(
    valid_units: &ScoreTable,
    test_units: &ScoreTable,
    valid: &[CandidateSlate],
    valid_lens: &[usize],
    test_lens: &[usize],
    budget: usize,
    seed: u64,
) -> Result<(GroupedParams, f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let vn = valid_units.normalized()?;
    let tn = test_units.normalized()?;
    let fit = optimize_params(&vn, valid, valid_lens, budget.max(1), seed)?;
    let v = combine(&vn, &fit.params, valid_lens)?;
    let t = if test_units.n_slates() == 0 { Vec::new() } else { combine(&tn, &fit.params, test_lens)? };
    Ok((fit.params, fit.objective, v, t))
}

fn boosted_cv(
    valid: &FeatureTable,
    test: &FeatureTable,
    settings: &EnsembleSettings,
    seed: u64,
) -> Result<(RankerHyperParams, f64, Vec<f64>, Vec<f64>)> {
    if valid.spec != test.spec {
        return Err(Error::Shape(format!(
            "feature schema differs between CV and test tables ({} vs {})",
            valid.spec.schema_hash(),
            test.spec.schema_hash()
        )));
    }
    let plan = make_cv_plan(valid.data.n_groups(), settings.folds, &settings.seeds)?;
    let hp = if settings.ranker_budget > 0 {
        tune_ranker(&valid.data, &settings.ranker, &plan, settings.ranker_budget, seed)?.0
    } else {
        settings.ranker.clone()
    };
    let out = cv_train_predict(&valid.data, &test.data, &BoostedTrainer { hp: hp.clone() }, &plan)?;
    let cv = out.mean_fold_ndcg();
    Ok((hp, cv, out.oof, out.test))
}

/// Dataset-level ensembles: the grouped linear blend of the normalised
/// stage-1 scores and one cross-validated boosted ranker per variant.
pub fn stage2_dataset(
    store: &InteractionStore,
    valid: &[CandidateSlate],
    test: &[CandidateSlate],
    stage1: &SlateScores,
    recommenders: &[String],
    settings: &EnsembleSettings,
) -> Result<Stage2Output> {
    let valid_lens = profile_lengths(store, valid)?;
    let test_lens = profile_lengths(store, test)?;
    let sv = stage1.valid.select(recommenders)?;
    let st = stage1.test.select(recommenders)?;
    let (linear, linear_ndcg, lv, lt) =
        linear_blend(&sv, &st, valid, &valid_lens, &test_lens, settings.linear_budget, settings.seed)?;
    let mut vt = ScoreTable::new();
    let mut tt = ScoreTable::new();
    vt.push(LINEAR_UNIT, lv);
    tt.push(LINEAR_UNIT, lt);
    let als = factor_features_model(store, STAGE2_FACTORS, settings.seed)?;
    let view = DatasetView::new(store, Some(&als));
    let mut boosted = Vec::new();
    for (k, &variant) in settings.variants.iter().enumerate() {
        let fv = assemble_features(&view, valid, &sv, recommenders, variant)?;
        let ft = assemble_features(&view, test, &st, recommenders, variant)?;
        let (hp, cv_ndcg, oof, pred) = boosted_cv(&fv, &ft, settings, settings.seed.wrapping_add(k as u64 + 1))?;
        vt.push(boosted_unit(variant), per_slate(&oof, &fv.data));
        tt.push(boosted_unit(variant), per_slate(&pred, &ft.data));
        boosted.push(BoostedSummary { variant, hp, cv_ndcg });
    }
    Ok(Stage2Output { scores: SlateScores { valid: vt, test: tt }, linear, linear_ndcg, boosted })
}

/// Everything stage 3 needs from one dataset.
pub struct DatasetOutputs<'a> {
    pub combo: MarketCombo,
    pub store: &'a InteractionStore,
    pub valid_slates: &'a [CandidateSlate],
    pub test_slates: &'a [CandidateSlate],
    pub stage1: &'a SlateScores,
    pub stage2: &'a Stage2Output,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalOutput {
    pub spec: FeatureSpec,
    pub hp: RankerHyperParams,
    pub cv_ndcg: f64,
    /// Out-of-fold boosted predictions on the target's validation slates.
    pub valid: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
    /// Last-level linear blend over datasets, used to break ties.
    pub valid_linear: Vec<Vec<f64>>,
    pub test_linear: Vec<Vec<f64>>,
    pub linear: GroupedParams,
    /// Validation NDCG@10 of the tie-broken out-of-fold predictions.
    pub valid_ndcg: f64,
}

/// Stacks every dataset containing `target`: per-dataset stage-1 scores,
/// stats and stage-2 predictions, plus stats and 16-dimensional factors of
/// the target-only dataset, fed to one cross-validated boosted ranker.
#[allow(clippy::too_many_arguments)]
pub fn final_stack(
    target: MarketId,
    required: &[MarketCombo],
    datasets: &BTreeMap<String, DatasetOutputs<'_>>,
    target_store: &InteractionStore,
    valid: &[CandidateSlate],
    test: &[CandidateSlate],
    recommenders: &[String],
    settings: &EnsembleSettings,
) -> Result<FinalOutput> {
    let needed: Vec<&MarketCombo> = required.iter().filter(|c| c.contains(target)).collect();
    let missing: Vec<String> = needed.iter().map(|c| c.id()).filter(|id| !datasets.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(Error::Missing(format!("stage-2 outputs for {}", missing.join(", "))));
    }
    if needed.is_empty() {
        return Err(Error::Missing(format!("no dataset contains {target}")));
    }
    let mut valid_blocks = Vec::new();
    let mut test_blocks = Vec::new();
    let mut lin_valid = ScoreTable::new();
    let mut lin_test = ScoreTable::new();
    for combo in &needed {
        let id = combo.id();
        let d = &datasets[&id];
        let view = DatasetView::new(d.store, None);
        for (slates, from, s1, s2, out) in [
            (valid, d.valid_slates, &d.stage1.valid, &d.stage2.scores.valid, &mut valid_blocks),
            (test, d.test_slates, &d.stage1.test, &d.stage2.scores.test, &mut test_blocks),
        ] {
            let scores = s1.select(recommenders)?.realign(from, slates)?;
            let s2 = s2.realign(from, slates)?;
            let blocks = [ScoreBlock { prefix: "score", table: &scores }, ScoreBlock { prefix: "stage2", table: &s2 }];
            let mut t = build_table(slates, &blocks, Some(&view))?;
            t.spec = t.spec.prefixed(&id);
            out.push(t);
        }
        let unit = boosted_unit(ScoreVariant::None);
        let pick = |t: &ScoreTable, from: &[CandidateSlate], to: &[CandidateSlate]| -> Result<Vec<Vec<f64>>> {
            let one = t.select(std::slice::from_ref(&unit)).map_err(|_| {
                Error::Missing(format!("{unit} predictions of {id}"))
            })?;
            Ok(one.realign(from, to)?.scores.remove(0))
        };
        lin_valid.push(id.clone(), pick(&d.stage2.scores.valid, d.valid_slates, valid)?);
        lin_test.push(id.clone(), pick(&d.stage2.scores.test, d.test_slates, test)?);
    }
    let als = factor_features_model(target_store, STAGE3_FACTORS, settings.seed)?;
    let target_view = DatasetView::new(target_store, Some(&als));
    for (slates, out) in [(valid, &mut valid_blocks), (test, &mut test_blocks)] {
        let mut t = build_table(slates, &[], Some(&target_view))?;
        t.spec = t.spec.prefixed("target");
        out.push(t);
    }
    let fv = concat_tables(&valid_blocks)?;
    let ft = concat_tables(&test_blocks)?;
    let (hp, cv_ndcg, oof, pred) = boosted_cv(&fv, &ft, settings, settings.seed.wrapping_add(100))?;
    let valid_lens = profile_lengths(target_store, valid)?;
    let test_lens = profile_lengths(target_store, test)?;
    let (linear, _, valid_linear, test_linear) =
        linear_blend(&lin_valid, &lin_test, valid, &valid_lens, &test_lens, settings.linear_budget, settings.seed)?;
    let valid_scores = per_slate(&oof, &fv.data);
    let valid_ndcg = tie_broken_ndcg(valid, &valid_scores, &valid_linear);
    Ok(FinalOutput {
        spec: fv.spec,
        hp,
        cv_ndcg,
        valid: valid_scores,
        test: per_slate(&pred, &ft.data),
        valid_linear,
        test_linear,
        linear,
        valid_ndcg,
    })
}

/// Candidate indices best-first: boosted score, then linear score, then
/// item token.
pub fn tie_break(candidates: &[String], boosted: &[f64], linear: &[f64]) -> Vec<usize> {
    rank_order(boosted, Some(linear), candidates)
}

/// Mean NDCG@10 of `primary` with `secondary` breaking ties.
pub fn tie_broken_ndcg(slates: &[CandidateSlate], primary: &[Vec<f64>], secondary: &[Vec<f64>]) -> f64 {
    let vals: Vec<f64> = slates
        .iter()
        .enumerate()
        .filter_map(|(s, slate)| {
            slate.positive_index().map(|p| {
                crate::eval::slate_ndcg(&slate.candidates, p, &primary[s], Some(&secondary[s]), NDCG_CUTOFF)
            })
        })
        .collect();
    if vals.is_empty() {
        return mean_ndcg(slates, primary, NDCG_CUTOFF);
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_break_uses_linear_then_token() {
        let c: Vec<String> = ["i1", "i2"].iter().map(|s| s.to_string()).collect();
        assert_eq!(tie_break(&c, &[0.5, 0.5], &[0.1, 0.9]), vec![1, 0]);
        assert_eq!(tie_break(&c, &[0.5, 0.5], &[0.3, 0.3]), vec![0, 1]);
        assert_eq!(tie_break(&c, &[0.2, 0.7], &[0.9, 0.1]), vec![1, 0]);
    }
}
