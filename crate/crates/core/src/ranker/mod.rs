//! Gradient-boosted regression trees trained on LambdaRank gradients.
//!
//! Samples are grouped (one group per slate) and stored contiguously;
//! missing feature values are NaN and are routed by a per-node flag.

mod booster;
mod lambda;
mod tree;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tuner::{Config, ParamSpec, SearchSpace};

pub use booster::{fit_ranker, BoostedRanker, FitTrace};
pub use lambda::{lambda_gradients, Gradients};
pub use tree::{Node, RegressionTree};

/// Missing-value marker for feature entries.
pub const MISSING: f64 = f64::NAN;

/// Row-major feature matrix with binary labels, grouped into slates.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingData {
    n_features: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    group_ptr: Vec<usize>,
}

impl RankingData {
    pub fn new(n_features: usize, features: Vec<f64>, labels: Vec<f64>, group_sizes: &[usize]) -> Result<Self> {
        if features.len() != labels.len() * n_features {
            return Err(Error::Shape(format!(
                "{} feature values for {} samples of width {n_features}",
                features.len(),
                labels.len()
            )));
        }
        let mut group_ptr = Vec::with_capacity(group_sizes.len() + 1);
        group_ptr.push(0);
        for &s in group_sizes {
            group_ptr.push(group_ptr.last().unwrap() + s);
        }
        if *group_ptr.last().unwrap() != labels.len() {
            return Err(Error::Shape("group sizes do not cover all samples".into()));
        }
        if labels.iter().any(|&l| l != 0.0 && l != 1.0) {
            return Err(Error::InvalidParam("labels must be 0 or 1".into()));
        }
        if features.iter().any(|x| x.is_infinite()) {
            return Err(Error::NonFinite("ranking feature".into()));
        }
        Ok(Self { n_features, features, labels, group_ptr })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_ptr.len() - 1
    }

    pub fn group(&self, g: usize) -> Range<usize> {
        self.group_ptr[g]..self.group_ptr[g + 1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn value(&self, i: usize, f: usize) -> f64 {
        self.features[i * self.n_features + f]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Groups `groups` (in that order) as a new data set.
    pub fn subset(&self, groups: &[usize]) -> RankingData {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut sizes = Vec::with_capacity(groups.len());
        for &g in groups {
            let r = self.group(g);
            features.extend_from_slice(&self.features[r.start * self.n_features..r.end * self.n_features]);
            labels.extend_from_slice(&self.labels[r.clone()]);
            sizes.push(r.len());
        }
        let mut group_ptr = vec![0];
        for s in sizes {
            group_ptr.push(group_ptr.last().unwrap() + s);
        }
        RankingData { n_features: self.n_features, features, labels, group_ptr }
    }

    /// Mean NDCG@k over groups with a positive; ties ranked by sample order.
    pub fn mean_ndcg(&self, scores: &[f64], k: usize) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        for g in 0..self.n_groups() {
            let r = self.group(g);
            if let Some(v) = lambda::group_ndcg(&scores[r.clone()], &self.labels[r], k) {
                sum += v;
                n += 1;
            }
        }
        if n == 0 { 0.0 } else { sum / n as f64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerHyperParams {
    pub n_trees: usize,
    pub max_leaves: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
    pub feature_subsample: f64,
    pub row_subsample: f64,
    pub l2_leaf_reg: f64,
    pub sigma: f64,
    /// `None` disables early stopping.
    pub early_stopping_patience: Option<usize>,
}

impl Default for RankerHyperParams {
    fn default() -> Self {
        Self {
            n_trees: 1000,
            max_leaves: 31,
            max_depth: 12,
            min_samples_leaf: 20,
            learning_rate: 0.05,
            feature_subsample: 1.0,
            row_subsample: 1.0,
            l2_leaf_reg: 1.0,
            sigma: 1.0,
            early_stopping_patience: Some(50),
        }
    }
}

impl RankerHyperParams {
    pub fn validate(&self) -> Result<()> {
        let rate = |n: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParam(format!("{n} = {v} outside (0, 1]")))
            }
        };
        rate("learning_rate", self.learning_rate)?;
        rate("feature_subsample", self.feature_subsample)?;
        rate("row_subsample", self.row_subsample)?;
        if self.max_leaves < 2 || self.max_depth < 1 || self.min_samples_leaf < 1 {
            return Err(Error::InvalidParam("max_leaves >= 2, max_depth >= 1, min_samples_leaf >= 1".into()));
        }
        if !(self.l2_leaf_reg >= 0.0 && self.l2_leaf_reg.is_finite()) || !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParam("l2_leaf_reg must be >= 0 and sigma > 0".into()));
        }
        if self.early_stopping_patience == Some(0) {
            return Err(Error::InvalidParam("early_stopping_patience must be >= 1".into()));
        }
        Ok(())
    }

    pub fn search_space() -> SearchSpace {
        SearchSpace::new(vec![
            ParamSpec::log_int("max_leaves", 4, 64),
            ParamSpec::log_real("learning_rate", 0.01, 0.3),
            ParamSpec::log_int("min_samples_leaf", 5, 500),
            ParamSpec::real("feature_subsample", 0.3, 1.0),
            ParamSpec::real("row_subsample", 0.5, 1.0),
            ParamSpec::log_real("l2_leaf_reg", 1e-3, 100.0),
        ])
        .expect("static ranges are valid")
    }

    /// `self` overridden by matching tuner config entries.
    pub fn with_config(&self, cfg: &Config) -> Self {
        let mut hp = self.clone();
        let int = |v: f64| v.round().max(1.0) as usize;
        if let Some(v) = cfg.f64("n_trees") { hp.n_trees = v.round().max(0.0) as usize }
        if let Some(v) = cfg.f64("max_leaves") { hp.max_leaves = int(v) }
        if let Some(v) = cfg.f64("max_depth") { hp.max_depth = int(v) }
        if let Some(v) = cfg.f64("min_samples_leaf") { hp.min_samples_leaf = int(v) }
        if let Some(v) = cfg.f64("learning_rate") { hp.learning_rate = v }
        if let Some(v) = cfg.f64("feature_subsample") { hp.feature_subsample = v }
        if let Some(v) = cfg.f64("row_subsample") { hp.row_subsample = v }
        if let Some(v) = cfg.f64("l2_leaf_reg") { hp.l2_leaf_reg = v }
        if let Some(v) = cfg.f64("sigma") { hp.sigma = v }
        hp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(RankingData::new(2, vec![0.0; 6], vec![1.0, 0.0, 0.0], &[3]).is_ok());
        assert!(RankingData::new(2, vec![0.0; 5], vec![1.0, 0.0, 0.0], &[3]).is_err());
        assert!(RankingData::new(2, vec![0.0; 6], vec![1.0, 0.0, 0.0], &[2]).is_err());
        assert!(RankingData::new(2, vec![0.0; 6], vec![2.0, 0.0, 0.0], &[3]).is_err());
    }

    #[test]
    fn subset_keeps_groups() {
        let d = RankingData::new(1, vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![1.0, 0.0, 0.0, 1.0, 0.0], &[2, 3]).unwrap();
        let s = d.subset(&[1]);
        assert_eq!(s.n_groups(), 1);
        assert_eq!(s.row(0), &[3.0]);
        assert_eq!(s.labels(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn hyperparams_validate() {
        assert!(RankerHyperParams::default().validate().is_ok());
        let bad = RankerHyperParams { learning_rate: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = RankerHyperParams { row_subsample: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
