//! Boosting loop, early stopping, prediction and the text model format.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lambda::lambda_gradients;
use super::tree::{grow, Node, RegressionTree, TreeParams};
use super::{RankerHyperParams, RankingData};
use crate::error::{Error, Result};
use crate::eval::NDCG_CUTOFF;
use crate::par;

const FORMAT_HEADER: &str = "xmarket-ranker 1";

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedRanker {
    pub n_features: usize,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    /// Prediction uses `trees[..best_iteration]`.
    pub best_iteration: usize,
}

/// NDCG@10 after every boosting round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace {
    pub train_ndcg: Vec<f64>,
    pub valid_ndcg: Vec<f64>,
}

impl BoostedRanker {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.learning_rate * self.trees[..self.best_iteration].iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict(&self, data: &RankingData) -> Result<Vec<f64>> {
        if data.n_features() != self.n_features {
            return Err(Error::Shape(format!(
                "ranker expects {} features, got {}",
                self.n_features,
                data.n_features()
            )));
        }
        Ok(par::map_range(data.n_samples(), |i| self.predict_row(data.row(i))))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{FORMAT_HEADER}").unwrap();
        writeln!(s, "n_features {}", self.n_features).unwrap();
        writeln!(s, "learning_rate {}", self.learning_rate).unwrap();
        writeln!(s, "best_iteration {}", self.best_iteration).unwrap();
        writeln!(s, "trees {}", self.trees.len()).unwrap();
        for t in &self.trees {
            writeln!(s, "tree {}", t.nodes.len()).unwrap();
            for n in &t.nodes {
                match *n {
                    Node::Leaf { value } => writeln!(s, "leaf {value}").unwrap(),
                    Node::Split { feature, threshold, missing_left, left, right } => writeln!(
                        s,
                        "split {feature} {threshold} {} {left} {right}",
                        u8::from(missing_left)
                    )
                    .unwrap(),
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Decode(format!("ranker text: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some(FORMAT_HEADER) {
            return Err(bad("unknown header"));
        }
        let field = |lines: &mut std::str::Lines<'_>, name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            line.strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| bad(&format!("expected {name}")))
        };
        let num = |s: String| s.parse::<usize>().map_err(|_| bad("bad integer"));
        let n_features = num(field(&mut lines, "n_features")?)?;
        let learning_rate: f64 = field(&mut lines, "learning_rate")?.parse().map_err(|_| bad("bad learning rate"))?;
        let best_iteration = num(field(&mut lines, "best_iteration")?)?;
        let n_trees = num(field(&mut lines, "trees")?)?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes = num(field(&mut lines, "tree")?)?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let line = lines.next().ok_or_else(|| bad("truncated"))?;
                let parts: Vec<&str> = line.split(' ').collect();
                let node = match parts.as_slice() {
                    ["leaf", v] => Node::Leaf { value: v.parse().map_err(|_| bad("bad leaf"))? },
                    ["split", f, t, m, l, r] => {
                        let idx = |s: &str| s.parse::<usize>().map_err(|_| bad("bad split"));
                        Node::Split {
                            feature: idx(f)?,
                            threshold: t.parse().map_err(|_| bad("bad threshold"))?,
                            missing_left: *m == "1",
                            left: idx(l)?,
                            right: idx(r)?,
                        }
                    }
                    _ => return Err(bad(line)),
                };
                nodes.push(node);
            }
            let ok = nodes.iter().enumerate().all(|(k, n)| match *n {
                Node::Split { feature, left, right, .. } => {
                    feature < n_features && left > k && right > k && left < n_nodes && right < n_nodes
                }
                Node::Leaf { .. } => true,
            });
            if nodes.is_empty() || !ok {
                return Err(bad("inconsistent tree"));
            }
            trees.push(RegressionTree { nodes });
        }
        if best_iteration > trees.len() || lines.next().is_some() {
            return Err(bad("inconsistent trailer"));
        }
        Ok(Self { n_features, learning_rate, trees, best_iteration })
    }
}

/// Trains a ranker on `train`, early-stopping on `valid` NDCG@10 when a
/// patience is set. Deterministic for a fixed `seed`.
pub fn fit_ranker(
    train: &RankingData,
    valid: Option<&RankingData>,
    hp: &RankerHyperParams,
    seed: u64,
) -> Result<(BoostedRanker, FitTrace)> {
    hp.validate()?;
    let n_features = train.n_features();
    if let Some(v) = valid {
        if v.n_features() != n_features {
            return Err(Error::Shape("train and valid feature widths differ".into()));
        }
    }
    let valid = valid.filter(|v| v.n_samples() > 0);
    if hp.early_stopping_patience.is_some() && valid.is_none() && hp.n_trees > 0 {
        return Err(Error::InvalidParam("early stopping needs a non-empty validation set".into()));
    }
    let n = train.n_samples();
    let presorted: Vec<Vec<u32>> = par::map_range(n_features, |f| {
        let mut rows: Vec<u32> = (0..n as u32).filter(|&r| !train.value(r as usize, f).is_nan()).collect();
        rows.sort_by(|&a, &b| train.value(a as usize, f).total_cmp(&train.value(b as usize, f)).then(a.cmp(&b)));
        rows
    });
    let params = TreeParams {
        max_leaves: hp.max_leaves,
        max_depth: hp.max_depth,
        min_samples_leaf: hp.min_samples_leaf,
        l2: hp.l2_leaf_reg,
    };
    let n_feat_used = ((hp.feature_subsample * n_features as f64).ceil() as usize).clamp(1.min(n_features), n_features);
    let mut ranker = BoostedRanker { n_features, learning_rate: hp.learning_rate, trees: Vec::new(), best_iteration: 0 };
    let mut trace = FitTrace::default();
    let mut train_scores = vec![0.0; n];
    let mut valid_scores = vec![0.0; valid.map_or(0, |v| v.n_samples())];
    let mut best = f64::NEG_INFINITY;
    let mut in_sample = vec![true; n];
    for round in 0..hp.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(round as u64);
        let grads = lambda_gradients(train, &train_scores, hp.sigma, NDCG_CUTOFF);
        let rows: Vec<u32> = if hp.row_subsample < 1.0 {
            for flag in in_sample.iter_mut() {
                *flag = rng.random::<f64>() < hp.row_subsample;
            }
            (0..n as u32).filter(|&r| in_sample[r as usize]).collect()
        } else {
            (0..n as u32).collect()
        };
        let mut features: Vec<usize> = if n_feat_used < n_features {
            sample(&mut rng, n_features, n_feat_used).into_vec()
        } else {
            (0..n_features).collect()
        };
        features.sort_unstable();
        let tree = grow(train, &grads.grad, &grads.hess, rows, &features, &presorted, &in_sample, &params);
        let step = par::map_range(n, |i| tree.predict(train.row(i)));
        for (s, d) in train_scores.iter_mut().zip(step) {
            *s += hp.learning_rate * d;
        }
        trace.train_ndcg.push(train.mean_ndcg(&train_scores, NDCG_CUTOFF));
        ranker.trees.push(tree);
        match valid {
            Some(v) => {
                let tree = ranker.trees.last().unwrap();
                let step = par::map_range(v.n_samples(), |i| tree.predict(v.row(i)));
                for (s, d) in valid_scores.iter_mut().zip(step) {
                    *s += hp.learning_rate * d;
                }
                let ndcg = v.mean_ndcg(&valid_scores, NDCG_CUTOFF);
                trace.valid_ndcg.push(ndcg);
                if ndcg > best {
                    best = ndcg;
                    ranker.best_iteration = round + 1;
                }
                if let Some(p) = hp.early_stopping_patience {
                    if round + 1 - ranker.best_iteration >= p {
                        break;
                    }
                }
            }
            None => ranker.best_iteration = round + 1,
        }
    }
    Ok((ranker, trace))
}
