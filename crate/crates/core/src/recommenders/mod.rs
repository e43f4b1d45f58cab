//! Stage-one collaborative-filtering recommenders.
//!
//! Every algorithm fits into one of four frozen model shapes: item-item
//! weights, user-user neighbourhoods, latent factors or raw popularity.
//! Scoring is permutation-equivariant in the candidate list, and items
//! outside the model's item space score exactly 0.

mod als;
mod codec;
pub mod dense;
mod ease;
mod graph;
mod knn;
mod slim;
pub mod sparse;
mod svd;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::InteractionStore;
use crate::tuner::{Config, ParamSpec, SearchSpace};
pub use als::{als_objective, fit_als, fit_als_traced, AlsParams};
pub use sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    TopPop,
    ItemKnn,
    UserKnn,
    P3Alpha,
    Rp3Beta,
    PureSvd,
    Slim,
    EaseR,
    Als,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::TopPop,
        Algorithm::ItemKnn,
        Algorithm::UserKnn,
        Algorithm::P3Alpha,
        Algorithm::Rp3Beta,
        Algorithm::PureSvd,
        Algorithm::Slim,
        Algorithm::EaseR,
        Algorithm::Als,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::TopPop => "toppop",
            Algorithm::ItemKnn => "itemknn",
            Algorithm::UserKnn => "userknn",
            Algorithm::P3Alpha => "p3alpha",
            Algorithm::Rp3Beta => "rp3beta",
            Algorithm::PureSvd => "puresvd",
            Algorithm::Slim => "slim",
            Algorithm::EaseR => "easer",
            Algorithm::Als => "als",
        }
    }

    /// Default hyperparameter search ranges.
    pub fn search_space(self) -> SearchSpace {
        let top_k = || ParamSpec::log_int("top_k", 5, 800);
        let params = match self {
            Algorithm::TopPop => vec![],
            Algorithm::ItemKnn | Algorithm::UserKnn => {
                vec![top_k(), ParamSpec::real("shrink", 0.0, 1000.0)]
            }
            Algorithm::P3Alpha => vec![top_k(), ParamSpec::real("alpha", 0.0, 2.0)],
            Algorithm::Rp3Beta => vec![
                top_k(),
                ParamSpec::real("alpha", 0.0, 2.0),
                ParamSpec::real("beta", 0.0, 2.0),
            ],
            Algorithm::PureSvd => vec![ParamSpec::log_int("factors", 8, 384)],
            Algorithm::Slim => vec![
                ParamSpec::log_real("l1", 1e-5, 1e-1),
                ParamSpec::log_real("l2", 1e-5, 1e-1),
            ],
            Algorithm::EaseR => vec![ParamSpec::log_real("lambda", 1.0, 1e5)],
            Algorithm::Als => vec![
                ParamSpec::log_int("factors", 8, 384),
                ParamSpec::log_real("reg", 1e-3, 1e1),
                ParamSpec::log_real("conf_alpha", 0.5, 50.0),
                ParamSpec::int("iterations", 5, 30),
            ],
        };
        SearchSpace::new(params).expect("static ranges are valid")
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParam(format!("unknown recommender {s:?}")))
    }
}

/// Hyperparameters of every algorithm; each one reads the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub top_k: usize,
    pub shrink: f64,
    pub alpha: f64,
    pub beta: f64,
    pub l1: f64,
    pub l2: f64,
    pub lambda: f64,
    pub factors: usize,
    pub reg: f64,
    pub conf_alpha: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            top_k: 100,
            shrink: 10.0,
            alpha: 1.0,
            beta: 0.5,
            l1: 1e-3,
            l2: 1e-3,
            lambda: 100.0,
            factors: 32,
            reg: 0.01,
            conf_alpha: 10.0,
            iterations: 15,
            seed: 0,
        }
    }
}

impl HyperParams {
    /// Defaults overridden by any matching entries of a tuner config.
    pub fn from_config(cfg: &Config, seed: u64) -> Self {
        let mut hp = HyperParams { seed, ..Default::default() };
        let int = |v: f64| v.round().max(0.0) as usize;
        if let Some(v) = cfg.f64("top_k") { hp.top_k = int(v) }
        if let Some(v) = cfg.f64("shrink") { hp.shrink = v }
        if let Some(v) = cfg.f64("alpha") { hp.alpha = v }
        if let Some(v) = cfg.f64("beta") { hp.beta = v }
        if let Some(v) = cfg.f64("l1") { hp.l1 = v }
        if let Some(v) = cfg.f64("l2") { hp.l2 = v }
        if let Some(v) = cfg.f64("lambda") { hp.lambda = v }
        if let Some(v) = cfg.f64("factors") { hp.factors = int(v) }
        if let Some(v) = cfg.f64("reg") { hp.reg = v }
        if let Some(v) = cfg.f64("conf_alpha") { hp.conf_alpha = v }
        if let Some(v) = cfg.f64("iterations") { hp.iterations = int(v) }
        hp
    }

    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("shrink", self.shrink),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("l1", self.l1),
            ("l2", self.l2),
            ("lambda", self.lambda),
            ("reg", self.reg),
            ("conf_alpha", self.conf_alpha),
        ];
        if let Some((n, v)) = reals.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParam(format!("{n} = {v}")));
        }
        if self.top_k < 1 {
            return Err(Error::InvalidParam("top_k must be >= 1".into()));
        }
        if self.shrink < 0.0 || self.l1 < 0.0 || self.l2 < 0.0 || self.reg < 0.0 || self.conf_alpha < 0.0 {
            return Err(Error::InvalidParam("shrink, l1, l2, reg, conf_alpha must be >= 0".into()));
        }
        if self.lambda <= 0.0 {
            return Err(Error::InvalidParam("lambda must be > 0".into()));
        }
        if self.factors < 1 {
            return Err(Error::InvalidParam("factors must be >= 1".into()));
        }
        Ok(())
    }
}

/// How a user's profile row is turned into the weights multiplied against
/// item-item weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProfileWeighting {
    /// Raw rating values.
    Ratings,
    /// `(r_ui / Σ_j r_uj)^alpha`, the user→item transition probability.
    Transition { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ItemWeights {
    Sparse(CsrMatrix),
    Dense(Array2<f64>),
}

/// `score(u, j) = Σ_i x_ui · W[i, j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemSimilarityModel {
    pub n_items: usize,
    pub weights: ItemWeights,
    pub profile: ProfileWeighting,
}

impl ItemSimilarityModel {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match &self.weights {
            ItemWeights::Sparse(m) => m.get(i, j),
            ItemWeights::Dense(d) => d[[i, j]],
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match &self.weights {
            ItemWeights::Sparse(m) => m.to_dense(),
            ItemWeights::Dense(d) => d.clone(),
        }
    }

    fn profile_weights(&self, store: &InteractionStore, user: usize) -> (Vec<u32>, Vec<f64>) {
        let (items, ratings) = store.user_row(user);
        let w = match self.profile {
            ProfileWeighting::Ratings => ratings.to_vec(),
            ProfileWeighting::Transition { alpha } => {
                let total: f64 = ratings.iter().sum();
                ratings.iter().map(|r| (r / total).powf(alpha)).collect()
            }
        };
        (items.to_vec(), w)
    }

    fn score(&self, store: &InteractionStore, user: usize, items: &[usize]) -> Vec<f64> {
        let (profile, x) = self.profile_weights(store, user);
        match &self.weights {
            ItemWeights::Sparse(m) => {
                let mut acc = vec![0.0; self.n_items];
                for (&i, &xi) in profile.iter().zip(&x) {
                    if (i as usize) >= m.n_rows {
                        continue;
                    }
                    let (cols, vals) = m.row(i as usize);
                    for (&j, &w) in cols.iter().zip(vals) {
                        acc[j as usize] += xi * w;
                    }
                }
                items
                    .iter()
                    .map(|&j| if j < self.n_items { acc[j] } else { 0.0 })
                    .collect()
            }
            ItemWeights::Dense(d) => items
                .iter()
                .map(|&j| {
                    if j >= self.n_items {
                        return 0.0;
                    }
                    profile
                        .iter()
                        .zip(&x)
                        .filter(|(&i, _)| (i as usize) < d.nrows())
                        .map(|(&i, &xi)| xi * d[[i as usize, j]])
                        .sum()
                })
                .collect(),
        }
    }
}

/// `score(u, j) = Σ_{v ∈ N(u)} sim(u, v) · r_vj`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSimilarityModel {
    pub n_items: usize,
    pub neighbors: Vec<Vec<(u32, f64)>>,
}

impl UserSimilarityModel {
    fn score(&self, store: &InteractionStore, user: usize, items: &[usize]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_items];
        for &(v, s) in &self.neighbors[user] {
            let (its, rs) = store.user_row(v as usize);
            for (&j, &r) in its.iter().zip(rs) {
                if (j as usize) < self.n_items {
                    acc[j as usize] += s * r;
                }
            }
        }
        items
            .iter()
            .map(|&j| if j < self.n_items { acc[j] } else { 0.0 })
            .collect()
    }
}

/// `score(u, j) = U[u] · V[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub user_factors: Array2<f64>,
    pub item_factors: Array2<f64>,
}

impl FactorModel {
    pub fn factors(&self) -> usize {
        self.item_factors.ncols()
    }

    fn score(&self, user: usize, items: &[usize]) -> Vec<f64> {
        let u = self.user_factors.row(user);
        items
            .iter()
            .map(|&j| {
                if j < self.item_factors.nrows() {
                    u.dot(&self.item_factors.row(j))
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Number of distinct raters per item.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityModel {
    pub pop: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Popularity(PopularityModel),
    ItemSimilarity(ItemSimilarityModel),
    UserSimilarity(UserSimilarityModel),
    Factor(FactorModel),
}

impl Model {
    /// One finite score per requested item for a user of `store`.
    pub fn score(&self, store: &InteractionStore, user: usize, items: &[usize]) -> Result<Vec<f64>> {
        if user >= store.n_users() {
            return Err(Error::UnknownUser(user));
        }
        if items.is_empty() {
            return Err(Error::Shape("no items to score".into()));
        }
        let out = match self {
            Model::Popularity(p) => items
                .iter()
                .map(|&j| p.pop.get(j).copied().unwrap_or(0.0))
                .collect(),
            Model::ItemSimilarity(m) => m.score(store, user, items),
            Model::UserSimilarity(m) => {
                if user >= m.neighbors.len() {
                    return Err(Error::UnknownUser(user));
                }
                m.score(store, user, items)
            }
            Model::Factor(m) => {
                if user >= m.user_factors.nrows() {
                    return Err(Error::UnknownUser(user));
                }
                m.score(user, items)
            }
        };
        if out.iter().any(|x: &f64| !x.is_finite()) {
            return Err(Error::NonFinite("recommender score".into()));
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        codec::decode(bytes)
    }
}

/// Trains `algorithm` on `store`. Deterministic given `(store, hp)`.
pub fn fit(algorithm: Algorithm, store: &InteractionStore, hp: &HyperParams) -> Result<Model> {
    hp.validate()?;
    if algorithm != Algorithm::TopPop && store.is_empty() {
        return Err(Error::InvalidParam(format!("{algorithm} needs a non-empty store")));
    }
    Ok(match algorithm {
        Algorithm::TopPop => Model::Popularity(PopularityModel {
            pop: (0..store.n_items()).map(|i| store.popularity(i) as f64).collect(),
        }),
        Algorithm::ItemKnn => Model::ItemSimilarity(knn::item_knn(store, hp.top_k, hp.shrink)),
        Algorithm::UserKnn => Model::UserSimilarity(knn::user_knn(store, hp.top_k, hp.shrink)),
        Algorithm::P3Alpha => Model::ItemSimilarity(graph::rp3(store, hp.alpha, 0.0, hp.top_k)),
        Algorithm::Rp3Beta => Model::ItemSimilarity(graph::rp3(store, hp.alpha, hp.beta, hp.top_k)),
        Algorithm::PureSvd => Model::Factor(svd::pure_svd(store, hp.factors, hp.seed)?),
        Algorithm::Slim => Model::ItemSimilarity(slim::slim(store, hp.l1, hp.l2)?),
        Algorithm::EaseR => Model::ItemSimilarity(ease::ease(store, hp.lambda)?),
        Algorithm::Als => Model::Factor(
            als::fit_als(
                store,
                &AlsParams {
                    factors: hp.factors,
                    reg: hp.reg,
                    conf_alpha: hp.conf_alpha,
                    iterations: hp.iterations,
                    seed: hp.seed,
                    ..AlsParams::default()
                },
            )?,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::RatingTriple;
    use crate::store::build_store;

    pub(crate) fn store(entries: &[(&str, &str, f64)]) -> InteractionStore {
        let t: Vec<_> = entries.iter().map(|&(u, i, r)| RatingTriple::new(u, i, r)).collect();
        build_store(&t, None, None)
    }

    #[test]
    fn toppop_counts_raters() {
        let s = store(&[("u1", "i1", 1.0), ("u2", "i1", 1.0), ("u1", "i2", 1.0)]);
        let m = fit(Algorithm::TopPop, &s, &HyperParams::default()).unwrap();
        assert_eq!(m, Model::Popularity(PopularityModel { pop: vec![2.0, 1.0] }));
        assert_eq!(m.score(&s, 0, &[0, 1, 7]).unwrap(), vec![2.0, 1.0, 0.0]);
        let empty = InteractionStore::empty();
        assert!(fit(Algorithm::TopPop, &empty, &HyperParams::default()).is_ok());
        assert!(fit(Algorithm::ItemKnn, &empty, &HyperParams::default()).is_err());
    }

    #[test]
    fn unknown_user_is_an_error() {
        let s = store(&[("u1", "i1", 1.0)]);
        let m = fit(Algorithm::TopPop, &s, &HyperParams::default()).unwrap();
        assert!(matches!(m.score(&s, 3, &[0]), Err(Error::UnknownUser(3))));
    }

    #[test]
    fn hyperparams_validation() {
        let bad = HyperParams { lambda: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = HyperParams { top_k: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = HyperParams { shrink: f64::NAN, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            let _ = a.search_space();
        }
    }
}
