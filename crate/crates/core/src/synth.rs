//! Seeded synthetic multi-market worlds in the competition file layout.
//!
//! Items carry latent factors and a bias shared by every market; each
//! market draws its users around its own mean taste vector. A user's items
//! are the top of a Gumbel-perturbed utility ranking: the first `n` form the
//! training profile, the next one is the validation positive and the one
//! after that the test positive. Ratings are noisy utilities centred on the
//! user's mean selected utility, rounded and clamped to 1..5.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{CandidateSlate, MarketBundle, MarketId, RatingTriple, SLATE_SIZE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketShape {
    pub market: MarketId,
    pub users: usize,
    pub min_ratings: usize,
    pub max_ratings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub markets: Vec<MarketShape>,
    pub n_items: usize,
    pub dim: usize,
    /// Scale of the Gumbel noise on item selection and of the Gaussian noise
    /// on ratings; 0 makes preferences exact.
    pub noise: f64,
    /// Per-dimension spread of the market taste means around the origin.
    pub market_spread: f64,
    /// Per-dimension spread of users around their market mean.
    pub user_spread: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Three sources and two sparser targets with `users` users each.
    pub fn five_markets(users: usize, n_items: usize, seed: u64) -> Self {
        let shape = |market: MarketId| {
            let (min_ratings, max_ratings) = if market.is_target() { (3, 12) } else { (8, 30) };
            MarketShape { market, users, min_ratings, max_ratings }
        };
        Self {
            markets: MarketId::ALL.into_iter().map(shape).collect(),
            n_items,
            dim: 16,
            noise: 0.5,
            market_spread: 0.5,
            user_spread: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_items < 2 * SLATE_SIZE {
            return Err(Error::InvalidParam(format!("catalog of {} items is below {}", self.n_items, 2 * SLATE_SIZE)));
        }
        if self.dim == 0 || self.markets.is_empty() {
            return Err(Error::InvalidParam("need at least one market and one latent dimension".into()));
        }
        for m in &self.markets {
            if m.users == 0 || m.min_ratings == 0 || m.min_ratings > m.max_ratings {
                return Err(Error::InvalidParam(format!("bad shape for market {}", m.market)));
            }
            if m.max_ratings + 2 + (SLATE_SIZE - 1) > self.n_items {
                return Err(Error::InvalidParam(format!("market {} cannot sample 99 negatives", m.market)));
            }
        }
        let ok = [self.noise, self.market_spread, self.user_spread].iter().all(|v| v.is_finite() && *v >= 0.0);
        if !ok {
            return Err(Error::InvalidParam("noise and spreads must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Generating parameters, for oracle checks.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    pub item_tokens: Vec<String>,
    pub item_factors: Array2<f64>,
    pub item_bias: Array1<f64>,
    pub user_factors: HashMap<String, Array1<f64>>,
}

impl SynthTruth {
    pub fn utility(&self, user: &str, item: &str) -> Option<f64> {
        let u = self.user_factors.get(user)?;
        let i = self.item_tokens.iter().position(|t| t == item)?;
        Some(u.dot(&self.item_factors.row(i)) + self.item_bias[i])
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub bundles: BTreeMap<MarketId, MarketBundle>,
    pub truth: SynthTruth,
}

impl SynthWorld {
    /// Writes each market into `root/<market>/`.
    pub fn write(&self, root: &Path) -> Result<()> {
        for (m, b) in &self.bundles {
            b.write(&root.join(m.as_str()))?;
        }
        Ok(())
    }
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite standard deviation")
}

/// Iterative k-core of `(user, item)` pairs.
fn k_core(pairs: &[(usize, usize)], k: usize) -> Vec<(usize, usize)> {
    let mut keep: Vec<bool> = vec![true; pairs.len()];
    loop {
        let mut uc: HashMap<usize, usize> = HashMap::new();
        let mut ic: HashMap<usize, usize> = HashMap::new();
        for (p, &(u, i)) in pairs.iter().enumerate() {
            if keep[p] {
                *uc.entry(u).or_default() += 1;
                *ic.entry(i).or_default() += 1;
            }
        }
        let mut changed = false;
        for (p, &(u, i)) in pairs.iter().enumerate() {
            if keep[p] && (uc[&u] < k || ic[&i] < k) {
                keep[p] = false;
                changed = true;
            }
        }
        if !changed {
            return pairs.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| *p).collect();
        }
    }
}

fn slate(user: &str, positive: usize, exclude: &HashSet<usize>, tokens: &[String], rng: &mut ChaCha8Rng) -> CandidateSlate {
    let mut picked = HashSet::new();
    let mut items = vec![positive];
    while items.len() < SLATE_SIZE {
        let j = rng.random_range(0..tokens.len());
        if !exclude.contains(&j) && picked.insert(j) {
            items.push(j);
        }
    }
    items.shuffle(rng);
    CandidateSlate {
        user_id: user.to_string(),
        candidates: items.into_iter().map(|j| tokens[j].clone()).collect(),
        positive: None,
    }
}

/// Builds one bundle per configured market. Deterministic in `cfg.seed`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthWorld> {
    cfg.validate()?;
    let d = cfg.dim;
    let scale = 1.0 / (d as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let item_tokens: Vec<String> = (0..cfg.n_items).map(|i| format!("i{i:05}")).collect();
    let fdist = normal(scale);
    let item_factors = Array2::from_shape_simple_fn((cfg.n_items, d), || fdist.sample(&mut rng));
    let bdist = normal(0.5);
    let item_bias = Array1::from_shape_simple_fn(cfg.n_items, || bdist.sample(&mut rng));
    let gumbel = Gumbel::new(0.0, 1.0).expect("unit Gumbel");
    let rating_noise = normal(1.0);
    let mut bundles = BTreeMap::new();
    let mut user_factors = HashMap::new();
    for (mk, shape) in cfg.markets.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(mk as u64 + 1);
        let mdist = normal(cfg.market_spread);
        let mean = Array1::from_shape_simple_fn(d, || mdist.sample(&mut rng));
        let udist = normal(cfg.user_spread);
        let mut train = Vec::new();
        let mut pairs = Vec::new();
        let (mut valid, mut test) = (Vec::new(), Vec::new());
        let (mut valid_q, mut test_q) = (BTreeMap::new(), BTreeMap::new());
        for u in 0..shape.users {
            let token = format!("{}_u{u:05}", shape.market.as_str());
            let x = &mean + &Array1::from_shape_simple_fn(d, || udist.sample(&mut rng));
            let utility = item_factors.dot(&x) + &item_bias;
            let keys: Vec<f64> = utility.iter().map(|&v| v + cfg.noise * gumbel.sample(&mut rng)).collect();
            let n = rng.random_range(shape.min_ratings..=shape.max_ratings);
            let mut order: Vec<usize> = (0..cfg.n_items).collect();
            order.select_nth_unstable_by(n + 2, |&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
            order.truncate(n + 2);
            order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
            let centre = order[..n].iter().map(|&i| utility[i]).sum::<f64>() / n as f64;
            for &i in &order[..n] {
                let z = utility[i] - centre + cfg.noise * rating_noise.sample(&mut rng);
                let r = (3.5 + z).round().clamp(1.0, 5.0);
                train.push(RatingTriple::new(token.clone(), item_tokens[i].clone(), r));
                pairs.push((u, i));
            }
            let exclude: HashSet<usize> = order.iter().copied().collect();
            let (vp, tp) = (order[n], order[n + 1]);
            valid.push(slate(&token, vp, &exclude, &item_tokens, &mut rng));
            test.push(slate(&token, tp, &exclude, &item_tokens, &mut rng));
            valid_q.insert(token.clone(), item_tokens[vp].clone());
            test_q.insert(token.clone(), item_tokens[tp].clone());
            user_factors.insert(token, x);
        }
        let core: Vec<RatingTriple> = k_core(&pairs, 5)
            .into_iter()
            .map(|(u, i)| RatingTriple::new(format!("{}_u{u:05}", shape.market.as_str()), item_tokens[i].clone(), 1.0))
            .collect();
        let bundle = MarketBundle::new(shape.market, train, core, valid, test, valid_q, Some(test_q))?;
        bundles.insert(shape.market, bundle);
    }
    Ok(SynthWorld { bundles, truth: SynthTruth { item_tokens, item_factors, item_bias, user_factors } })
}
