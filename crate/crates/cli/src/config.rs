//! Declarative pipeline configuration, read from a TOML file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use xmarket::fusion::{enumerate_combos, MarketCombo};
use xmarket::pipeline::{EnsembleSettings, ScoreVariant};
use xmarket::ranker::RankerHyperParams;
use xmarket::recommenders::Algorithm;
use xmarket::synth::SynthConfig;
use xmarket::MarketId;

use crate::error::{CliError, Result};

/// Environment variable that replaces `cache_dir`.
pub const CACHE_DIR_ENV: &str = "XMARKET_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// One subdirectory per market (`<data_root>/t1/train.tsv`, ...).
    pub data_root: PathBuf,
    #[serde(default = "default_markets")]
    pub markets: Vec<String>,
    /// `all`, `target:<market>` or `ids:<combo>,<combo>,...`.
    #[serde(default = "default_filter")]
    pub combo_filter: String,
    #[serde(default = "default_recommenders")]
    pub recommenders: Vec<String>,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Base seed for tuners and factor models.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_variants")]
    pub variants: Vec<String>,
    #[serde(default)]
    pub ranker: RankerOverrides,
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
    /// Keep fitted stage-1 models in the cache.
    #[serde(default)]
    pub save_models: bool,
    #[serde(default)]
    pub synth: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    pub stage1: usize,
    pub stage2_linear: usize,
    pub stage2_ranker: usize,
    pub stage3_linear: usize,
    pub stage3_ranker: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { stage1: 50, stage2_linear: 100, stage2_ranker: 100, stage3_linear: 100, stage3_ranker: 100 }
    }
}

/// Fixed ranker settings applied before any search.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankerOverrides {
    pub n_trees: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_leaves: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    /// 0 disables early stopping.
    pub patience: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub users_per_market: usize,
    pub n_items: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { users_per_market: 2000, n_items: 3000, noise: 0.5, seed: 7 }
    }
}

fn default_markets() -> Vec<String> {
    MarketId::ALL.iter().map(|m| m.to_string()).collect()
}

fn default_filter() -> String {
    "all".into()
}

fn default_recommenders() -> Vec<String> {
    Algorithm::ALL.iter().map(|a| a.name().to_string()).collect()
}

fn default_k() -> usize {
    5
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_variants() -> Vec<String> {
    ScoreVariant::ALL.iter().map(|v| v.to_string()).collect()
}

/// Which fused datasets a run touches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ComboFilter {
    All,
    Target(MarketId),
    Ids(Vec<String>),
}

impl FromStr for ComboFilter {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all" {
            return Ok(ComboFilter::All);
        }
        if let Some(m) = s.strip_prefix("target:") {
            let m = m.parse().map_err(|e| CliError::Config(format!("combo filter {s:?}: {e}")))?;
            return Ok(ComboFilter::Target(m));
        }
        if let Some(list) = s.strip_prefix("ids:") {
            let mut ids = Vec::new();
            for id in list.split(',').map(str::trim).filter(|x| !x.is_empty()) {
                let c = MarketCombo::parse(id).map_err(|e| CliError::Config(format!("combo filter {s:?}: {e}")))?;
                ids.push(c.id());
            }
            if ids.is_empty() {
                return Err(CliError::Config(format!("combo filter {s:?} names no combination")));
            }
            return Ok(ComboFilter::Ids(ids));
        }
        Err(CliError::Config(format!("combo filter {s:?}: expected all, target:<market> or ids:<list>")))
    }
}

impl ComboFilter {
    pub fn keeps(&self, combo: &MarketCombo) -> bool {
        match self {
            ComboFilter::All => true,
            ComboFilter::Target(m) => combo.contains(*m),
            ComboFilter::Ids(ids) => ids.contains(&combo.id()),
        }
    }
}

/// Validated view of a [`PipelineConfig`] with parsed enums.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub raw: PipelineConfig,
    pub sources: Vec<MarketId>,
    pub targets: Vec<MarketId>,
    pub combos: Vec<MarketCombo>,
    pub recommenders: Vec<Algorithm>,
    pub variants: Vec<ScoreVariant>,
}

impl PipelineConfig {
    /// Reads a config file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data_root, &mut cfg.output_dir, &mut cfg.cache_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies the environment's cache directory override, if set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(CACHE_DIR_ENV).filter(|d| !d.is_empty()) {
            self.cache_dir = PathBuf::from(dir);
        }
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let bad = |m: String| CliError::Config(m);
        let mut markets = Vec::new();
        for m in &self.markets {
            let id: MarketId = m.parse().map_err(|e| bad(format!("markets: {e}")))?;
            if markets.contains(&id) {
                return Err(bad(format!("markets: {m} listed twice")));
            }
            markets.push(id);
        }
        markets.sort();
        let sources: Vec<MarketId> = markets.iter().copied().filter(|m| !m.is_target()).collect();
        let targets: Vec<MarketId> = markets.iter().copied().filter(|m| m.is_target()).collect();
        if targets.is_empty() {
            return Err(bad("markets: at least one target market is required".into()));
        }
        let filter: ComboFilter = self.combo_filter.parse()?;
        if let ComboFilter::Target(m) = filter {
            if !targets.contains(&m) {
                return Err(bad(format!("combo filter targets {m}, which is not a configured target")));
            }
        }
        let all = enumerate_combos(&sources, &targets);
        if let ComboFilter::Ids(ids) = &filter {
            let unknown: Vec<&String> = ids.iter().filter(|id| !all.iter().any(|c| &c.id() == *id)).collect();
            if !unknown.is_empty() {
                return Err(bad(format!("combo filter names unconfigured combinations: {unknown:?}")));
            }
        }
        let combos: Vec<MarketCombo> = all.into_iter().filter(|c| filter.keeps(c)).collect();
        let mut recommenders = Vec::new();
        for r in &self.recommenders {
            let a: Algorithm = r.parse().map_err(|e| bad(format!("recommenders: {e}")))?;
            if recommenders.contains(&a) {
                return Err(bad(format!("recommenders: {r} listed twice")));
            }
            recommenders.push(a);
        }
        if recommenders.is_empty() {
            return Err(bad("recommenders: list is empty".into()));
        }
        let mut variants = Vec::new();
        for v in &self.variants {
            let s: ScoreVariant = v.parse().map_err(|e| bad(format!("variants: {e}")))?;
            if !variants.contains(&s) {
                variants.push(s);
            }
        }
        if !variants.contains(&ScoreVariant::None) {
            return Err(bad("variants: \"none\" is required (the last level consumes it)".into()));
        }
        if self.k < 2 {
            return Err(bad(format!("k = {} must be at least 2", self.k)));
        }
        if self.seeds.is_empty() || self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(bad("seeds must be a non-empty list of distinct integers".into()));
        }
        self.ranker_base().validate().map_err(|e| bad(format!("ranker: {e}")))?;
        Ok(Resolved { raw: self.clone(), sources, targets, combos, recommenders, variants })
    }

    pub fn ranker_base(&self) -> RankerHyperParams {
        let mut hp = RankerHyperParams::default();
        let o = &self.ranker;
        if let Some(v) = o.n_trees {
            hp.n_trees = v;
        }
        if let Some(v) = o.learning_rate {
            hp.learning_rate = v;
        }
        if let Some(v) = o.max_leaves {
            hp.max_leaves = v;
        }
        if let Some(v) = o.min_samples_leaf {
            hp.min_samples_leaf = v;
        }
        if let Some(v) = o.patience {
            hp.early_stopping_patience = (v > 0).then_some(v);
        }
        hp
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        let mut cfg = SynthConfig::five_markets(s.users_per_market, s.n_items, s.seed);
        cfg.noise = s.noise;
        cfg
    }
}

impl Resolved {
    pub fn stage2_settings(&self) -> EnsembleSettings {
        EnsembleSettings {
            ranker: self.raw.ranker_base(),
            ranker_budget: self.raw.budgets.stage2_ranker,
            linear_budget: self.raw.budgets.stage2_linear,
            folds: self.raw.k,
            seeds: self.raw.seeds.clone(),
            variants: self.variants.clone(),
            seed: self.raw.seed,
        }
    }

    pub fn stage3_settings(&self) -> EnsembleSettings {
        EnsembleSettings {
            ranker_budget: self.raw.budgets.stage3_ranker,
            linear_budget: self.raw.budgets.stage3_linear,
            variants: vec![ScoreVariant::None],
            ..self.stage2_settings()
        }
    }

    /// Configured targets that appear in at least one selected combination.
    pub fn active_targets(&self) -> Vec<MarketId> {
        self.targets.iter().copied().filter(|t| self.combos.iter().any(|c| c.contains(*t))).collect()
    }

    pub fn combos_with(&self, target: MarketId) -> Vec<MarketCombo> {
        self.combos.iter().filter(|c| c.contains(target)).cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> PipelineConfig {
        toml::from_str("data_root = \"d\"\noutput_dir = \"o\"\ncache_dir = \"c\"\n").unwrap()
    }

    #[test]
    fn defaults_cover_every_combination() {
        let r = minimal().resolve().unwrap();
        assert_eq!(r.combos.len(), 24);
        assert_eq!(r.recommenders.len(), Algorithm::ALL.len());
        assert_eq!(r.raw.seeds, vec![1, 2, 3]);
    }

    #[test]
    fn target_filter_keeps_sixteen() {
        let mut c = minimal();
        c.combo_filter = "target:t1".into();
        assert_eq!(c.resolve().unwrap().combos.len(), 16);
    }

    #[test]
    fn ids_filter_is_canonicalised() {
        let mut c = minimal();
        c.combo_filter = "ids:t1, s1-t1".into();
        let ids: Vec<String> = c.resolve().unwrap().combos.iter().map(|c| c.id()).collect();
        assert_eq!(ids, vec!["s1-t1", "t1"]);
    }

    #[test]
    fn rejects_bad_values() {
        let cases: [fn(&mut PipelineConfig); 6] = [
            |c| c.seeds = vec![1, 1],
            |c| c.k = 1,
            |c| c.combo_filter = "target:s1".into(),
            |c| c.recommenders = vec!["nope".into()],
            |c| c.variants = vec!["minmax".into()],
            |c| c.markets = vec!["s1".into()],
        ];
        for f in cases {
            let mut c = minimal();
            f(&mut c);
            assert!(matches!(c.resolve(), Err(CliError::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let r: std::result::Result<PipelineConfig, _> =
            toml::from_str("data_root = \"d\"\noutput_dir = \"o\"\ncache_dir = \"c\"\nbogus = 1\n");
        assert!(r.is_err());
    }

    #[test]
    fn patience_zero_disables_early_stopping() {
        let mut c = minimal();
        c.ranker.patience = Some(0);
        assert_eq!(c.ranker_base().early_stopping_patience, None);
    }
}
