//! The stage commands. Each one checks that its upstream artifacts are
//! present under the expected keys, then computes whatever is stale.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use xmarket::eval::{evaluate_run, EvalReport};
use xmarket::fusion::{fuse, FusedDataset, MarketCombo};
use xmarket::io::{atomic_write, hash_file, write_submission, ScoredSlate};
use xmarket::linear::GroupedParams;
use xmarket::market::{TEST_RUN_FILE, TRAIN_5CORE_FILE, TRAIN_FILE, VALID_QREL_FILE, VALID_RUN_FILE};
use xmarket::par;
use xmarket::pipeline::stack::{BoostedSummary, DatasetOutputs};
use xmarket::pipeline::stage1::TunedRecommender;
use xmarket::pipeline::{
    dataset_slates, final_stack, profile_lengths, score_slates, stage2_dataset, tune_recommender, EnsembleSettings,
    SlateScores, Stage2Output,
};
use xmarket::ranker::RankerHyperParams;
use xmarket::recommenders::{fit, Algorithm, HyperParams};
use xmarket::synth::generate_synthetic;
use xmarket::table::ScoreTable;
use xmarket::{CandidateSlate, InteractionStore, MarketBundle, MarketId};

use crate::cache::{key_of, Cache, Outcome};
use crate::config::{PipelineConfig, Resolved};
use crate::error::{CliError, Result};

const KEY_VERSION: &str = concat!("xmarket-cli/", env!("CARGO_PKG_VERSION"));
const DATASETS: &str = "datasets";
const STAGE1: &str = "stage1";
const STAGE2: &str = "stage2";
const STAGE3: &str = "stage3";
const VALID_TABLE: &str = "valid.tsv";
const TEST_TABLE: &str = "test.tsv";
const LINEAR_PARAMS: &str = "linear.tsv";
const SUMMARY: &str = "summary.json";
const FINAL_UNIT: &str = "final";
const LINEAR_UNIT: &str = "linear";
const DATASET_FILES: [&str; 3] = ["users.tsv", "items.tsv", "ratings.tsv"];

/// Hit/compute counts of one stage command.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageCounts {
    pub hits: usize,
    pub computed: usize,
}

impl StageCounts {
    fn add(&mut self, o: Outcome) {
        match o {
            Outcome::Hit => self.hits += 1,
            Outcome::Computed => self.computed += 1,
        }
    }
}

impl std::fmt::Display for StageCounts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} cached, {} computed", self.hits, self.computed)
    }
}

/// Input hashes of one market directory.
#[derive(Debug, Clone)]
struct MarketHashes {
    /// Training files (`train.tsv`, `train_5core.tsv`).
    train: String,
    /// Slate files (`valid_run.tsv`, `valid_qrel.tsv`, `test_run.tsv`).
    slates: String,
}

/// Resolved configuration plus lazily loaded inputs.
pub struct Context {
    pub cfg: Resolved,
    pub cache: Cache,
    hashes: BTreeMap<MarketId, MarketHashes>,
    bundles: OnceLock<BTreeMap<MarketId, MarketBundle>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Stage1Summary {
    hp: HyperParams,
    objective: f64,
    trials: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoostedEntry {
    variant: String,
    hp: RankerHyperParams,
    cv_ndcg: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Stage2Summary {
    linear_ndcg: f64,
    boosted: Vec<BoostedEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Stage3Summary {
    pub features: Vec<String>,
    pub schema_hash: String,
    pub hp: RankerHyperParams,
    pub cv_ndcg: f64,
    pub valid_ndcg: f64,
}

fn market_dir(cfg: &PipelineConfig, m: MarketId) -> PathBuf {
    cfg.data_root.join(m.as_str())
}

fn hash_inputs(dir: &Path, names: &[&str]) -> Result<String> {
    let mut parts = Vec::new();
    for name in names {
        let p = dir.join(name);
        if !p.is_file() {
            return Err(CliError::MissingInput(p));
        }
        parts.push(hash_file(&p)?);
    }
    let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    Ok(key_of(&refs))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    atomic_write(path, text.as_bytes())?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Core(xmarket::Error::Decode(format!("{}: {e}", path.display()))))
}

fn settings_fingerprint(s: &EnsembleSettings) -> String {
    format!("{s:?}")
}

impl Context {
    /// Resolves `cfg` and hashes every configured market's input files.
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        let resolved = cfg.resolve()?;
        let mut hashes = BTreeMap::new();
        for &m in resolved.sources.iter().chain(&resolved.targets) {
            let dir = market_dir(cfg, m);
            let train = hash_inputs(&dir, &[TRAIN_FILE, TRAIN_5CORE_FILE])?;
            let slates = hash_inputs(&dir, &[VALID_RUN_FILE, VALID_QREL_FILE, TEST_RUN_FILE])?;
            hashes.insert(m, MarketHashes { train, slates });
        }
        Ok(Self { cache: Cache::new(&cfg.cache_dir), cfg: resolved, hashes, bundles: OnceLock::new() })
    }

    pub fn bundles(&self) -> Result<&BTreeMap<MarketId, MarketBundle>> {
        if let Some(b) = self.bundles.get() {
            return Ok(b);
        }
        let markets: Vec<MarketId> = self.hashes.keys().copied().collect();
        let loaded = par::try_map_range(markets.len(), |k| {
            let m = markets[k];
            MarketBundle::load(&market_dir(&self.cfg.raw, m), m).map(|b| (m, b))
        })?;
        let _ = self.bundles.set(loaded.into_iter().collect());
        Ok(self.bundles.get().expect("just set"))
    }

    fn dataset_key(&self, combo: &MarketCombo) -> String {
        let mut parts = vec![KEY_VERSION.to_string(), "dataset".into(), combo.id()];
        parts.extend(combo.members().iter().map(|m| self.hashes[m].train.clone()));
        key_of(&parts.iter().map(String::as_str).collect::<Vec<_>>())
    }

    fn slate_key(&self, combo: &MarketCombo) -> String {
        let parts: Vec<&str> = combo.targets.iter().map(|m| self.hashes[m].slates.as_str()).collect();
        key_of(&parts)
    }

    fn stage1_key(&self, combo: &MarketCombo, algo: Algorithm) -> String {
        let budget = self.cfg.raw.budgets.stage1.to_string();
        let seed = self.cfg.raw.seed.to_string();
        key_of(&[KEY_VERSION, STAGE1, &self.dataset_key(combo), &self.slate_key(combo), algo.name(), &budget, &seed])
    }

    fn stage2_key(&self, combo: &MarketCombo) -> String {
        let mut parts = vec![KEY_VERSION.to_string(), STAGE2.into(), self.dataset_key(combo), self.slate_key(combo)];
        parts.extend(self.cfg.recommenders.iter().map(|&a| self.stage1_key(combo, a)));
        parts.push(settings_fingerprint(&self.cfg.stage2_settings()));
        key_of(&parts.iter().map(String::as_str).collect::<Vec<_>>())
    }

    fn stage3_key(&self, target: MarketId) -> String {
        let mut parts = vec![
            KEY_VERSION.to_string(),
            STAGE3.into(),
            target.to_string(),
            self.hashes[&target].train.clone(),
            self.hashes[&target].slates.clone(),
        ];
        parts.extend(self.cfg.combos_with(target).iter().map(|c| self.stage2_key(c)));
        parts.push(settings_fingerprint(&self.cfg.stage3_settings()));
        key_of(&parts.iter().map(String::as_str).collect::<Vec<_>>())
    }

    fn dataset_dir(&self, combo: &MarketCombo) -> PathBuf {
        self.cache.dir(DATASETS, &combo.id())
    }

    fn stage1_dir(&self, combo: &MarketCombo, algo: Algorithm) -> PathBuf {
        self.cache.dir(STAGE1, &combo.id()).join(algo.name())
    }

    fn stage2_dir(&self, combo: &MarketCombo) -> PathBuf {
        self.cache.dir(STAGE2, &combo.id())
    }

    pub fn stage3_dir(&self, target: MarketId) -> PathBuf {
        self.cache.dir(STAGE3, target.as_str())
    }

    fn dataset_fresh(&self, combo: &MarketCombo) -> bool {
        self.cache.is_fresh(&self.dataset_dir(combo), &self.dataset_key(combo), &DATASET_FILES)
    }

    fn stage1_fresh(&self, combo: &MarketCombo, algo: Algorithm) -> bool {
        self.cache.is_fresh(&self.stage1_dir(combo, algo), &self.stage1_key(combo, algo), &[VALID_TABLE, TEST_TABLE, SUMMARY])
    }

    fn stage2_fresh(&self, combo: &MarketCombo) -> bool {
        self.cache.is_fresh(&self.stage2_dir(combo), &self.stage2_key(combo), &[VALID_TABLE, TEST_TABLE, LINEAR_PARAMS, SUMMARY])
    }

    fn stage3_fresh(&self, target: MarketId) -> bool {
        self.cache.is_fresh(&self.stage3_dir(target), &self.stage3_key(target), &[VALID_TABLE, TEST_TABLE, LINEAR_PARAMS, SUMMARY])
    }

    fn load_store(&self, combo: &MarketCombo) -> Result<InteractionStore> {
        Ok(FusedDataset::load(&self.dataset_dir(combo), combo)?.store)
    }

    fn slates(&self, combo: &MarketCombo) -> Result<(Vec<CandidateSlate>, Vec<CandidateSlate>)> {
        Ok(dataset_slates(combo, self.bundles()?)?)
    }

    fn load_stage1(&self, combo: &MarketCombo, valid: &[CandidateSlate], test: &[CandidateSlate]) -> Result<SlateScores> {
        let mut out = SlateScores { valid: ScoreTable::new(), test: ScoreTable::new() };
        for &a in &self.cfg.recommenders {
            let dir = self.stage1_dir(combo, a);
            for (file, slates, table) in [(VALID_TABLE, valid, &mut out.valid), (TEST_TABLE, test, &mut out.test)] {
                let t = ScoreTable::from_tsv(&read_text(&dir.join(file))?, slates)?;
                for (u, s) in t.units.into_iter().zip(t.scores) {
                    table.push(u, s);
                }
            }
        }
        Ok(out)
    }

    fn load_stage2(&self, combo: &MarketCombo, valid: &[CandidateSlate], test: &[CandidateSlate]) -> Result<Stage2Output> {
        let dir = self.stage2_dir(combo);
        let summary: Stage2Summary = read_json(&dir.join(SUMMARY))?;
        let boosted = summary
            .boosted
            .into_iter()
            .map(|b| Ok(BoostedSummary { variant: b.variant.parse()?, hp: b.hp, cv_ndcg: b.cv_ndcg }))
            .collect::<Result<Vec<_>, xmarket::Error>>()?;
        Ok(Stage2Output {
            scores: SlateScores {
                valid: ScoreTable::from_tsv(&read_text(&dir.join(VALID_TABLE))?, valid)?,
                test: ScoreTable::from_tsv(&read_text(&dir.join(TEST_TABLE))?, test)?,
            },
            linear: GroupedParams::from_tsv(&read_text(&dir.join(LINEAR_PARAMS))?)?,
            linear_ndcg: summary.linear_ndcg,
            boosted,
        })
    }

    /// Store of the target-only dataset: the cached one when it is fresh,
    /// otherwise fused on the spot.
    fn target_store(&self, target: MarketId) -> Result<InteractionStore> {
        let combo = MarketCombo::new(vec![], vec![target])?;
        if self.dataset_fresh(&combo) {
            return self.load_store(&combo);
        }
        Ok(fuse(&combo, self.bundles()?)?.store)
    }

    fn recommender_names(&self) -> Vec<String> {
        self.cfg.recommenders.iter().map(|a| a.name().to_string()).collect()
    }
}

fn require(missing: Vec<String>) -> Result<()> {
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::MissingDependency(missing))
    }
}

/// Fuses and caches every selected combination.
pub fn cmd_prepare(ctx: &Context) -> Result<StageCounts> {
    let combos = &ctx.cfg.combos;
    if combos.iter().any(|c| !ctx.dataset_fresh(c)) {
        ctx.bundles()?;
    }
    let outcomes = par::try_map_range(combos.len(), |k| -> Result<Outcome> {
        let combo = &combos[k];
        let (dir, key) = (ctx.dataset_dir(combo), ctx.dataset_key(combo));
        let t = Instant::now();
        let outcome = if ctx.dataset_fresh(combo) {
            Outcome::Hit
        } else {
            ctx.cache.begin(&dir)?;
            fuse(combo, ctx.bundles()?)?.save(&dir)?;
            ctx.cache.commit(&dir, &key)?;
            Outcome::Computed
        };
        ctx.cache.record("prepare", &combo.id(), &key, outcome, t.elapsed(), None)?;
        Ok(outcome)
    })?;
    let mut counts = StageCounts::default();
    outcomes.into_iter().for_each(|o| counts.add(o));
    Ok(counts)
}

fn run_stage1(ctx: &Context, combo: &MarketCombo, algo: Algorithm, store: &InteractionStore, valid: &[CandidateSlate], test: &[CandidateSlate]) -> Result<f64> {
    let dir = ctx.stage1_dir(combo, algo);
    let key = ctx.stage1_key(combo, algo);
    ctx.cache.begin(&dir)?;
    let journal = dir.join(format!("trials-{}.tsv", &key[..16]));
    let seed = ctx.cfg.raw.seed;
    let TunedRecommender { hp, objective, trials } =
        tune_recommender(algo, store, valid, &algo.search_space(), ctx.cfg.raw.budgets.stage1, seed, Some(&journal))?;
    let model = fit(algo, store, &hp)?;
    for (file, slates) in [(VALID_TABLE, valid), (TEST_TABLE, test)] {
        let mut t = ScoreTable::new();
        t.push(algo.name(), score_slates(&model, store, slates)?);
        atomic_write(&dir.join(file), t.to_tsv(slates)?.as_bytes())?;
    }
    if ctx.cfg.raw.save_models {
        atomic_write(&dir.join("model.bin"), &model.to_bytes())?;
    }
    write_json(&dir.join(SUMMARY), &Stage1Summary { hp, objective, trials })?;
    ctx.cache.commit(&dir, &key)?;
    Ok(objective)
}

/// Tunes, fits and scores every recommender on every selected dataset.
pub fn cmd_stage1(ctx: &Context) -> Result<StageCounts> {
    let combos = &ctx.cfg.combos;
    require(combos.iter().filter(|c| !ctx.dataset_fresh(c)).map(|c| format!("{DATASETS}/{}", c.id())).collect())?;
    ctx.bundles()?;
    let per_combo = par::try_map_range(combos.len(), |k| -> Result<Vec<Outcome>> {
        let combo = &combos[k];
        let (valid, test) = ctx.slates(combo)?;
        let mut store = None;
        let mut out = Vec::new();
        for &algo in &ctx.cfg.recommenders {
            let t = Instant::now();
            let key = ctx.stage1_key(combo, algo);
            let name = format!("{}/{}", combo.id(), algo.name());
            if ctx.stage1_fresh(combo, algo) {
                ctx.cache.record(STAGE1, &name, &key, Outcome::Hit, t.elapsed(), None)?;
                out.push(Outcome::Hit);
                continue;
            }
            if store.is_none() {
                store = Some(ctx.load_store(combo)?);
            }
            let obj = run_stage1(ctx, combo, algo, store.as_ref().unwrap(), &valid, &test)?;
            ctx.cache.record(STAGE1, &name, &key, Outcome::Computed, t.elapsed(), Some(obj))?;
            out.push(Outcome::Computed);
        }
        Ok(out)
    })?;
    let mut counts = StageCounts::default();
    per_combo.into_iter().flatten().for_each(|o| counts.add(o));
    Ok(counts)
}

/// Builds the per-dataset linear and boosted ensembles.
pub fn cmd_stage2(ctx: &Context) -> Result<StageCounts> {
    let combos = &ctx.cfg.combos;
    let mut missing = Vec::new();
    for c in combos {
        if !ctx.dataset_fresh(c) {
            missing.push(format!("{DATASETS}/{}", c.id()));
        }
        for &a in &ctx.cfg.recommenders {
            if !ctx.stage1_fresh(c, a) {
                missing.push(format!("{STAGE1}/{}/{}", c.id(), a.name()));
            }
        }
    }
    require(missing)?;
    ctx.bundles()?;
    let settings = ctx.cfg.stage2_settings();
    let names = ctx.recommender_names();
    let outcomes = par::try_map_range(combos.len(), |k| -> Result<Outcome> {
        let combo = &combos[k];
        let (dir, key) = (ctx.stage2_dir(combo), ctx.stage2_key(combo));
        let t = Instant::now();
        if ctx.stage2_fresh(combo) {
            ctx.cache.record(STAGE2, &combo.id(), &key, Outcome::Hit, t.elapsed(), None)?;
            return Ok(Outcome::Hit);
        }
        let (valid, test) = ctx.slates(combo)?;
        let store = ctx.load_store(combo)?;
        let stage1 = ctx.load_stage1(combo, &valid, &test)?;
        let out = stage2_dataset(&store, &valid, &test, &stage1, &names, &settings)?;
        ctx.cache.begin(&dir)?;
        atomic_write(&dir.join(VALID_TABLE), out.scores.valid.to_tsv(&valid)?.as_bytes())?;
        atomic_write(&dir.join(TEST_TABLE), out.scores.test.to_tsv(&test)?.as_bytes())?;
        atomic_write(&dir.join(LINEAR_PARAMS), out.linear.to_tsv().as_bytes())?;
        let boosted = out
            .boosted
            .iter()
            .map(|b| BoostedEntry { variant: b.variant.to_string(), hp: b.hp.clone(), cv_ndcg: b.cv_ndcg })
            .collect();
        write_json(&dir.join(SUMMARY), &Stage2Summary { linear_ndcg: out.linear_ndcg, boosted })?;
        ctx.cache.commit(&dir, &key)?;
        let best = out.boosted.iter().map(|b| b.cv_ndcg).fold(out.linear_ndcg, f64::max);
        ctx.cache.record(STAGE2, &combo.id(), &key, Outcome::Computed, t.elapsed(), Some(best))?;
        Ok(Outcome::Computed)
    })?;
    let mut counts = StageCounts::default();
    outcomes.into_iter().for_each(|o| counts.add(o));
    Ok(counts)
}

/// Stacks every dataset containing each target into one final ranker.
pub fn cmd_stage3(ctx: &Context) -> Result<StageCounts> {
    let targets = ctx.cfg.active_targets();
    let mut missing = Vec::new();
    for &t in &targets {
        for c in ctx.cfg.combos_with(t) {
            if !ctx.stage2_fresh(&c) {
                missing.push(format!("{STAGE2}/{}", c.id()));
            }
        }
    }
    missing.dedup();
    require(missing)?;
    let bundles = ctx.bundles()?;
    let settings = ctx.cfg.stage3_settings();
    let names = ctx.recommender_names();
    let mut counts = StageCounts::default();
    for target in targets {
        let (dir, key) = (ctx.stage3_dir(target), ctx.stage3_key(target));
        let t = Instant::now();
        if ctx.stage3_fresh(target) {
            ctx.cache.record(STAGE3, target.as_str(), &key, Outcome::Hit, t.elapsed(), None)?;
            counts.add(Outcome::Hit);
            continue;
        }
        let combos = ctx.cfg.combos_with(target);
        struct Loaded {
            store: InteractionStore,
            valid: Vec<CandidateSlate>,
            test: Vec<CandidateSlate>,
            stage1: SlateScores,
            stage2: Stage2Output,
        }
        let loaded = par::try_map_range(combos.len(), |k| -> Result<Loaded> {
            let c = &combos[k];
            let (valid, test) = ctx.slates(c)?;
            Ok(Loaded {
                store: ctx.load_store(c)?,
                stage1: ctx.load_stage1(c, &valid, &test)?,
                stage2: ctx.load_stage2(c, &valid, &test)?,
                valid,
                test,
            })
        })?;
        let datasets: BTreeMap<String, DatasetOutputs<'_>> = combos
            .iter()
            .zip(&loaded)
            .map(|(c, l)| {
                let d = DatasetOutputs {
                    combo: c.clone(),
                    store: &l.store,
                    valid_slates: &l.valid,
                    test_slates: &l.test,
                    stage1: &l.stage1,
                    stage2: &l.stage2,
                };
                (c.id(), d)
            })
            .collect();
        let target_store = ctx.target_store(target)?;
        let b = &bundles[&target];
        let out = final_stack(target, &combos, &datasets, &target_store, &b.valid_slates, &b.test_slates, &names, &settings)?;
        ctx.cache.begin(&dir)?;
        for (file, slates, main, lin) in [
            (VALID_TABLE, &b.valid_slates, &out.valid, &out.valid_linear),
            (TEST_TABLE, &b.test_slates, &out.test, &out.test_linear),
        ] {
            let mut table = ScoreTable::new();
            table.push(FINAL_UNIT, main.clone());
            table.push(LINEAR_UNIT, lin.clone());
            atomic_write(&dir.join(file), table.to_tsv(slates)?.as_bytes())?;
        }
        atomic_write(&dir.join(LINEAR_PARAMS), out.linear.to_tsv().as_bytes())?;
        let summary = Stage3Summary {
            schema_hash: out.spec.schema_hash(),
            features: out.spec.names.clone(),
            hp: out.hp.clone(),
            cv_ndcg: out.cv_ndcg,
            valid_ndcg: out.valid_ndcg,
        };
        write_json(&dir.join(SUMMARY), &summary)?;
        ctx.cache.commit(&dir, &key)?;
        ctx.cache.record(STAGE3, target.as_str(), &key, Outcome::Computed, t.elapsed(), Some(out.valid_ndcg))?;
        counts.add(Outcome::Computed);
    }
    Ok(counts)
}

pub fn read_stage3_summary(ctx: &Context, target: MarketId) -> Result<Stage3Summary> {
    read_json(&ctx.stage3_dir(target).join(SUMMARY))
}

fn profile_map(store: &InteractionStore, slates: &[CandidateSlate]) -> Result<BTreeMap<String, usize>> {
    let lens = profile_lengths(store, slates)?;
    Ok(slates.iter().map(|s| s.user_id.clone()).zip(lens).collect())
}

/// Validation and (where known) test qrels of the given target markets.
fn qrels_of(bundles: &BTreeMap<MarketId, MarketBundle>, targets: &[MarketId]) -> (BTreeMap<String, String>, Option<BTreeMap<String, String>>) {
    let mut valid = BTreeMap::new();
    let mut test = Some(BTreeMap::new());
    for t in targets {
        let b = &bundles[t];
        valid.extend(b.valid_qrels.clone());
        test = match (test, &b.test_qrels) {
            (Some(mut acc), Some(q)) => {
                acc.extend(q.clone());
                Some(acc)
            }
            _ => None,
        };
    }
    (valid, test)
}

#[allow(clippy::too_many_arguments)]
fn push_rows(
    report: &mut EvalReport,
    dataset: &str,
    table: &ScoreTable,
    secondary: Option<&[Vec<f64>]>,
    slates: &[CandidateSlate],
    qrels: &BTreeMap<String, String>,
    lens: &BTreeMap<String, usize>,
    split: &str,
    label: impl Fn(&str) -> String,
) -> Result<()> {
    for (unit, scores) in table.units.iter().zip(&table.scores) {
        let m = evaluate_run(slates, scores, secondary, qrels, lens)?;
        report.push(dataset, &label(unit), split, m);
    }
    Ok(())
}

/// NDCG@10 of every cached artifact on validation and, when the held-out
/// positives are known, on test. Writes `report.tsv` and `report.txt`.
pub fn cmd_evaluate(ctx: &Context) -> Result<EvalReport> {
    let bundles = ctx.bundles()?;
    let mut report = EvalReport::default();
    for combo in &ctx.cfg.combos {
        let fresh1: Vec<Algorithm> = ctx.cfg.recommenders.iter().copied().filter(|&a| ctx.stage1_fresh(combo, a)).collect();
        let fresh2 = ctx.stage2_fresh(combo);
        if fresh1.is_empty() && !fresh2 {
            continue;
        }
        let store = ctx.load_store(combo)?;
        let (valid, test) = ctx.slates(combo)?;
        let (vq, tq) = qrels_of(bundles, &combo.targets);
        let (vl, tl) = (profile_map(&store, &valid)?, profile_map(&store, &test)?);
        let id = combo.id();
        for a in fresh1 {
            let dir = ctx.stage1_dir(combo, a);
            let t = ScoreTable::from_tsv(&read_text(&dir.join(VALID_TABLE))?, &valid)?;
            push_rows(&mut report, &id, &t, None, &valid, &vq, &vl, "valid", str::to_string)?;
            if let Some(tq) = &tq {
                let t = ScoreTable::from_tsv(&read_text(&dir.join(TEST_TABLE))?, &test)?;
                push_rows(&mut report, &id, &t, None, &test, tq, &tl, "test", str::to_string)?;
            }
        }
        if fresh2 {
            let s2 = ctx.load_stage2(combo, &valid, &test)?;
            let label = |u: &str| format!("stage2:{u}");
            push_rows(&mut report, &id, &s2.scores.valid, None, &valid, &vq, &vl, "valid", label)?;
            if let Some(tq) = &tq {
                push_rows(&mut report, &id, &s2.scores.test, None, &test, tq, &tl, "test", label)?;
            }
        }
    }
    for target in ctx.cfg.active_targets() {
        if !ctx.stage3_fresh(target) {
            continue;
        }
        let b = &bundles[&target];
        let store = ctx.target_store(target)?;
        let dir = ctx.stage3_dir(target);
        let (vq, tq) = qrels_of(bundles, &[target]);
        let name = format!("stack:{target}");
        for (file, slates, qrels, split) in [(VALID_TABLE, &b.valid_slates, Some(&vq), "valid"), (TEST_TABLE, &b.test_slates, tq.as_ref(), "test")] {
            let Some(qrels) = qrels else { continue };
            let lens = profile_map(&store, slates)?;
            let t = ScoreTable::from_tsv(&read_text(&dir.join(file))?, slates)?;
            let lin = t.unit(LINEAR_UNIT).cloned().ok_or_else(|| xmarket::Error::Decode(format!("{file} lacks {LINEAR_UNIT}")))?;
            let fin = t.select(&[FINAL_UNIT.to_string()])?;
            push_rows(&mut report, &name, &fin, Some(&lin), slates, qrels, &lens, split, str::to_string)?;
            let lin_only = t.select(&[LINEAR_UNIT.to_string()])?;
            push_rows(&mut report, &name, &lin_only, None, slates, qrels, &lens, split, str::to_string)?;
        }
    }
    let out = &ctx.cfg.raw.output_dir;
    atomic_write(&out.join("report.tsv"), report.render_tsv().as_bytes())?;
    atomic_write(&out.join("report.txt"), report.render_table().as_bytes())?;
    Ok(report)
}

pub fn submission_path(cfg: &PipelineConfig, target: MarketId) -> PathBuf {
    cfg.output_dir.join(format!("submission_{target}.tsv"))
}

/// Writes one submission per target from the stage-3 test scores, ties
/// broken by the last-level linear blend.
pub fn cmd_submit(ctx: &Context) -> Result<Vec<PathBuf>> {
    let targets = ctx.cfg.active_targets();
    require(targets.iter().filter(|&&t| !ctx.stage3_fresh(t)).map(|t| format!("{STAGE3}/{t}")).collect())?;
    let bundles = ctx.bundles()?;
    let mut written = Vec::new();
    for target in targets {
        let slates = &bundles[&target].test_slates;
        let t = ScoreTable::from_tsv(&read_text(&ctx.stage3_dir(target).join(TEST_TABLE))?, slates)?;
        let missing = |u: &str| xmarket::Error::Decode(format!("stage-3 test table lacks {u}"));
        let fin = t.unit(FINAL_UNIT).ok_or_else(|| missing(FINAL_UNIT))?;
        let lin = t.unit(LINEAR_UNIT).ok_or_else(|| missing(LINEAR_UNIT))?;
        let scored: Vec<ScoredSlate> = slates
            .iter()
            .enumerate()
            .map(|(s, slate)| ScoredSlate {
                user_id: slate.user_id.clone(),
                items: slate.candidates.clone(),
                scores: fin[s].clone(),
                secondary: Some(lin[s].clone()),
            })
            .collect();
        let path = submission_path(&ctx.cfg.raw, target);
        write_submission(&scored, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Generates a synthetic five-market world into `data_root`.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<PathBuf> {
    let world = generate_synthetic(&cfg.synth_config())?;
    world.write(&cfg.data_root)?;
    Ok(cfg.data_root.clone())
}

type StageFn = fn(&Context) -> Result<StageCounts>;

/// Every stage in order, then evaluation and submission.
pub fn cmd_run(ctx: &Context) -> Result<Vec<PathBuf>> {
    let stages: [(&str, StageFn); 4] = [
        ("prepare", cmd_prepare),
        ("stage1", cmd_stage1),
        ("stage2", cmd_stage2),
        ("stage3", cmd_stage3),
    ];
    for (name, stage) in stages {
        let counts = stage(ctx)?;
        log::info!("{name}: {counts}");
    }
    cmd_evaluate(ctx)?;
    cmd_submit(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_display() {
        let mut c = StageCounts::default();
        c.add(Outcome::Hit);
        c.add(Outcome::Computed);
        c.add(Outcome::Computed);
        assert_eq!(c.to_string(), "1 cached, 2 computed");
    }
}
