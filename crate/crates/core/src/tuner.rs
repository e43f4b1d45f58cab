//! Seeded black-box maximiser: uniform exploration for the first third of
//! the budget, then Gaussian perturbation of the incumbent in the unit cube.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamKind {
    Real { low: f64, high: f64 },
    LogReal { low: f64, high: f64 },
    Int { low: i64, high: i64 },
    LogInt { low: i64, high: i64 },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn real(name: &str, low: f64, high: f64) -> Self {
        Self { name: name.into(), kind: ParamKind::Real { low, high } }
    }
    pub fn log_real(name: &str, low: f64, high: f64) -> Self {
        Self { name: name.into(), kind: ParamKind::LogReal { low, high } }
    }
    pub fn int(name: &str, low: i64, high: i64) -> Self {
        Self { name: name.into(), kind: ParamKind::Int { low, high } }
    }
    pub fn log_int(name: &str, low: i64, high: i64) -> Self {
        Self { name: name.into(), kind: ParamKind::LogInt { low, high } }
    }
    pub fn categorical(name: &str, choices: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Categorical { choices: choices.iter().map(|s| s.to_string()).collect() },
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidParam(format!("{}: {why}", self.name)));
        match &self.kind {
            ParamKind::Real { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return bad("bounds must be finite with low < high");
                }
            }
            ParamKind::LogReal { low, high } => {
                if !(low.is_finite() && high.is_finite() && *low > 0.0 && low < high) {
                    return bad("log bounds must be finite with 0 < low < high");
                }
            }
            ParamKind::Int { low, high } => {
                if low >= high {
                    return bad("low must be < high");
                }
            }
            ParamKind::LogInt { low, high } => {
                if *low < 1 || low >= high {
                    return bad("log-int bounds need 1 <= low < high");
                }
            }
            ParamKind::Categorical { choices } => {
                if choices.is_empty() {
                    return bad("no choices");
                }
            }
        }
        Ok(())
    }

    /// Maps a unit-cube coordinate to a parameter value.
    fn decode(&self, u: f64) -> ParamValue {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            ParamKind::Real { low, high } => ParamValue::Real(low + u * (high - low)),
            ParamKind::LogReal { low, high } => {
                ParamValue::Real((low.ln() + u * (high.ln() - low.ln())).exp().clamp(*low, *high))
            }
            ParamKind::Int { low, high } => {
                let span = (high - low + 1) as f64;
                ParamValue::Int((*low + (u * span).floor() as i64).min(*high))
            }
            ParamKind::LogInt { low, high } => {
                let (a, b) = ((*low as f64).ln(), ((*high + 1) as f64).ln());
                ParamValue::Int(((a + u * (b - a)).exp().floor() as i64).clamp(*low, *high))
            }
            ParamKind::Categorical { choices } => {
                let i = ((u * choices.len() as f64).floor() as usize).min(choices.len() - 1);
                ParamValue::Cat(choices[i].clone())
            }
        }
    }

    /// Inverse of [`decode`](Self::decode) up to discretisation (bin centres
    /// for integers and categories).
    fn encode(&self, v: &ParamValue) -> f64 {
        let x = match (&self.kind, v) {
            (ParamKind::Real { low, high }, ParamValue::Real(x)) => (x - low) / (high - low),
            (ParamKind::LogReal { low, high }, ParamValue::Real(x)) => {
                (x.ln() - low.ln()) / (high.ln() - low.ln())
            }
            (ParamKind::Int { low, high }, ParamValue::Int(x)) => {
                ((x - low) as f64 + 0.5) / (high - low + 1) as f64
            }
            (ParamKind::LogInt { low, high }, ParamValue::Int(x)) => {
                let (a, b) = ((*low as f64).ln(), ((*high + 1) as f64).ln());
                let mid = ((*x as f64).ln() + ((*x + 1) as f64).ln()) / 2.0;
                (mid - a) / (b - a)
            }
            (ParamKind::Categorical { choices }, ParamValue::Cat(c)) => {
                let i = choices.iter().position(|x| x == c).unwrap_or(0);
                (i as f64 + 0.5) / choices.len() as f64
            }
            _ => 0.5,
        };
        x.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Real(x) => Some(*x),
            ParamValue::Cat(_) => None,
        }
    }
}

/// A named assignment of parameter values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Config(pub BTreeMap<String, ParamValue>);

impl Config {
    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.0.get(name)
    }

    pub fn f64(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(ParamValue::as_f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Decode(e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<ParamSpec>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        for p in &params {
            p.validate()?;
        }
        let mut names: Vec<&str> = params.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != params.len() {
            return Err(Error::InvalidParam("duplicate parameter name".into()));
        }
        Ok(Self { params })
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn decode(&self, unit: &[f64]) -> Config {
        Config(
            self.params
                .iter()
                .zip(unit)
                .map(|(p, &u)| (p.name.clone(), p.decode(u)))
                .collect(),
        )
    }

    pub fn encode(&self, cfg: &Config) -> Vec<f64> {
        self.params
            .iter()
            .map(|p| cfg.get(&p.name).map_or(0.5, |v| p.encode(v)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: Config,
    /// Objective value; NaN results are recorded as −∞.
    pub objective: f64,
    /// Stream id of the proposal generator for this trial.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub budget: usize,
    pub seed: u64,
    /// Number of uniform exploration trials; `None` means ⌈budget/3⌉.
    pub explore: Option<usize>,
    /// Exploitation proposals generated per incumbent snapshot.
    pub batch: usize,
    /// Perturbation scale in unit-cube coordinates.
    pub sigma: f64,
}

impl SearchOptions {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self { budget, seed, explore: None, batch: 4, sigma: 0.1 }
    }

    fn n_explore(&self) -> usize {
        self.explore.unwrap_or(self.budget.div_ceil(3)).clamp(1, self.budget.max(1))
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Trial,
    pub trials: Vec<Trial>,
}

fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn reflect(x: f64) -> f64 {
    let mut y = x;
    for _ in 0..4 {
        if y < 0.0 {
            y = -y;
        } else if y > 1.0 {
            y = 2.0 - y;
        } else {
            break;
        }
    }
    y.clamp(0.0, 1.0)
}

/// Generates the unit-cube proposal for trial `index`. Exploration trials
/// ignore `incumbent`.
fn propose(space: &SearchSpace, opts: &SearchOptions, index: usize, incumbent: Option<&[f64]>) -> Vec<f64> {
    let mut rng = trial_rng(opts.seed, index);
    match incumbent {
        Some(center) if index >= opts.n_explore() => center
            .iter()
            .map(|&c| {
                let z: f64 = rng.sample(StandardNormal);
                reflect(c + opts.sigma * z)
            })
            .collect(),
        _ => (0..space.dim()).map(|_| rng.random::<f64>()).collect(),
    }
}

/// Anything that can replay or persist trial outcomes.
trait TrialLog {
    fn recall(&self, index: usize, config: &Config) -> Option<f64>;
    fn record(&mut self, trials: &[Trial]) -> Result<()>;
}

struct NoLog;

impl TrialLog for NoLog {
    fn recall(&self, _: usize, _: &Config) -> Option<f64> {
        None
    }
    fn record(&mut self, _: &[Trial]) -> Result<()> {
        Ok(())
    }
}

/// TSV journal: `index<TAB>config-json<TAB>objective<TAB>unix-seconds`.
struct Journal<'a> {
    path: &'a Path,
    known: HashMap<usize, (String, f64)>,
}

impl<'a> Journal<'a> {
    fn open(path: &'a Path) -> Result<Self> {
        let mut known = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for line in text.lines() {
                let f: Vec<&str> = line.split('\t').collect();
                if f.len() < 3 {
                    continue;
                }
                if let (Ok(i), Ok(obj)) = (f[0].parse::<usize>(), f[2].parse::<f64>()) {
                    known.insert(i, (f[1].to_string(), obj));
                }
            }
        }
        Ok(Self { path, known })
    }
}

impl TrialLog for Journal<'_> {
    fn recall(&self, index: usize, config: &Config) -> Option<f64> {
        self.known
            .get(&index)
            .filter(|(c, _)| *c == config.to_json())
            .map(|(_, o)| *o)
    }

    fn record(&mut self, trials: &[Trial]) -> Result<()> {
        if let Some(dir) = self.path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut s = String::new();
        for t in trials {
            if self.known.contains_key(&t.index) {
                continue;
            }
            let _ = writeln!(s, "{}\t{}\t{}\t{}", t.index, t.config.to_json(), t.objective, now);
            self.known.insert(t.index, (t.config.to_json(), t.objective));
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.path)
            .map_err(|e| Error::io(self.path, e))?;
        f.write_all(s.as_bytes()).map_err(|e| Error::io(self.path, e))
    }
}

fn run<F, L>(space: &SearchSpace, objective: F, opts: &SearchOptions, log: &mut L) -> Result<SearchResult>
where
    F: Fn(&Config) -> f64 + Sync + Send,
    L: TrialLog + Sync,
{
    if opts.budget == 0 {
        return Err(Error::InvalidParam("search budget must be >= 1".into()));
    }
    let n_explore = opts.n_explore();
    let mut trials: Vec<Trial> = Vec::with_capacity(opts.budget);
    let mut best: Option<usize> = None;
    let mut next = 0usize;
    while next < opts.budget {
        let end = if next < n_explore {
            n_explore
        } else {
            (next + opts.batch.max(1)).min(opts.budget)
        };
        let center = best.map(|b| space.encode(&trials[b].config));
        let configs: Vec<Config> = (next..end)
            .map(|i| space.decode(&propose(space, opts, i, center.as_deref())))
            .collect();
        let objectives = par::map_range(configs.len(), |k| {
            let index = next + k;
            let v = log.recall(index, &configs[k]).unwrap_or_else(|| objective(&configs[k]));
            if v.is_nan() { f64::NEG_INFINITY } else { v }
        });
        let batch: Vec<Trial> = configs
            .into_iter()
            .zip(objectives)
            .enumerate()
            .map(|(k, (config, objective))| Trial { index: next + k, config, objective, seed: (next + k) as u64 })
            .collect();
        log.record(&batch)?;
        for t in batch {
            if best.is_none_or(|b| t.objective > trials[b].objective) {
                best = Some(trials.len());
            }
            trials.push(t);
        }
        next = end;
    }
    let best = trials[best.expect("budget >= 1")].clone();
    Ok(SearchResult { best, trials })
}

/// Runs exactly `opts.budget` objective evaluations and returns the best.
pub fn search<F>(space: &SearchSpace, objective: F, opts: &SearchOptions) -> Result<SearchResult>
where
    F: Fn(&Config) -> f64 + Sync + Send,
{
    run(space, objective, opts, &mut NoLog)
}

/// Like [`search`], appending every trial to a TSV journal. Trials already in
/// the journal with the same index and configuration are replayed instead of
/// re-evaluated, so an interrupted search resumes where it stopped.
pub fn search_with_journal<F>(
    space: &SearchSpace,
    objective: F,
    opts: &SearchOptions,
    journal: &Path,
) -> Result<SearchResult>
where
    F: Fn(&Config) -> f64 + Sync + Send,
{
    let mut j = Journal::open(journal)?;
    run(space, objective, opts, &mut j)
}
