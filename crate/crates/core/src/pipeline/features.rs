//! Feature assembly for the boosted rankers.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::market::CandidateSlate;
use crate::ranker::{RankingData, MISSING};
use crate::recommenders::FactorModel;
use crate::store::InteractionStore;
use crate::table::ScoreTable;

/// Which form of the stage-1 scores enters the feature table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreVariant {
    None,
    MinMax,
    Both,
}

impl ScoreVariant {
    pub const ALL: [ScoreVariant; 3] = [ScoreVariant::None, ScoreVariant::MinMax, ScoreVariant::Both];

    pub fn name(self) -> &'static str {
        match self {
            ScoreVariant::None => "none",
            ScoreVariant::MinMax => "minmax",
            ScoreVariant::Both => "both",
        }
    }
}

impl fmt::Display for ScoreVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown score variant {s:?}")))
    }
}

/// Ordered feature names. The part before the first `:` names the source
/// (`score`, `score_mm`, `user`, `item`, `dataset`, `ufac`, `ifac`, `stage2`),
/// optionally behind a `<dataset>/` prefix at the last level.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureSpec {
    pub names: Vec<String>,
}

impl FeatureSpec {
    pub fn width(&self) -> usize {
        self.names.len()
    }

    /// Hex SHA-256 of the newline-joined names.
    pub fn schema_hash(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.names {
            h.update(n.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn prefixed(&self, prefix: &str) -> FeatureSpec {
        FeatureSpec { names: self.names.iter().map(|n| format!("{prefix}/{n}")).collect() }
    }
}

/// Feature values for a list of slates, one row per candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub spec: FeatureSpec,
    pub data: RankingData,
}

impl FeatureTable {
    /// TSV with a `#schema` line, a `#columns` line, then `group label values…`.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "#schema\t{}", self.spec.schema_hash()).unwrap();
        writeln!(s, "#columns\tgroup\tlabel\t{}", self.spec.names.join("\t")).unwrap();
        for g in 0..self.data.n_groups() {
            for i in self.data.group(g) {
                write!(s, "{g}\t{}", self.data.labels()[i]).unwrap();
                for v in self.data.row(i) {
                    write!(s, "\t{v}").unwrap();
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Decode(format!("feature table: {m}"));
        let mut lines = text.lines();
        let hash = lines.next().and_then(|l| l.strip_prefix("#schema\t")).ok_or_else(|| bad("missing schema"))?;
        let cols = lines.next().and_then(|l| l.strip_prefix("#columns\tgroup\tlabel")).ok_or_else(|| bad("missing columns"))?;
        let names: Vec<String> = cols.split('\t').skip(1).map(str::to_owned).collect();
        let spec = FeatureSpec { names };
        if spec.schema_hash() != hash {
            return Err(bad("schema hash mismatch"));
        }
        let (mut features, mut labels, mut sizes) = (Vec::new(), Vec::new(), Vec::<usize>::new());
        let mut last_group = None;
        for line in lines {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != spec.width() + 2 {
                return Err(bad("row width"));
            }
            let g: usize = f[0].parse().map_err(|_| bad("group"))?;
            if last_group != Some(g) {
                sizes.push(0);
                last_group = Some(g);
            }
            *sizes.last_mut().unwrap() += 1;
            labels.push(f[1].parse().map_err(|_| bad("label"))?);
            for v in &f[2..] {
                features.push(v.parse::<f64>().map_err(|_| bad("value"))?);
            }
        }
        Ok(Self { data: RankingData::new(spec.width(), features, labels, &sizes)?, spec })
    }
}

/// Row-wise L2-normalised copies of a factor model's user and item factors;
/// all-zero rows become missing.
pub fn normalized_factors(model: &FactorModel) -> (Array2<f64>, Array2<f64>) {
    let norm = |m: &Array2<f64>| {
        let mut out = m.clone();
        for mut row in out.rows_mut() {
            let n = row.dot(&row).sqrt();
            if n > 0.0 && n.is_finite() {
                row /= n;
            } else {
                row.fill(MISSING);
            }
        }
        out
    };
    (norm(&model.user_factors), norm(&model.item_factors))
}

/// Per-dataset context shared by every slate of one feature table.
pub struct DatasetView<'a> {
    pub store: &'a InteractionStore,
    /// Normalised (user, item) factors, if factor features are wanted.
    pub factors: Option<(Array2<f64>, Array2<f64>)>,
}

impl<'a> DatasetView<'a> {
    pub fn new(store: &'a InteractionStore, factors: Option<&FactorModel>) -> Self {
        Self { store, factors: factors.map(normalized_factors) }
    }

    fn factor_dim(&self) -> usize {
        self.factors.as_ref().map_or(0, |(u, _)| u.ncols())
    }

    /// Names of the stats and factor columns.
    pub fn context_names(&self) -> Vec<String> {
        let mut names: Vec<String> = [
            "user:profile_len",
            "user:mean_rating",
            "item:popularity",
            "item:mean_rating",
            "dataset:n_users",
            "dataset:n_items",
            "dataset:density",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let d = self.factor_dim();
        names.extend((0..d).map(|k| format!("ufac:{k}")));
        names.extend((0..d).map(|k| format!("ifac:{k}")));
        names
    }

    /// Appends the stats and factor values of one candidate.
    fn push_context(&self, out: &mut Vec<f64>, user: usize, item: Option<usize>) {
        let s = self.store;
        out.push(s.profile_len(user) as f64);
        out.push(s.user_mean(user));
        match item {
            Some(i) => {
                out.push(s.popularity(i) as f64);
                out.push(s.item_mean(i));
            }
            None => {
                out.push(0.0);
                out.push(MISSING);
            }
        }
        out.push(s.n_users() as f64);
        out.push(s.n_items() as f64);
        out.push(s.density());
        if let Some((uf, vf)) = &self.factors {
            out.extend(uf.row(user).iter());
            match item.filter(|&i| i < vf.nrows()) {
                Some(i) => out.extend(vf.row(i).iter()),
                None => out.extend(std::iter::repeat_n(MISSING, vf.ncols())),
            }
        }
    }

    fn user_index(&self, slate: &CandidateSlate) -> Result<usize> {
        self.store
            .user_map()
            .get(&slate.user_id)
            .ok_or_else(|| Error::Missing(format!("slate user {} not in dataset", slate.user_id)))
    }
}

fn labels_for(slates: &[CandidateSlate]) -> Vec<f64> {
    slates
        .iter()
        .flat_map(|s| {
            let p = s.positive_index();
            (0..s.candidates.len()).map(move |c| if Some(c) == p { 1.0 } else { 0.0 })
        })
        .collect()
}

/// Score columns named `prefix:<unit>`, one value per candidate row.
pub struct ScoreBlock<'a> {
    pub prefix: &'a str,
    pub table: &'a ScoreTable,
}

/// Builds a feature table: the given score blocks, then (optionally) the
/// dataset's stats and factors. Labels come from the slates' positives.
pub fn build_table(
    slates: &[CandidateSlate],
    blocks: &[ScoreBlock<'_>],
    view: Option<&DatasetView<'_>>,
) -> Result<FeatureTable> {
    let mut names = Vec::new();
    for b in blocks {
        b.table.check_shape(slates)?;
        names.extend(b.table.units.iter().map(|u| format!("{}:{u}", b.prefix)));
    }
    if let Some(v) = view {
        names.extend(v.context_names());
    }
    let width = names.len();
    let mut features = Vec::with_capacity(width * slates.len() * crate::market::SLATE_SIZE);
    for (si, slate) in slates.iter().enumerate() {
        let user = view.map(|v| v.user_index(slate)).transpose()?;
        for (ci, item) in slate.candidates.iter().enumerate() {
            for b in blocks {
                features.extend(b.table.scores.iter().map(|unit| unit[si][ci]));
            }
            if let (Some(v), Some(u)) = (view, user) {
                v.push_context(&mut features, u, v.store.item_map().get(item));
            }
        }
    }
    let sizes: Vec<usize> = slates.iter().map(|s| s.candidates.len()).collect();
    let data = RankingData::new(width, features, labels_for(slates), &sizes)?;
    Ok(FeatureTable { spec: FeatureSpec { names }, data })
}

/// Stage-2 features of one dataset: stage-1 scores in the requested
/// variant, stats and 12-dimensional factors.
pub fn assemble_features(
    view: &DatasetView<'_>,
    slates: &[CandidateSlate],
    scores: &ScoreTable,
    recommenders: &[String],
    variant: ScoreVariant,
) -> Result<FeatureTable> {
    let raw = scores.select(recommenders)?;
    let normalized = raw.normalized()?;
    let blocks: Vec<ScoreBlock> = match variant {
        ScoreVariant::None => vec![ScoreBlock { prefix: "score", table: &raw }],
        ScoreVariant::MinMax => vec![ScoreBlock { prefix: "score_mm", table: &normalized }],
        ScoreVariant::Both => vec![
            ScoreBlock { prefix: "score", table: &raw },
            ScoreBlock { prefix: "score_mm", table: &normalized },
        ],
    };
    build_table(slates, &blocks, Some(view))
}

/// Column-wise concatenation of tables over the same slates.
pub fn concat_tables(tables: &[FeatureTable]) -> Result<FeatureTable> {
    let first = tables.first().ok_or_else(|| Error::Shape("nothing to concatenate".into()))?;
    let n = first.data.n_samples();
    if tables.iter().any(|t| t.data.n_samples() != n || t.data.labels() != first.data.labels()) {
        return Err(Error::Shape("feature tables cover different samples".into()));
    }
    let names: Vec<String> = tables.iter().flat_map(|t| t.spec.names.iter().cloned()).collect();
    let mut features = Vec::with_capacity(n * names.len());
    for i in 0..n {
        for t in tables {
            features.extend_from_slice(t.data.row(i));
        }
    }
    let sizes: Vec<usize> = (0..first.data.n_groups()).map(|g| first.data.group(g).len()).collect();
    let data = RankingData::new(names.len(), features, first.data.labels().to_vec(), &sizes)?;
    Ok(FeatureTable { spec: FeatureSpec { names }, data })
}
