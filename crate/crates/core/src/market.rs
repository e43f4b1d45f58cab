//! Market-level domain types.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::store::{build_store, InteractionStore};

/// Number of candidates in every slate.
pub const SLATE_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarketId {
    S1,
    S2,
    S3,
    T1,
    T2,
}

impl MarketId {
    pub const ALL: [MarketId; 5] = [
        MarketId::S1,
        MarketId::S2,
        MarketId::S3,
        MarketId::T1,
        MarketId::T2,
    ];
    pub const SOURCES: [MarketId; 3] = [MarketId::S1, MarketId::S2, MarketId::S3];
    pub const TARGETS: [MarketId; 2] = [MarketId::T1, MarketId::T2];

    pub fn as_str(self) -> &'static str {
        match self {
            MarketId::S1 => "s1",
            MarketId::S2 => "s2",
            MarketId::S3 => "s3",
            MarketId::T1 => "t1",
            MarketId::T2 => "t2",
        }
    }

    pub fn is_target(self) -> bool {
        matches!(self, MarketId::T1 | MarketId::T2)
    }
}

impl fmt::Display for MarketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MarketId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MarketId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Market(format!("unknown market label {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingTriple {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
}

impl RatingTriple {
    pub fn new(user: impl Into<String>, item: impl Into<String>, rating: f64) -> Self {
        Self {
            user_id: user.into(),
            item_id: item.into(),
            rating,
        }
    }
}

/// One user and the ordered candidates to rank for them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSlate {
    pub user_id: String,
    pub candidates: Vec<String>,
    pub positive: Option<String>,
}

impl CandidateSlate {
    /// Index of the positive within `candidates`.
    pub fn positive_index(&self) -> Option<usize> {
        let p = self.positive.as_ref()?;
        self.candidates.iter().position(|c| c == p)
    }
}

/// Everything loaded for one market.
#[derive(Debug, Clone)]
pub struct MarketBundle {
    pub market: MarketId,
    /// Raw rows of `train.tsv`, kept so fusion can average every occurrence.
    pub train_ratings: Vec<RatingTriple>,
    /// Raw rows of `train_5core.tsv` (all unit ratings).
    pub train_5core_ratings: Vec<RatingTriple>,
    pub train: InteractionStore,
    pub train_5core: InteractionStore,
    pub valid_slates: Vec<CandidateSlate>,
    pub test_slates: Vec<CandidateSlate>,
    pub valid_qrels: BTreeMap<String, String>,
    /// Held-out test positives; only synthetic worlds have them.
    pub test_qrels: Option<BTreeMap<String, String>>,
}

pub const TRAIN_FILE: &str = "train.tsv";
pub const TRAIN_5CORE_FILE: &str = "train_5core.tsv";
pub const VALID_RUN_FILE: &str = "valid_run.tsv";
pub const VALID_QREL_FILE: &str = "valid_qrel.tsv";
pub const TEST_RUN_FILE: &str = "test_run.tsv";
pub const TEST_QREL_FILE: &str = "test_qrel.tsv";

impl MarketBundle {
    /// Assembles and validates a bundle. Validation positives are attached to
    /// their slates; test slates must not carry one.
    pub fn new(
        market: MarketId,
        train_ratings: Vec<RatingTriple>,
        train_5core_ratings: Vec<RatingTriple>,
        mut valid_slates: Vec<CandidateSlate>,
        test_slates: Vec<CandidateSlate>,
        valid_qrels: BTreeMap<String, String>,
        test_qrels: Option<BTreeMap<String, String>>,
    ) -> Result<Self> {
        let train = build_store(&train_ratings, None, None);
        let train_5core = build_store(&train_5core_ratings, None, None);
        for slate in &mut valid_slates {
            let pos = valid_qrels.get(&slate.user_id).ok_or_else(|| Error::Slate {
                user: slate.user_id.clone(),
                msg: "validation slate without qrel".into(),
            })?;
            slate.positive = Some(pos.clone());
        }
        let bundle = Self {
            market,
            train_ratings,
            train_5core_ratings,
            train,
            train_5core,
            valid_slates,
            test_slates,
            valid_qrels,
            test_qrels,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn load(dir: &Path, market: MarketId) -> Result<Self> {
        let train = io::parse_ratings(&dir.join(TRAIN_FILE), true)?;
        let core = io::parse_ratings(&dir.join(TRAIN_5CORE_FILE), false)?;
        let valid = io::parse_run(&dir.join(VALID_RUN_FILE))?;
        let qrels = io::parse_qrels(&dir.join(VALID_QREL_FILE))?;
        let test = io::parse_run(&dir.join(TEST_RUN_FILE))?;
        let test_qrel_path = dir.join(TEST_QREL_FILE);
        let test_qrels = if test_qrel_path.exists() {
            Some(io::parse_qrels(&test_qrel_path)?)
        } else {
            None
        };
        Self::new(market, train, core, valid, test, qrels, test_qrels)
    }

    /// Writes the bundle in the competition file layout.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_ratings(&dir.join(TRAIN_FILE), &self.train_ratings, true)?;
        io::write_ratings(&dir.join(TRAIN_5CORE_FILE), &self.train_5core_ratings, false)?;
        io::write_run(&dir.join(VALID_RUN_FILE), &self.valid_slates)?;
        io::write_qrels(&dir.join(VALID_QREL_FILE), &self.valid_qrels)?;
        io::write_run(&dir.join(TEST_RUN_FILE), &self.test_slates)?;
        if let Some(q) = &self.test_qrels {
            io::write_qrels(&dir.join(TEST_QREL_FILE), q)?;
        }
        Ok(())
    }

    /// Items the user rated in either training file.
    pub fn training_items(&self, user: &str) -> HashSet<&str> {
        let mut out = HashSet::new();
        for store in [&self.train, &self.train_5core] {
            if let Some(u) = store.user_map().get(user) {
                let (items, _) = store.user_row(u);
                out.extend(items.iter().map(|&i| store.item_map().token(i as usize)));
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        for (slates, is_valid) in [(&self.valid_slates, true), (&self.test_slates, false)] {
            for slate in slates.iter() {
                let err = |msg: &str| Error::Slate {
                    user: slate.user_id.clone(),
                    msg: format!("{} ({})", msg, self.market),
                };
                if self.train.user_map().get(&slate.user_id).is_none()
                    && self.train_5core.user_map().get(&slate.user_id).is_none()
                {
                    return Err(err("user absent from training data"));
                }
                match (&slate.positive, is_valid) {
                    (Some(_), false) => return Err(err("test slate carries a positive")),
                    (None, true) => return Err(err("validation slate without positive")),
                    (Some(_), true) if slate.positive_index().is_none() => {
                        return Err(err("positive not among candidates"))
                    }
                    _ => {}
                }
                let seen = self.training_items(&slate.user_id);
                if slate.candidates.iter().any(|c| seen.contains(c.as_str())) {
                    return Err(err("candidate overlaps training items"));
                }
            }
        }
        if let Some(q) = &self.test_qrels {
            for slate in &self.test_slates {
                let p = q.get(&slate.user_id).ok_or_else(|| Error::Slate {
                    user: slate.user_id.clone(),
                    msg: "test slate without test qrel".into(),
                })?;
                if !slate.candidates.contains(p) {
                    return Err(Error::Slate {
                        user: slate.user_id.clone(),
                        msg: "test qrel not among candidates".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn market_labels_round_trip() {
        for m in MarketId::ALL {
            assert_eq!(m.as_str().parse::<MarketId>().unwrap(), m);
        }
        assert!("s4".parse::<MarketId>().is_err());
        assert!(MarketId::T2.is_target() && !MarketId::S3.is_target());
    }

    fn slate(user: &str, first: usize, pos: Option<&str>) -> CandidateSlate {
        CandidateSlate {
            user_id: user.into(),
            candidates: (first..first + SLATE_SIZE).map(|i| format!("i{i}")).collect(),
            positive: pos.map(String::from),
        }
    }

    #[test]
    fn bundle_attaches_positives_and_validates() {
        let train = vec![RatingTriple::new("u1", "i0", 4.0)];
        let qrels = BTreeMap::from([("u1".to_string(), "i5".to_string())]);
        let b = MarketBundle::new(
            MarketId::T1,
            train.clone(),
            vec![],
            vec![slate("u1", 1, None)],
            vec![slate("u1", 1, None)],
            qrels.clone(),
            None,
        )
        .unwrap();
        assert_eq!(b.valid_slates[0].positive.as_deref(), Some("i5"));

        // candidate i0 overlaps the training profile
        let e = MarketBundle::new(
            MarketId::T1,
            train.clone(),
            vec![],
            vec![slate("u1", 0, None)],
            vec![],
            qrels.clone(),
            None,
        );
        assert!(e.is_err());

        // unknown slate user
        let e = MarketBundle::new(
            MarketId::T1,
            train,
            vec![],
            vec![],
            vec![slate("u9", 1, None)],
            BTreeMap::new(),
            None,
        );
        assert!(e.is_err());
    }
}
