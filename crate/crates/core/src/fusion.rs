//! Market combinations and their fused training datasets.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::market::{MarketBundle, MarketId, RatingTriple};
use crate::store::{build_store, IdMap, InteractionStore};

/// Rating substituted for every preprocessed (unit) interaction.
pub const DEFAULT_UNIT_RATING: f64 = 4.0;

/// A set of source markets plus a non-empty set of target markets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MarketCombo {
    pub sources: Vec<MarketId>,
    pub targets: Vec<MarketId>,
}

impl MarketCombo {
    pub fn new(mut sources: Vec<MarketId>, mut targets: Vec<MarketId>) -> Result<Self> {
        sources.sort();
        sources.dedup();
        targets.sort();
        targets.dedup();
        if targets.is_empty() {
            return Err(Error::Market("combination without target market".into()));
        }
        if sources.iter().any(|m| m.is_target()) || targets.iter().any(|m| !m.is_target()) {
            return Err(Error::Market("sources must be s*, targets t*".into()));
        }
        Ok(Self { sources, targets })
    }

    /// Members in canonical order s1,s2,s3,t1,t2.
    pub fn members(&self) -> Vec<MarketId> {
        self.sources.iter().chain(&self.targets).copied().collect()
    }

    pub fn id(&self) -> String {
        self.members()
            .iter()
            .map(|m| m.as_str())
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn contains(&self, m: MarketId) -> bool {
        self.sources.contains(&m) || self.targets.contains(&m)
    }

    pub fn parse(id: &str) -> Result<Self> {
        let mut sources = Vec::new();
        let mut targets = Vec::new();
        for part in id.split('-') {
            let m: MarketId = part.parse()?;
            if m.is_target() {
                targets.push(m)
            } else {
                sources.push(m)
            }
        }
        let combo = Self::new(sources, targets)?;
        if combo.id() != id {
            return Err(Error::Market(format!("non-canonical combination id {id:?}")));
        }
        Ok(combo)
    }
}

/// Every (source subset) × (non-empty target subset) pair, sorted by id.
pub fn enumerate_combos(sources: &[MarketId], targets: &[MarketId]) -> Vec<MarketCombo> {
    let mut out = Vec::new();
    for tmask in 1u32..(1 << targets.len()) {
        for smask in 0u32..(1 << sources.len()) {
            let pick = |set: &[MarketId], mask: u32| -> Vec<MarketId> {
                set.iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, &m)| m)
                    .collect()
            };
            if let Ok(c) = MarketCombo::new(pick(sources, smask), pick(targets, tmask)) {
                out.push(c);
            }
        }
    }
    out.sort_by_key(|c| c.id());
    out.dedup();
    out
}

#[derive(Debug, Clone)]
pub struct FusedDataset {
    pub combo: MarketCombo,
    pub store: InteractionStore,
    /// Market of each dense user index.
    pub provenance: Vec<MarketId>,
}

/// Joins the member markets' raw and preprocessed interactions. Preprocessed
/// ratings become `unit_rating`; every occurrence of a (user, item) pair
/// across both files and all markets is then averaged. Users must not be
/// shared between markets.
pub fn fuse_with(
    combo: &MarketCombo,
    bundles: &BTreeMap<MarketId, MarketBundle>,
    unit_rating: f64,
) -> Result<FusedDataset> {
    let mut owner: HashMap<&str, MarketId> = HashMap::new();
    let mut triples: Vec<RatingTriple> = Vec::new();
    let mut provenance = Vec::new();
    let mut users = IdMap::new();
    for m in combo.members() {
        let b = bundles
            .get(&m)
            .ok_or_else(|| Error::Missing(format!("market {m} for combination {}", combo.id())))?;
        let raw = b.train_ratings.iter().map(|t| (t, t.rating));
        let core = b.train_5core_ratings.iter().map(|t| (t, unit_rating));
        for (t, r) in raw.chain(core) {
            match owner.get(t.user_id.as_str()) {
                Some(&o) if o != m => {
                    return Err(Error::UserOverlap {
                        user: t.user_id.clone(),
                        first: o.to_string(),
                        second: m.to_string(),
                    })
                }
                Some(_) => {}
                None => {
                    owner.insert(&t.user_id, m);
                    users.insert(&t.user_id);
                    provenance.push(m);
                }
            }
            triples.push(RatingTriple::new(t.user_id.clone(), t.item_id.clone(), r));
        }
    }
    let store = build_store(&triples, Some(users), None);
    Ok(FusedDataset {
        combo: combo.clone(),
        store,
        provenance,
    })
}

pub fn fuse(combo: &MarketCombo, bundles: &BTreeMap<MarketId, MarketBundle>) -> Result<FusedDataset> {
    fuse_with(combo, bundles, DEFAULT_UNIT_RATING)
}

const USERS_FILE: &str = "users.tsv";
const ITEMS_FILE: &str = "items.tsv";
const RATINGS_FILE: &str = "ratings.tsv";

impl FusedDataset {
    /// Writes id maps and the sparse triples (`u\ti\trating`, dense indices).
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut users = String::new();
        for (u, m) in self.provenance.iter().enumerate() {
            let _ = writeln!(users, "{}\t{}", self.store.user_map().token(u), m);
        }
        let mut items = String::new();
        for t in self.store.item_map().tokens() {
            let _ = writeln!(items, "{t}");
        }
        let mut ratings = String::new();
        for (u, i, r) in self.store.entries() {
            let _ = writeln!(ratings, "{u}\t{i}\t{r}");
        }
        atomic_write(&dir.join(USERS_FILE), users.as_bytes())?;
        atomic_write(&dir.join(ITEMS_FILE), items.as_bytes())?;
        atomic_write(&dir.join(RATINGS_FILE), ratings.as_bytes())
    }

    pub fn load(dir: &Path, combo: &MarketCombo) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        let bad = |name: &str, line: usize| Error::Parse {
            path: dir.join(name),
            line,
            msg: "malformed cached dataset line".into(),
        };
        let mut user_map = IdMap::new();
        let mut provenance = Vec::new();
        for (n, line) in read(USERS_FILE)?.lines().enumerate() {
            let (tok, m) = line.split_once('\t').ok_or_else(|| bad(USERS_FILE, n + 1))?;
            user_map.insert(tok);
            provenance.push(m.parse()?);
        }
        let item_map: IdMap = read(ITEMS_FILE)?.lines().map(String::from).collect();
        let mut entries = Vec::new();
        for (n, line) in read(RATINGS_FILE)?.lines().enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            let parsed = (|| -> Option<(usize, usize, f64)> {
                Some((f.first()?.parse().ok()?, f.get(1)?.parse().ok()?, f.get(2)?.parse().ok()?))
            })();
            let (u, i, r) = parsed.ok_or_else(|| bad(RATINGS_FILE, n + 1))?;
            if u >= user_map.len() || i >= item_map.len() {
                return Err(bad(RATINGS_FILE, n + 1));
            }
            entries.push((u, i, r));
        }
        Ok(Self {
            combo: combo.clone(),
            store: InteractionStore::from_entries(user_map, item_map, entries),
            provenance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{CandidateSlate, SLATE_SIZE};

    fn bundle(m: MarketId, train: &[(&str, &str, f64)], core: &[(&str, &str)]) -> MarketBundle {
        MarketBundle::new(
            m,
            train.iter().map(|&(u, i, r)| RatingTriple::new(u, i, r)).collect(),
            core.iter().map(|&(u, i)| RatingTriple::new(u, i, 1.0)).collect(),
            Vec::<CandidateSlate>::new(),
            vec![],
            BTreeMap::new(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn combo_counts() {
        assert_eq!(enumerate_combos(&MarketId::SOURCES, &MarketId::TARGETS).len(), 24);
        let single = enumerate_combos(&[], &[MarketId::T1]);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].id(), "t1");
        assert!(enumerate_combos(&MarketId::SOURCES, &[]).is_empty());
        let with_t1 = enumerate_combos(&MarketId::SOURCES, &MarketId::TARGETS)
            .into_iter()
            .filter(|c| c.contains(MarketId::T1))
            .count();
        assert_eq!(with_t1, 16);
        let _ = SLATE_SIZE;
    }

    #[test]
    fn ids_are_canonical() {
        let c = MarketCombo::new(vec![MarketId::S3, MarketId::S1], vec![MarketId::T2, MarketId::T1]).unwrap();
        assert_eq!(c.id(), "s1-s3-t1-t2");
        assert_eq!(MarketCombo::parse("s1-s3-t1-t2").unwrap(), c);
        assert!(MarketCombo::parse("t1-s1").is_err());
        assert!(MarketCombo::parse("s1").is_err());
    }

    #[test]
    fn raw_and_unit_ratings_average() {
        let t1 = bundle(MarketId::T1, &[("u", "i", 3.0)], &[("u", "i")]);
        let bundles = BTreeMap::from([(MarketId::T1, t1)]);
        let f = fuse(&MarketCombo::parse("t1").unwrap(), &bundles).unwrap();
        assert_eq!(f.store.rating(0, 0), Some(3.5));
    }

    #[test]
    fn shared_items_share_a_column() {
        let s1 = bundle(MarketId::S1, &[("a", "B00X", 5.0)], &[]);
        let t1 = bundle(MarketId::T1, &[("b", "B00X", 2.0), ("b", "C", 1.0)], &[]);
        let bundles = BTreeMap::from([(MarketId::S1, s1), (MarketId::T1, t1)]);
        let f = fuse(&MarketCombo::parse("s1-t1").unwrap(), &bundles).unwrap();
        assert_eq!(f.store.n_items(), 2);
        assert_eq!(f.store.n_users(), 2);
        assert_eq!(f.store.popularity(f.store.item_map().get("B00X").unwrap()), 2);
        assert_eq!(f.provenance, vec![MarketId::S1, MarketId::T1]);
    }

    #[test]
    fn overlapping_users_are_rejected() {
        let s1 = bundle(MarketId::S1, &[("a", "x", 5.0)], &[]);
        let t1 = bundle(MarketId::T1, &[("a", "y", 2.0)], &[]);
        let bundles = BTreeMap::from([(MarketId::S1, s1), (MarketId::T1, t1)]);
        let e = fuse(&MarketCombo::parse("s1-t1").unwrap(), &bundles);
        assert!(matches!(e, Err(Error::UserOverlap { .. })));
    }

    #[test]
    fn missing_market_is_an_error() {
        let bundles = BTreeMap::new();
        assert!(fuse(&MarketCombo::parse("t2").unwrap(), &bundles).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let t1 = bundle(MarketId::T1, &[("u", "i", 3.0), ("v", "j", 2.5)], &[("u", "i")]);
        let bundles = BTreeMap::from([(MarketId::T1, t1)]);
        let combo = MarketCombo::parse("t1").unwrap();
        let f = fuse(&combo, &bundles).unwrap();
        let dir = tempfile::tempdir().unwrap();
        f.save(dir.path()).unwrap();
        let g = FusedDataset::load(dir.path(), &combo).unwrap();
        assert_eq!(f.store.entries().collect::<Vec<_>>(), g.store.entries().collect::<Vec<_>>());
        assert_eq!(g.store.user_map(), f.store.user_map());
        assert_eq!(g.provenance, f.provenance);
    }
}
