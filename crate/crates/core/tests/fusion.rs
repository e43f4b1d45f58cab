use std::collections::BTreeMap;

use xmarket::fusion::{enumerate_combos, fuse, fuse_with, MarketCombo};
use xmarket::{CandidateSlate, Error, MarketBundle, MarketId, RatingTriple};

fn bundle(m: MarketId, raw: &[(&str, &str, f64)], core: &[(&str, &str)]) -> MarketBundle {
    let raw = raw.iter().map(|&(u, i, r)| RatingTriple::new(u, i, r)).collect();
    let core = core.iter().map(|&(u, i)| RatingTriple::new(u, i, 1.0)).collect();
    MarketBundle::new(m, raw, core, vec![], vec![], BTreeMap::new(), None).unwrap()
}

fn rating(d: &xmarket::fusion::FusedDataset, u: &str, i: &str) -> Option<f64> {
    let s = &d.store;
    s.rating(s.user_map().get(u)?, s.item_map().get(i)?)
}

#[test]
fn duplicate_pairs_are_averaged_after_unit_conversion() {
    let mut b = BTreeMap::new();
    b.insert(MarketId::S1, bundle(MarketId::S1, &[("a", "x", 3.0), ("a", "x", 5.0), ("a", "y", 2.0)], &[("a", "y"), ("a", "z")]));
    b.insert(MarketId::T1, bundle(MarketId::T1, &[("b", "x", 1.0)], &[]));
    let combo = MarketCombo::parse("s1-t1").unwrap();
    let d = fuse(&combo, &b).unwrap();
    assert_eq!(rating(&d, "a", "x"), Some(4.0));
    assert_eq!(rating(&d, "a", "y"), Some(3.0));
    assert_eq!(rating(&d, "a", "z"), Some(4.0));
    assert_eq!(rating(&d, "b", "x"), Some(1.0));
    assert_eq!(d.store.n_users(), 2);
    let d2 = fuse_with(&combo, &b, 2.0).unwrap();
    assert_eq!(rating(&d2, "a", "y"), Some(2.0));
}

#[test]
fn shared_users_are_rejected() {
    let mut b = BTreeMap::new();
    b.insert(MarketId::S2, bundle(MarketId::S2, &[("a", "x", 3.0)], &[]));
    b.insert(MarketId::T2, bundle(MarketId::T2, &[("a", "y", 3.0)], &[]));
    let err = fuse(&MarketCombo::parse("s2-t2").unwrap(), &b).unwrap_err();
    assert!(matches!(err, Error::UserOverlap { .. }));
}

#[test]
fn combination_counts() {
    let all = enumerate_combos(&MarketId::SOURCES, &MarketId::TARGETS);
    assert_eq!(all.len(), 24);
    for t in MarketId::TARGETS {
        assert_eq!(all.iter().filter(|c| c.contains(t)).count(), 16);
    }
    let ids: std::collections::BTreeSet<String> = all.iter().map(|c| c.id()).collect();
    assert_eq!(ids.len(), 24);
    assert!(all.iter().all(|c| MarketCombo::parse(&c.id()).unwrap() == *c));
}

#[test]
fn validation_slates_need_known_users() {
    let slate = CandidateSlate { user_id: "ghost".into(), candidates: vec!["x".into()], positive: None };
    let mut q = BTreeMap::new();
    q.insert("ghost".to_string(), "x".to_string());
    let r = MarketBundle::new(MarketId::T1, vec![RatingTriple::new("a", "y", 1.0)], vec![], vec![slate], vec![], q, None);
    assert!(matches!(r, Err(Error::Slate { .. })));
}
