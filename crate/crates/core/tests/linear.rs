use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmarket::linear::{assign_group, combine, normalize_minmax_userwise, optimize_params, ProfileGroup};
use xmarket::table::ScoreTable;
use xmarket::CandidateSlate;

#[test]
fn profile_length_boundaries() {
    assert_eq!(assign_group(4), ProfileGroup::Short);
    assert_eq!(assign_group(5), ProfileGroup::QuiteShort);
    assert_eq!(assign_group(7), ProfileGroup::QuiteShort);
    assert_eq!(assign_group(8), ProfileGroup::QuiteLong);
    assert_eq!(assign_group(11), ProfileGroup::QuiteLong);
    assert_eq!(assign_group(12), ProfileGroup::Long);
}

#[test]
fn minmax_maps_to_unit_interval() {
    let v = normalize_minmax_userwise(&[2.0, 4.0, 3.0]).unwrap();
    assert_eq!(v, vec![0.0, 1.0, 0.5]);
    let flat = normalize_minmax_userwise(&[1.0, 1.0]).unwrap();
    assert!(flat.iter().all(|x| x.is_finite()));
}

#[test]
fn optimizer_finds_the_oracle_column() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (n_users, n) = (200, 30);
    let mut slates = Vec::new();
    let mut lens = Vec::new();
    let mut cols = vec![Vec::new(); 4];
    for u in 0..n_users {
        let cands: Vec<String> = (0..n).map(|i| format!("I{i:03}")).collect();
        let pos = rng.random_range(0..n);
        slates.push(CandidateSlate { user_id: format!("U{u}"), positive: Some(cands[pos].clone()), candidates: cands });
        lens.push([3, 6, 9, 15][u % 4]);
        for (c, col) in cols.iter_mut().enumerate() {
            let row: Vec<f64> = (0..n)
                .map(|i| if c == 0 && i == pos { 1.0 } else { rng.random::<f64>() * if c == 0 { 0.5 } else { 1.0 } })
                .collect();
            col.push(row);
        }
    }
    let mut table = ScoreTable::new();
    for (c, col) in cols.into_iter().enumerate() {
        table.push(if c == 0 { "oracle".to_string() } else { format!("noise{c}") }, col);
    }
    let fit = optimize_params(&table, &slates, &lens, 100, 1).unwrap();
    assert!(fit.objective >= 0.98, "{}", fit.objective);
    let blended = combine(&table.normalized().unwrap(), &fit.params, &lens).unwrap();
    assert_eq!(blended.len(), n_users);
}
