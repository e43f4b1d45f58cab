//! Deduplicated sparse rating matrix with bidirectional token maps.

use std::collections::HashMap;
use std::sync::OnceLock;

use ndarray::Array2;

use crate::market::RatingTriple;

/// Bijection between external tokens and contiguous dense indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    forward: HashMap<String, usize>,
    backward: Vec<String>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.backward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.backward.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.forward.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.backward[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.backward
    }

    /// Returns the index of `token`, appending it if unseen.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.forward.get(token) {
            return i;
        }
        let i = self.backward.len();
        self.forward.insert(token.to_string(), i);
        self.backward.push(token.to_string());
        i
    }
}

impl FromIterator<String> for IdMap {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        let mut m = IdMap::new();
        for t in iter {
            m.insert(&t);
        }
        m
    }
}

/// Immutable user×item rating matrix kept in both CSR (by user) and CSC (by
/// item) layout. At most one entry per (user, item); all ratings finite and
/// positive.
#[derive(Debug)]
pub struct InteractionStore {
    user_map: IdMap,
    item_map: IdMap,
    user_ptr: Vec<usize>,
    user_items: Vec<u32>,
    user_ratings: Vec<f64>,
    item_ptr: Vec<usize>,
    item_users: Vec<u32>,
    item_ratings: Vec<f64>,
    gram: OnceLock<Array2<f64>>,
}

impl Clone for InteractionStore {
    fn clone(&self) -> Self {
        Self {
            user_map: self.user_map.clone(),
            item_map: self.item_map.clone(),
            user_ptr: self.user_ptr.clone(),
            user_items: self.user_items.clone(),
            user_ratings: self.user_ratings.clone(),
            item_ptr: self.item_ptr.clone(),
            item_users: self.item_users.clone(),
            item_ratings: self.item_ratings.clone(),
            gram: OnceLock::new(),
        }
    }
}

impl InteractionStore {
    /// Builds a store from dense `(user, item, rating)` entries. Duplicate
    /// pairs are averaged. Entries with non-positive or non-finite ratings
    /// are rejected by the caller (see [`build_store`]).
    pub fn from_entries(
        user_map: IdMap,
        item_map: IdMap,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let n_users = user_map.len();
        let n_items = item_map.len();
        let mut sums: HashMap<(u32, u32), (f64, u32)> = HashMap::new();
        let mut order: Vec<(u32, u32)> = Vec::new();
        for (u, i, r) in entries {
            assert!(u < n_users && i < n_items, "entry index out of range");
            let key = (u as u32, i as u32);
            let slot = sums.entry(key).or_insert_with(|| {
                order.push(key);
                (0.0, 0)
            });
            slot.0 += r;
            slot.1 += 1;
        }
        order.sort_unstable();
        let mut user_ptr = vec![0usize; n_users + 1];
        let mut user_items = Vec::with_capacity(order.len());
        let mut user_ratings = Vec::with_capacity(order.len());
        for &(u, i) in &order {
            let (s, c) = sums[&(u, i)];
            user_ptr[u as usize + 1] += 1;
            user_items.push(i);
            user_ratings.push(s / c as f64);
        }
        for u in 0..n_users {
            user_ptr[u + 1] += user_ptr[u];
        }

        let mut item_ptr = vec![0usize; n_items + 1];
        for &i in &user_items {
            item_ptr[i as usize + 1] += 1;
        }
        for i in 0..n_items {
            item_ptr[i + 1] += item_ptr[i];
        }
        let mut fill = item_ptr.clone();
        let mut item_users = vec![0u32; user_items.len()];
        let mut item_ratings = vec![0.0; user_items.len()];
        for u in 0..n_users {
            for k in user_ptr[u]..user_ptr[u + 1] {
                let i = user_items[k] as usize;
                item_users[fill[i]] = u as u32;
                item_ratings[fill[i]] = user_ratings[k];
                fill[i] += 1;
            }
        }
        Self {
            user_map,
            item_map,
            user_ptr,
            user_items,
            user_ratings,
            item_ptr,
            item_users,
            item_ratings,
            gram: OnceLock::new(),
        }
    }

    pub fn empty() -> Self {
        Self::from_entries(IdMap::new(), IdMap::new(), std::iter::empty())
    }

    pub fn n_users(&self) -> usize {
        self.user_map.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_map.len()
    }

    pub fn nnz(&self) -> usize {
        self.user_items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.user_items.is_empty()
    }

    pub fn user_map(&self) -> &IdMap {
        &self.user_map
    }

    pub fn item_map(&self) -> &IdMap {
        &self.item_map
    }

    /// Items and ratings of one user, items ascending.
    pub fn user_row(&self, user: usize) -> (&[u32], &[f64]) {
        let r = self.user_ptr[user]..self.user_ptr[user + 1];
        (&self.user_items[r.clone()], &self.user_ratings[r])
    }

    /// Users and ratings of one item, users ascending.
    pub fn item_col(&self, item: usize) -> (&[u32], &[f64]) {
        let r = self.item_ptr[item]..self.item_ptr[item + 1];
        (&self.item_users[r.clone()], &self.item_ratings[r])
    }

    pub fn profile_len(&self, user: usize) -> usize {
        self.user_ptr[user + 1] - self.user_ptr[user]
    }

    pub fn popularity(&self, item: usize) -> usize {
        self.item_ptr[item + 1] - self.item_ptr[item]
    }

    pub fn user_mean(&self, user: usize) -> f64 {
        let (_, r) = self.user_row(user);
        if r.is_empty() {
            0.0
        } else {
            r.iter().sum::<f64>() / r.len() as f64
        }
    }

    pub fn item_mean(&self, item: usize) -> f64 {
        let (_, r) = self.item_col(item);
        if r.is_empty() {
            0.0
        } else {
            r.iter().sum::<f64>() / r.len() as f64
        }
    }

    pub fn rating(&self, user: usize, item: usize) -> Option<f64> {
        let (items, ratings) = self.user_row(user);
        items
            .binary_search(&(item as u32))
            .ok()
            .map(|k| ratings[k])
    }

    pub fn density(&self) -> f64 {
        let cells = self.n_users() as f64 * self.n_items() as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.nnz() as f64 / cells
        }
    }

    /// All entries in (user, item) order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_users()).flat_map(move |u| {
            let (items, ratings) = self.user_row(u);
            items
                .iter()
                .zip(ratings)
                .map(move |(&i, &r)| (u, i as usize, r))
        })
    }

    /// Dense item×item Gram matrix XᵀX, computed once and cached.
    pub fn gram(&self) -> &Array2<f64> {
        self.gram.get_or_init(|| {
            let n = self.n_items();
            let mut g = Array2::<f64>::zeros((n, n));
            for u in 0..self.n_users() {
                let (items, ratings) = self.user_row(u);
                for (a, &i) in items.iter().enumerate() {
                    for (b, &j) in items.iter().enumerate() {
                        g[[i as usize, j as usize]] += ratings[a] * ratings[b];
                    }
                }
            }
            g
        })
    }

    /// Dense user×item matrix; meant for small stores and tests.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut x = Array2::zeros((self.n_users(), self.n_items()));
        for (u, i, r) in self.entries() {
            x[[u, i]] = r;
        }
        x
    }
}

/// Builds a store from rating triples. Tokens get dense indices in order of
/// first appearance (after any tokens already present in supplied maps);
/// duplicate (user, item) pairs collapse to the mean of their ratings.
pub fn build_store(
    triples: &[RatingTriple],
    user_map: Option<IdMap>,
    item_map: Option<IdMap>,
) -> InteractionStore {
    let mut users = user_map.unwrap_or_default();
    let mut items = item_map.unwrap_or_default();
    let mut entries = Vec::with_capacity(triples.len());
    for t in triples {
        let u = users.insert(&t.user_id);
        let i = items.insert(&t.item_id);
        entries.push((u, i, t.rating));
    }
    InteractionStore::from_entries(users, items, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(u: &str, i: &str, r: f64) -> RatingTriple {
        RatingTriple::new(u, i, r)
    }

    #[test]
    fn duplicates_collapse_to_mean() {
        let s = build_store(&[t("u1", "i1", 3.0), t("u1", "i1", 5.0)], None, None);
        assert_eq!(s.nnz(), 1);
        assert_eq!(s.rating(0, 0), Some(4.0));
    }

    #[test]
    fn single_triple() {
        let s = build_store(&[t("u1", "i1", 3.0)], None, None);
        assert_eq!((s.n_users(), s.n_items()), (1, 1));
    }

    #[test]
    fn empty_store() {
        let s = build_store(&[], None, None);
        assert_eq!((s.n_users(), s.n_items(), s.nnz()), (0, 0, 0));
        assert_eq!(s.gram().dim(), (0, 0));
    }

    #[test]
    fn first_appearance_order_and_csc() {
        let s = build_store(
            &[t("b", "y", 1.0), t("a", "x", 2.0), t("b", "x", 3.0)],
            None,
            None,
        );
        assert_eq!(s.user_map().tokens(), &["b", "a"]);
        assert_eq!(s.item_map().tokens(), &["y", "x"]);
        let (users, ratings) = s.item_col(1);
        assert_eq!(users, &[0, 1]);
        assert_eq!(ratings, &[3.0, 2.0]);
        assert_eq!(s.popularity(1), 2);
        assert_eq!(s.profile_len(0), 2);
        assert!((s.user_mean(0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn supplied_maps_are_extended() {
        let users: IdMap = ["z".to_string()].into_iter().collect();
        let s = build_store(&[t("a", "x", 2.0)], Some(users), None);
        assert_eq!(s.n_users(), 2);
        assert_eq!(s.user_map().get("a"), Some(1));
        assert_eq!(s.profile_len(0), 0);
    }

    #[test]
    fn gram_matches_dense_product() {
        let s = build_store(
            &[t("a", "x", 2.0), t("a", "y", 1.0), t("b", "y", 3.0)],
            None,
            None,
        );
        let x = s.to_dense();
        let g = x.t().dot(&x);
        assert_eq!(s.gram(), &g);
    }
}
