//! Cosine neighbourhood models with additive shrinkage:
//! `cos(a, b) = (x_a · x_b) / (‖x_a‖ ‖x_b‖ + shrink)`.

use super::sparse::{top_k, CsrMatrix};
use super::{ItemSimilarityModel, ItemWeights, ProfileWeighting, UserSimilarityModel};
use crate::par;
use crate::store::InteractionStore;

fn item_norms(store: &InteractionStore) -> Vec<f64> {
    (0..store.n_items())
        .map(|i| store.item_col(i).1.iter().map(|r| r * r).sum::<f64>().sqrt())
        .collect()
}

fn user_norms(store: &InteractionStore) -> Vec<f64> {
    (0..store.n_users())
        .map(|u| store.user_row(u).1.iter().map(|r| r * r).sum::<f64>().sqrt())
        .collect()
}

/// Similarities of every other item to item `j`, unpruned.
fn item_column(store: &InteractionStore, norms: &[f64], shrink: f64, j: usize) -> Vec<(u32, f64)> {
    let mut acc = vec![0.0; store.n_items()];
    let mut touched = Vec::new();
    let (users, ratings) = store.item_col(j);
    for (&u, &ruj) in users.iter().zip(ratings) {
        let (items, rs) = store.user_row(u as usize);
        for (&i, &rui) in items.iter().zip(rs) {
            if i as usize == j {
                continue;
            }
            if acc[i as usize] == 0.0 {
                touched.push(i);
            }
            acc[i as usize] += ruj * rui;
        }
    }
    touched
        .into_iter()
        .map(|i| (i, acc[i as usize] / (norms[i as usize] * norms[j] + shrink)))
        .collect()
}

/// Item-item cosine; column `j` keeps its `top_k` most similar items.
pub fn item_knn(store: &InteractionStore, k: usize, shrink: f64) -> ItemSimilarityModel {
    let norms = item_norms(store);
    let columns = par::map_range(store.n_items(), |j| top_k(item_column(store, &norms, shrink, j), k));
    ItemSimilarityModel {
        n_items: store.n_items(),
        weights: ItemWeights::Sparse(CsrMatrix::from_columns(store.n_items(), &columns)),
        profile: ProfileWeighting::Ratings,
    }
}

/// User-user cosine; every user keeps its `top_k` most similar users.
pub fn user_knn(store: &InteractionStore, k: usize, shrink: f64) -> UserSimilarityModel {
    let norms = user_norms(store);
    let neighbors = par::map_range(store.n_users(), |u| {
        let mut acc = vec![0.0; store.n_users()];
        let mut touched = Vec::new();
        let (items, rs) = store.user_row(u);
        for (&i, &rui) in items.iter().zip(rs) {
            let (users, rv) = store.item_col(i as usize);
            for (&v, &rvi) in users.iter().zip(rv) {
                if v as usize == u {
                    continue;
                }
                if acc[v as usize] == 0.0 {
                    touched.push(v);
                }
                acc[v as usize] += rui * rvi;
            }
        }
        let sims = touched
            .into_iter()
            .map(|v| (v, acc[v as usize] / (norms[u] * norms[v as usize] + shrink)))
            .collect();
        top_k(sims, k)
    });
    UserSimilarityModel { n_items: store.n_items(), neighbors }
}
