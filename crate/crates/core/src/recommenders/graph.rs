//! Three-step random-walk item-item weights (P³α / RP³β).
//!
//! `W = P_iu^α · P_ui^α` with row-normalised transitions; RP³β divides
//! column `j` by `pop(j)^β` before each row keeps its `top_k` entries.

use super::sparse::{top_k, CsrMatrix};
use super::{ItemSimilarityModel, ItemWeights, ProfileWeighting};
use crate::par;
use crate::store::InteractionStore;

pub fn rp3(store: &InteractionStore, alpha: f64, beta: f64, k: usize) -> ItemSimilarityModel {
    let n_items = store.n_items();
    let user_tot: Vec<f64> = (0..store.n_users()).map(|u| store.user_row(u).1.iter().sum()).collect();
    let rows = par::map_range(n_items, |i| {
        let (users, ratings) = store.item_col(i);
        let item_tot: f64 = ratings.iter().sum();
        let mut acc = vec![0.0; n_items];
        let mut touched = Vec::new();
        for (&u, &rui) in users.iter().zip(ratings) {
            let p_iu = (rui / item_tot).powf(alpha);
            let (items, rs) = store.user_row(u as usize);
            for (&j, &ruj) in items.iter().zip(rs) {
                if acc[j as usize] == 0.0 {
                    touched.push(j);
                }
                acc[j as usize] += p_iu * (ruj / user_tot[u as usize]).powf(alpha);
            }
        }
        let row = touched
            .into_iter()
            .map(|j| {
                let w = acc[j as usize];
                let w = if beta != 0.0 { w / (store.popularity(j as usize) as f64).powf(beta) } else { w };
                (j, w)
            })
            .collect();
        top_k(row, k)
    });
    ItemSimilarityModel {
        n_items,
        weights: ItemWeights::Sparse(CsrMatrix::from_rows(n_items, rows)),
        profile: ProfileWeighting::Transition { alpha },
    }
}
