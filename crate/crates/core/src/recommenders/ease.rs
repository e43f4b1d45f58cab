//! Closed-form ridge item autoencoder: `P = (XᵀX + λI)⁻¹`,
//! `B = I − P · diag(1 / diag P)` with a zero diagonal.

use ndarray::Array2;

use super::dense::spd_inverse;
use super::{ItemSimilarityModel, ItemWeights, ProfileWeighting};
use crate::error::Result;
use crate::store::InteractionStore;

pub fn ease(store: &InteractionStore, lambda: f64) -> Result<ItemSimilarityModel> {
    let n = store.n_items();
    let mut g: Array2<f64> = store.gram().clone();
    for i in 0..n {
        g[[i, i]] += lambda;
    }
    let p = spd_inverse(&g)?;
    let mut b = Array2::zeros((n, n));
    for j in 0..n {
        let pjj = p[[j, j]];
        for i in 0..n {
            if i != j {
                b[[i, j]] = -p[[i, j]] / pjj;
            }
        }
    }
    Ok(ItemSimilarityModel {
        n_items: n,
        weights: ItemWeights::Dense(b),
        profile: ProfileWeighting::Ratings,
    })
}
