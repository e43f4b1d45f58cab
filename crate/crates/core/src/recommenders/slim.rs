//! Sparse linear item-item model with non-negative elastic-net weights.
//!
//! Column `j` minimises
//! `(1 / 2N) ‖x_j − X w‖² + l1 ‖w‖₁ + (l2 / 2) ‖w‖²` with `w ≥ 0` and
//! `w_j = 0`, by coordinate descent in Gram space. Because the Gram matrix
//! and the weights are non-negative, an item with `G_ij / N ≤ l1` can never
//! enter the support, so only the remaining candidates are visited.

use super::sparse::CsrMatrix;
use super::{ItemSimilarityModel, ItemWeights, ProfileWeighting};
use crate::error::{Error, Result};
use crate::par;
use crate::store::InteractionStore;

pub const MAX_SWEEPS: usize = 100;
pub const TOLERANCE: f64 = 1e-4;

/// Weights of column `j` as `(item, weight)` pairs with non-zero weight.
pub(crate) fn solve_column(g: &ndarray::Array2<f64>, n_users: f64, j: usize, l1: f64, l2: f64) -> Result<Vec<(u32, f64)>> {
    let cand: Vec<usize> = (0..g.nrows()).filter(|&i| i != j && g[[i, j]] / n_users > l1).collect();
    let mut w = vec![0.0; cand.len()];
    // q[a] = Σ_b G[cand a, cand b] w_b
    let mut q = vec![0.0; cand.len()];
    let sweep = |coords: &mut dyn Iterator<Item = usize>, w: &mut [f64], q: &mut [f64]| {
        let mut max_delta = 0.0f64;
        for a in coords {
            let i = cand[a];
            let gii = g[[i, i]];
            let rho = (g[[i, j]] - q[a] + gii * w[a]) / n_users;
            let new = (rho - l1).max(0.0) / (gii / n_users + l2);
            let delta = new - w[a];
            if delta != 0.0 {
                for (b, &k) in cand.iter().enumerate() {
                    q[b] += delta * g[[k, i]];
                }
                w[a] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        max_delta
    };
    // Full sweeps alternate with sweeps restricted to the current support;
    // convergence is only declared after a full sweep.
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let full = sweep(&mut (0..cand.len()), &mut w, &mut q);
        sweeps += 1;
        if !full.is_finite() {
            return Err(Error::NotConverged { algorithm: "SLIM".into(), residual: full });
        }
        if full < TOLERANCE {
            break;
        }
        while sweeps < MAX_SWEEPS {
            let support: Vec<usize> = (0..cand.len()).filter(|&a| w[a] > 0.0).collect();
            let d = sweep(&mut support.into_iter(), &mut w, &mut q);
            sweeps += 1;
            if !d.is_finite() {
                return Err(Error::NotConverged { algorithm: "SLIM".into(), residual: d });
            }
            if d < TOLERANCE {
                break;
            }
        }
    }
    Ok(cand
        .into_iter()
        .zip(w)
        .filter(|&(_, v)| v > 0.0)
        .map(|(i, v)| (i as u32, v))
        .collect())
}

pub fn slim(store: &InteractionStore, l1: f64, l2: f64) -> Result<ItemSimilarityModel> {
    let g = store.gram();
    let n = store.n_users() as f64;
    let columns = par::try_map_range(store.n_items(), |j| solve_column(g, n, j, l1, l2))?;
    Ok(ItemSimilarityModel {
        n_items: store.n_items(),
        weights: ItemWeights::Sparse(CsrMatrix::from_columns(store.n_items(), &columns)),
        profile: ProfileWeighting::Ratings,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::store;
    use super::*;

    fn sample() -> InteractionStore {
        let mut e = Vec::new();
        let names: Vec<String> = (0..30).map(|k| format!("n{k}")).collect();
        for u in 0..20 {
            for i in 0..10 {
                if (u * 5 + i * 7) % 3 != 0 {
                    e.push((names[u].as_str(), names[i + 20].as_str(), 1.0 + ((u * i) % 4) as f64));
                }
            }
        }
        store(&e)
    }

    #[test]
    fn weights_nonnegative_with_zero_diagonal() {
        let s = sample();
        let w = slim(&s, 1e-3, 1e-3).unwrap().to_dense();
        for i in 0..s.n_items() {
            assert_eq!(w[[i, i]], 0.0);
        }
        assert!(w.iter().all(|&v| v >= 0.0));
        assert!(w.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn optimality_conditions_hold() {
        let s = sample();
        let (l1, l2) = (1e-2, 1e-2);
        let w = slim(&s, l1, l2).unwrap().to_dense();
        let x = s.to_dense();
        let n = s.n_users() as f64;
        for j in 0..s.n_items() {
            let r = &x.column(j) - &x.dot(&w.column(j));
            for i in (0..s.n_items()).filter(|&i| i != j) {
                let grad = -x.column(i).dot(&r) / n + l2 * w[[i, j]];
                if w[[i, j]] > 0.0 {
                    assert!((grad + l1).abs() < 1e-3, "active ({i},{j}) grad {grad}");
                } else {
                    assert!(grad + l1 >= -1e-3, "inactive ({i},{j}) grad {grad}");
                }
            }
        }
    }

    #[test]
    fn larger_l2_shrinks_weights() {
        let s = sample();
        let mut last = f64::INFINITY;
        for l2 in [1e-4, 1e-2, 1.0, 100.0] {
            let norm: f64 = slim(&s, 1e-3, l2).unwrap().to_dense().iter().map(|v| v.abs()).sum();
            assert!(norm <= last + 1e-9);
            last = norm;
        }
    }
}
