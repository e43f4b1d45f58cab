//! Truncated SVD of the rating matrix. Item factors are the top right
//! singular vectors `V`; user factors are `U = X · V`, so a score is the
//! projection `x_u V Vᵀ`.

use ndarray::{s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dense::{sym_eigen_desc, thin_q};
use super::sparse::{x_times, xt_times};
use super::FactorModel;
use crate::error::{Error, Result};
use crate::store::InteractionStore;

const OVERSAMPLE: usize = 10;
const POWER_ITERS: usize = 4;

/// Top `f` eigenvectors (columns, descending eigenvalue) of a symmetric matrix.
fn top_eigvecs(sym: &Array2<f64>, f: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    let (vals, vecs) = sym_eigen_desc(sym)?;
    let lam = vals[..f].iter().map(|v| v.max(0.0)).collect();
    Ok((lam, vecs.slice(s![.., ..f]).to_owned()))
}

pub fn pure_svd(store: &InteractionStore, factors: usize, seed: u64) -> Result<FactorModel> {
    let (m, n) = (store.n_users(), store.n_items());
    if factors > m.min(n) {
        return Err(Error::InvalidParam(format!(
            "PureSVD factors {factors} exceed min(users, items) = {}",
            m.min(n)
        )));
    }
    let l = factors + OVERSAMPLE;
    let v = if l >= n || l >= m {
        top_eigvecs(store.gram(), factors)?.1
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let omega = Array2::from_shape_simple_fn((n, l), || StandardNormal.sample(&mut rng));
        let mut q = thin_q(&x_times(store, &omega));
        for _ in 0..POWER_ITERS {
            let z = thin_q(&xt_times(store, &q));
            q = thin_q(&x_times(store, &z));
        }
        // B = Qᵀ X, stored transposed (n × l).
        let bt = xt_times(store, &q);
        let (lam, w) = top_eigvecs(&bt.t().dot(&bt), factors)?;
        let mut v = bt.dot(&w);
        for (k, &ev) in lam.iter().enumerate() {
            let sigma = ev.sqrt();
            let mut col = v.column_mut(k);
            if sigma > 1e-12 {
                col /= sigma;
            } else {
                col.fill(0.0);
            }
        }
        v
    };
    let v = v.slice(s![.., ..factors]).to_owned();
    let u = x_times(store, &v);
    if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("PureSVD factors".into()));
    }
    debug_assert_eq!(u.len_of(Axis(1)), factors);
    Ok(FactorModel { user_factors: u, item_factors: v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::RatingTriple;
    use crate::store::build_store;

    /// Dense rank-2 ratings `a_u · b_i` (all positive).
    fn low_rank_store(m: usize, n: usize) -> InteractionStore {
        let mut t = Vec::new();
        for u in 0..m {
            for i in 0..n {
                let r = ((u % 3) + 1) as f64 * ((i % 4) + 1) as f64 + (u % 5) as f64 * (i % 2) as f64;
                t.push(RatingTriple::new(format!("u{u}"), format!("i{i}"), r));
            }
        }
        build_store(&t, None, None)
    }

    fn reconstruction_error(s: &InteractionStore, m: &FactorModel) -> f64 {
        let x = s.to_dense();
        let rec = m.user_factors.dot(&m.item_factors.t());
        (&x - &rec).iter().fold(0.0f64, |a, d| a.max(d.abs()))
    }

    #[test]
    fn full_rank_reconstructs_exactly() {
        let s = low_rank_store(12, 7);
        let m = pure_svd(&s, 7, 1).unwrap();
        assert!(reconstruction_error(&s, &m) < 1e-6);
    }

    #[test]
    fn randomized_path_recovers_low_rank() {
        let s = low_rank_store(80, 60);
        let m = pure_svd(&s, 2, 3).unwrap();
        assert!(reconstruction_error(&s, &m) < 1e-6);
    }

    #[test]
    fn too_many_factors() {
        let s = low_rank_store(5, 4);
        assert!(pure_svd(&s, 5, 0).is_err());
    }
}
