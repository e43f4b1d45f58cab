//! Dense factorisations on ndarray matrices, backed by faer.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use ndarray::Array2;

use crate::error::{Error, Result};

fn to_faer(a: &Array2<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
pub fn spd_inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let llt = to_faer(a)
        .llt(Side::Lower)
        .map_err(|e| Error::Linalg(format!("Cholesky factorisation failed: {e:?}")))?;
    let inv = llt.solve(Mat::<f64>::identity(n, n));
    Ok(from_faer(inv.as_ref()))
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
pub fn sym_eigen_desc(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let eig = to_faer(a)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("symmetric eigensolver failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let mut order: Vec<usize> = (0..s.nrows()).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]).then(x.cmp(&y)));
    let vals = order.iter().map(|&k| s[k]).collect();
    let vecs = Array2::from_shape_fn((u.nrows(), order.len()), |(i, j)| u[(i, order[j])]);
    Ok((vals, vecs))
}

/// Orthonormal basis of the column space (thin Q of a QR factorisation).
pub fn thin_q(a: &Array2<f64>) -> Array2<f64> {
    let q = to_faer(a).qr().compute_thin_Q();
    from_faer(q.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
    }

    fn max_abs(a: &Array2<f64>) -> f64 {
        a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    fn spd(n: usize) -> Array2<f64> {
        let x = random(n + 5, n, 7);
        x.t().dot(&x) + Array2::<f64>::eye(n)
    }

    #[test]
    fn inverse_residual_at_moderate_size() {
        let a = spd(300);
        let p = spd_inverse(&a).unwrap();
        assert!(max_abs(&(p.dot(&a) - Array2::<f64>::eye(300))) < 1e-9);
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut a = Array2::<f64>::eye(3);
        a[[1, 1]] = -1.0;
        assert!(matches!(spd_inverse(&a), Err(Error::Linalg(_))));
    }

    #[test]
    fn eigen_reconstructs_descending() {
        let a = spd(120);
        let (vals, vecs) = sym_eigen_desc(&a).unwrap();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let d = Array2::from_diag(&ndarray::Array1::from(vals));
        let rec = vecs.dot(&d).dot(&vecs.t());
        assert!(max_abs(&(rec - &a)) < 1e-8 * max_abs(&a));
    }

    #[test]
    fn thin_q_is_orthonormal_and_spans() {
        let a = random(500, 20, 3);
        let q = thin_q(&a);
        assert_eq!(q.dim(), (500, 20));
        assert!(max_abs(&(q.t().dot(&q) - Array2::<f64>::eye(20))) < 1e-12);
        let proj = q.dot(&q.t().dot(&a));
        assert!(max_abs(&(proj - &a)) < 1e-10);
    }
}
