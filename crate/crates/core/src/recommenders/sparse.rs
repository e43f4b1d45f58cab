use crate::store::InteractionStore;
use ndarray::Array2;

/// Row-compressed sparse matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub ptr: Vec<usize>,
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-column lists of `(row, value)`.
    pub fn from_columns(n_rows: usize, columns: &[Vec<(u32, f64)>]) -> Self {
        let mut counts = vec![0usize; n_rows + 1];
        for col in columns {
            for &(r, _) in col {
                counts[r as usize + 1] += 1;
            }
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        let nnz = counts[n_rows];
        let mut fill = counts.clone();
        let mut idx = vec![0u32; nnz];
        let mut val = vec![0.0; nnz];
        // columns are visited in ascending order, so each row comes out sorted
        for (c, col) in columns.iter().enumerate() {
            for &(r, v) in col {
                let k = fill[r as usize];
                idx[k] = c as u32;
                val[k] = v;
                fill[r as usize] += 1;
            }
        }
        Self { n_rows, n_cols: columns.len(), ptr: counts, idx, val }
    }

    /// Builds from per-row lists of `(col, value)`; rows are sorted here.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut ptr = Vec::with_capacity(rows.len() + 1);
        ptr.push(0);
        let mut idx = Vec::new();
        let mut val = Vec::new();
        let n_rows = rows.len();
        for mut row in rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            for (c, v) in row {
                idx.push(c);
                val.push(v);
            }
            ptr.push(idx.len());
        }
        Self { n_rows, n_cols, ptr, idx, val }
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let s = self.ptr[r]..self.ptr[r + 1];
        (&self.idx[s.clone()], &self.val[s])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (idx, val) = self.row(r);
        idx.binary_search(&(c as u32)).map_or(0.0, |k| val[k])
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.n_rows, self.n_cols));
        for r in 0..self.n_rows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                d[[r, c as usize]] = v;
            }
        }
        d
    }
}

/// Keeps the `k` largest values (ties by lower index), returned by index.
pub fn top_k(mut entries: Vec<(u32, f64)>, k: usize) -> Vec<(u32, f64)> {
    if entries.len() > k {
        let cmp = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        entries.select_nth_unstable_by(k, cmp);
        entries.truncate(k);
    }
    entries.sort_unstable_by_key(|&(c, _)| c);
    entries
}

/// X · M for the user×item rating matrix X and a dense item×l matrix M.
pub fn x_times(store: &InteractionStore, m: &Array2<f64>) -> Array2<f64> {
    let l = m.ncols();
    let mut out = Array2::zeros((store.n_users(), l));
    for u in 0..store.n_users() {
        let (items, ratings) = store.user_row(u);
        let mut row = out.row_mut(u);
        for (&i, &r) in items.iter().zip(ratings) {
            row.scaled_add(r, &m.row(i as usize));
        }
    }
    out
}

/// Xᵀ · N for a dense user×l matrix N.
pub fn xt_times(store: &InteractionStore, n: &Array2<f64>) -> Array2<f64> {
    let l = n.ncols();
    let mut out = Array2::zeros((store.n_items(), l));
    for i in 0..store.n_items() {
        let (users, ratings) = store.item_col(i);
        let mut row = out.row_mut(i);
        for (&u, &r) in users.iter().zip(ratings) {
            row.scaled_add(r, &n.row(u as usize));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_ties_prefer_low_index() {
        let v = vec![(3, 1.0), (1, 2.0), (2, 1.0), (0, 0.5)];
        assert_eq!(top_k(v.clone(), 2), vec![(1, 2.0), (2, 1.0)]);
        assert_eq!(top_k(v, 10).len(), 4);
    }

    #[test]
    fn columns_and_rows_agree() {
        let cols = vec![vec![(1, 2.0)], vec![(0, 1.0), (1, 3.0)]];
        let a = CsrMatrix::from_columns(2, &cols);
        let b = CsrMatrix::from_rows(2, vec![vec![(1, 1.0)], vec![(1, 3.0), (0, 2.0)]]);
        assert_eq!(a, b);
        assert_eq!(a.get(1, 0), 2.0);
        assert_eq!(a.get(0, 0), 0.0);
    }
}
