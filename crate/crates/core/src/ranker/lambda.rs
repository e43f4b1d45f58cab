//! LambdaRank pairwise gradients weighted by |ΔNDCG@k|.

use super::RankingData;
use crate::par;

fn discount(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// 1-based rank of every sample in a group; higher score first, ties by index.
pub(crate) fn ranks(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut rank = vec![0; scores.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    rank
}

fn ideal_dcg(labels: &[f64], k: usize) -> f64 {
    let n_pos = labels.iter().filter(|&&l| l > 0.0).count();
    (1..=n_pos).map(|r| discount(r, k)).sum()
}

/// NDCG@k of one group, `None` when it has no positive.
pub(crate) fn group_ndcg(scores: &[f64], labels: &[f64], k: usize) -> Option<f64> {
    let idcg = ideal_dcg(labels, k);
    if idcg == 0.0 {
        return None;
    }
    let rank = ranks(scores);
    let dcg: f64 = (0..scores.len()).filter(|&i| labels[i] > 0.0).map(|i| discount(rank[i], k)).sum();
    Some(dcg / idcg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
    /// Groups left at zero gradient because they had no positive or only
    /// one sample.
    pub skipped_groups: usize,
}

fn group_gradients(scores: &[f64], labels: &[f64], sigma: f64, k: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = scores.len();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let idcg = ideal_dcg(labels, k);
    if n < 2 || idcg == 0.0 {
        return None;
    }
    let rank = ranks(scores);
    for i in (0..n).filter(|&i| labels[i] > 0.0) {
        for j in (0..n).filter(|&j| labels[j] == 0.0) {
            let weight = (labels[i] - labels[j]).abs() * (discount(rank[i], k) - discount(rank[j], k)).abs() / idcg;
            if weight == 0.0 {
                continue;
            }
            let rho = 1.0 / (1.0 + (sigma * (scores[i] - scores[j])).exp());
            let g = sigma * rho * weight;
            let h = sigma * sigma * rho * (1.0 - rho) * weight;
            grad[i] -= g;
            grad[j] += g;
            hess[i] += h;
            hess[j] += h;
        }
    }
    Some((grad, hess))
}

/// Per-sample first and second derivatives of the |ΔNDCG|-weighted pairwise
/// logistic loss, with pair weights taken from the current ranking.
pub fn lambda_gradients(data: &RankingData, scores: &[f64], sigma: f64, k: usize) -> Gradients {
    let per_group = par::map_range(data.n_groups(), |g| {
        let r = data.group(g);
        group_gradients(&scores[r.clone()], &data.labels()[r], sigma, k)
    });
    let mut grad = Vec::with_capacity(scores.len());
    let mut hess = Vec::with_capacity(scores.len());
    let mut skipped = 0;
    for (g, out) in per_group.into_iter().enumerate() {
        match out {
            Some((gr, he)) => {
                grad.extend(gr);
                hess.extend(he);
            }
            None => {
                skipped += 1;
                let len = data.group(g).len();
                grad.extend(std::iter::repeat_n(0.0, len));
                hess.extend(std::iter::repeat_n(0.0, len));
            }
        }
    }
    if skipped > 0 {
        log::warn!("lambda gradients: skipped {skipped} groups without a positive");
    }
    Gradients { grad, hess, skipped_groups: skipped }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(labels: Vec<f64>) -> RankingData {
        let n = labels.len();
        RankingData::new(0, vec![], labels, &[n]).unwrap()
    }

    #[test]
    fn equal_scores_give_half_rho() {
        let d = data(vec![0.0, 1.0]);
        let g = lambda_gradients(&d, &[0.0, 0.0], 1.0, 10);
        // positive at rank 2, negative at rank 1
        let w = 1.0 - 1.0 / 3f64.log2();
        assert!((g.grad[1] + 0.5 * w).abs() < 1e-15);
        assert!((g.grad[0] - 0.5 * w).abs() < 1e-15);
        assert!((g.hess[0] - 0.25 * w).abs() < 1e-15);
    }

    #[test]
    fn swap_delta_at_top() {
        let w = 1.0 - 1.0 / 3f64.log2();
        assert!((w - 0.36907).abs() < 1e-5);
        let d = data(vec![1.0, 0.0]);
        let g = lambda_gradients(&d, &[2.0, 1.0], 1.0, 10);
        let rho = 1.0 / (1.0 + 1f64.exp());
        assert!((g.grad[0] + rho * w).abs() < 1e-15);
    }

    #[test]
    fn groups_without_positive_are_skipped() {
        let d = RankingData::new(0, vec![], vec![0.0, 0.0, 1.0, 0.0], &[2, 2]).unwrap();
        let g = lambda_gradients(&d, &[0.1, 0.2, 0.3, 0.4], 1.0, 10);
        assert_eq!(g.skipped_groups, 1);
        assert_eq!(&g.grad[..2], &[0.0, 0.0]);
        assert!(g.grad[2] < 0.0);
    }

    #[test]
    fn ndcg_of_group() {
        assert_eq!(group_ndcg(&[0.9, 0.1], &[1.0, 0.0], 10), Some(1.0));
        assert_eq!(group_ndcg(&[0.5, 0.5, 0.5, 0.5], &[0.0, 0.0, 1.0, 0.0], 10), Some(0.5));
        assert_eq!(group_ndcg(&[0.5], &[0.0], 10), None);
    }
}
