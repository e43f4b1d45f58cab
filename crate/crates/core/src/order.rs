//! The single total order used to rank slate candidates everywhere: primary
//! score descending, then secondary score descending, then item token
//! ascending.

use std::cmp::Ordering;

fn compare(
    a: usize,
    b: usize,
    primary: &[f64],
    secondary: Option<&[f64]>,
    tokens: &[String],
) -> Ordering {
    primary[b]
        .total_cmp(&primary[a])
        .then_with(|| match secondary {
            Some(s) => s[b].total_cmp(&s[a]),
            None => Ordering::Equal,
        })
        .then_with(|| tokens[a].cmp(&tokens[b]))
}

/// Candidate indices sorted best-first.
pub fn rank_order(primary: &[f64], secondary: Option<&[f64]>, tokens: &[String]) -> Vec<usize> {
    assert_eq!(primary.len(), tokens.len());
    if let Some(s) = secondary {
        assert_eq!(s.len(), tokens.len());
    }
    let mut idx: Vec<usize> = (0..tokens.len()).collect();
    idx.sort_by(|&a, &b| compare(a, b, primary, secondary, tokens));
    idx
}

/// 1-based rank of candidate `target` under [`rank_order`], without sorting.
pub fn rank_of(
    target: usize,
    primary: &[f64],
    secondary: Option<&[f64]>,
    tokens: &[String],
) -> usize {
    1 + (0..tokens.len())
        .filter(|&j| j != target && compare(j, target, primary, secondary, tokens).is_lt())
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn secondary_breaks_primary_ties() {
        let t = toks(&["i1", "i2"]);
        let order = rank_order(&[0.5, 0.5], Some(&[0.1, 0.9]), &t);
        assert_eq!(order, vec![1, 0]);
    }

    #[test]
    fn token_breaks_full_ties() {
        let t = toks(&["b", "a", "c"]);
        assert_eq!(rank_order(&[1.0, 1.0, 1.0], None, &t), vec![1, 0, 2]);
    }

    #[test]
    fn no_ties_follow_primary() {
        let t = toks(&["a", "b", "c"]);
        assert_eq!(
            rank_order(&[0.1, 0.9, 0.5], Some(&[9.0, 0.0, 5.0]), &t),
            vec![1, 2, 0]
        );
    }

    #[test]
    fn rank_of_agrees_with_sort() {
        let t = toks(&["d", "a", "c", "b", "e"]);
        let p = [0.3, 0.3, 0.9, 0.1, 0.3];
        let s = [0.0, 1.0, 0.0, 0.0, 1.0];
        let order = rank_order(&p, Some(&s), &t);
        for (pos, &i) in order.iter().enumerate() {
            assert_eq!(rank_of(i, &p, Some(&s), &t), pos + 1);
        }
    }
}
