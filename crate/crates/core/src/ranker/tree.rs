//! Regression trees grown leaf-wise with exact greedy splits on Newton
//! statistics.

use super::RankingData;
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// `x < threshold` goes left; a missing `x` follows `missing_left`.
    Split { feature: usize, threshold: f64, missing_left: bool, left: usize, right: usize },
    Leaf { value: f64 },
}

/// Node 0 is the root. Leaf values are unscaled Newton steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        Self { nodes: vec![Node::Leaf { value }] }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut n = 0;
        loop {
            match self.nodes[n] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, missing_left, left, right } => {
                    let v = x[feature];
                    let go_left = if v.is_nan() { missing_left } else { v < threshold };
                    n = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, n: usize) -> usize {
            match t.nodes[n] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Split features in node order (preorder of creation).
    pub fn split_features(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect()
    }
}

pub(crate) struct TreeParams {
    pub max_leaves: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2: f64,
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    gain: f64,
    feature: usize,
    threshold: f64,
    missing_left: bool,
}

/// Rows of one open leaf: all rows plus, per candidate feature, the rows
/// with a present value sorted by that value.
struct OpenLeaf {
    node: usize,
    depth: usize,
    rows: Vec<u32>,
    sorted: Vec<SortedColumn>,
    g: f64,
    h: f64,
    best: Option<SplitChoice>,
}

/// Present rows of one feature in ascending value order, values alongside.
#[derive(Default)]
struct SortedColumn {
    rows: Vec<u32>,
    vals: Vec<f64>,
}

impl SortedColumn {
    fn partition(&self, goes_left: &[bool]) -> (SortedColumn, SortedColumn) {
        let (mut l, mut r) = (SortedColumn::default(), SortedColumn::default());
        for (&row, &v) in self.rows.iter().zip(&self.vals) {
            let side = if goes_left[row as usize] { &mut l } else { &mut r };
            side.rows.push(row);
            side.vals.push(v);
        }
        (l, r)
    }
}

fn leaf_value(g: f64, h: f64, l2: f64) -> f64 {
    if h + l2 > 0.0 { -g / (h + l2) } else { 0.0 }
}

fn score(g: f64, h: f64, l2: f64) -> f64 {
    if h + l2 > 0.0 { g * g / (h + l2) } else { 0.0 }
}

fn best_for_feature(
    gh: &[[f64; 2]],
    feature: usize,
    col: &SortedColumn,
    leaf: (f64, f64, usize),
    p: &TreeParams,
) -> Option<SplitChoice> {
    let (g_tot, h_tot, n_tot) = leaf;
    let n_present = col.rows.len();
    let n_miss = n_tot - n_present;
    let (g_present, h_present) = if n_miss == 0 {
        (g_tot, h_tot)
    } else {
        col.rows.iter().fold((0.0, 0.0), |(g, h), &r| (g + gh[r as usize][0], h + gh[r as usize][1]))
    };
    let (g_miss, h_miss) = (g_tot - g_present, h_tot - h_present);
    let parent = score(g_tot, h_tot, p.l2);
    let mut best: Option<SplitChoice> = None;
    let mut consider = |gl: f64, hl: f64, nl: usize, threshold: f64, missing_left: bool| {
        let nr = n_tot - nl;
        if nl < p.min_samples_leaf || nr < p.min_samples_leaf {
            return;
        }
        let gain = score(gl, hl, p.l2) + score(g_tot - gl, h_tot - hl, p.l2) - parent;
        if gain > 1e-12 && best.is_none_or(|b| gain > b.gain) {
            best = Some(SplitChoice { gain, feature, threshold, missing_left });
        }
    };
    let (mut gl, mut hl) = (0.0, 0.0);
    for k in 0..n_present.saturating_sub(1) {
        let [g, h] = gh[col.rows[k] as usize];
        gl += g;
        hl += h;
        let (a, b) = (col.vals[k], col.vals[k + 1]);
        if a == b {
            continue;
        }
        let mid = a + (b - a) / 2.0;
        let threshold = if mid > a { mid } else { b };
        consider(gl, hl, k + 1, threshold, false);
        if n_miss > 0 {
            consider(gl + g_miss, hl + h_miss, k + 1 + n_miss, threshold, true);
        }
    }
    if n_miss > 0 && n_present > 0 {
        // present values left, missing right
        consider(g_present, h_present, n_present, f64::INFINITY, false);
    }
    best
}

fn find_split(
    gh: &[[f64; 2]],
    features: &[usize],
    leaf: &OpenLeaf,
    p: &TreeParams,
) -> Option<SplitChoice> {
    if leaf.rows.len() < 2 * p.min_samples_leaf || leaf.depth >= p.max_depth {
        return None;
    }
    let stats = (leaf.g, leaf.h, leaf.rows.len());
    let per_feature = par::map_range(features.len(), |k| {
        best_for_feature(gh, features[k], &leaf.sorted[k], stats, p)
    });
    // lowest feature index wins ties
    per_feature
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<SplitChoice>, c| match acc {
            Some(a) if a.gain >= c.gain => Some(a),
            _ => Some(c),
        })
}

/// Grows one tree on the rows `rows` using the candidate `features`;
/// `presorted[f]` lists every row with a present value of feature `f` in
/// ascending value order (ties by row).
pub(crate) fn grow(
    data: &RankingData,
    grad: &[f64],
    hess: &[f64],
    rows: Vec<u32>,
    features: &[usize],
    presorted: &[Vec<u32>],
    in_sample: &[bool],
    p: &TreeParams,
) -> RegressionTree {
    let sorted: Vec<SortedColumn> = par::map_range(features.len(), |k| {
        let f = features[k];
        let rows: Vec<u32> = presorted[f].iter().copied().filter(|&r| in_sample[r as usize]).collect();
        let vals = rows.iter().map(|&r| data.value(r as usize, f)).collect();
        SortedColumn { rows, vals }
    });
    let gh: Vec<[f64; 2]> = grad.iter().zip(hess).map(|(&g, &h)| [g, h]).collect();
    let g: f64 = rows.iter().map(|&r| grad[r as usize]).sum();
    let h: f64 = rows.iter().map(|&r| hess[r as usize]).sum();
    let mut nodes = vec![Node::Leaf { value: leaf_value(g, h, p.l2) }];
    let mut root = OpenLeaf { node: 0, depth: 0, rows, sorted, g, h, best: None };
    root.best = find_split(&gh, features, &root, p);
    let mut open = vec![root];
    let mut n_leaves = 1;
    let mut goes_left = vec![false; data.n_samples()];
    while n_leaves < p.max_leaves {
        // highest gain first; earliest-created leaf on ties
        let pick = open
            .iter()
            .enumerate()
            .filter_map(|(k, l)| l.best.map(|b| (k, b.gain)))
            .fold(None, |acc: Option<(usize, f64)>, c| match acc {
                Some(a) if a.1 >= c.1 => Some(a),
                _ => Some(c),
            });
        let Some((k, _)) = pick else { break };
        let leaf = open.swap_remove(k);
        let split = leaf.best.unwrap();
        for &r in &leaf.rows {
            let v = data.value(r as usize, split.feature);
            goes_left[r as usize] = if v.is_nan() { split.missing_left } else { v < split.threshold };
        }
        let (rows_l, rows_r): (Vec<u32>, Vec<u32>) = leaf.rows.iter().partition(|&&r| goes_left[r as usize]);
        let (sorted_l, sorted_r): (Vec<_>, Vec<_>) =
            par::map_range(leaf.sorted.len(), |k| leaf.sorted[k].partition(&goes_left)).into_iter().unzip();
        let stats = |rs: &[u32]| {
            rs.iter().fold((0.0, 0.0), |(g, h), &r| (g + grad[r as usize], h + hess[r as usize]))
        };
        let (gl, hl) = stats(&rows_l);
        let (gr, hr) = stats(&rows_r);
        let (left, right) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { value: leaf_value(gl, hl, p.l2) });
        nodes.push(Node::Leaf { value: leaf_value(gr, hr, p.l2) });
        nodes[leaf.node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            missing_left: split.missing_left,
            left,
            right,
        };
        n_leaves += 1;
        let depth = leaf.depth + 1;
        for (node, rows, sorted, g, h) in [(left, rows_l, sorted_l, gl, hl), (right, rows_r, sorted_r, gr, hr)] {
            let mut child = OpenLeaf { node, depth, rows, sorted, g, h, best: None };
            child.best = find_split(&gh, features, &child, p);
            open.push(child);
        }
    }
    RegressionTree { nodes }
}
