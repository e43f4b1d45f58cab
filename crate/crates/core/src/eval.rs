//! NDCG@10 evaluation and per-profile-length reports.
//!
//! With one binary positive per slate the ideal DCG is 1, so NDCG@k is
//! `1 / log2(rank + 1)` when the positive ranks within the top `k`, else 0.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linear::ProfileGroup;
use crate::market::CandidateSlate;
use crate::order::rank_of;
use crate::par;

pub const NDCG_CUTOFF: usize = 10;

/// NDCG@k for a 1-based rank of the single positive.
pub fn ndcg_from_rank(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// NDCG@k of an already ranked candidate list.
pub fn ndcg_at_k(ranked: &[String], positive: &str, k: usize) -> Result<f64> {
    let pos = ranked
        .iter()
        .position(|c| c == positive)
        .ok_or_else(|| Error::Missing(format!("positive {positive} not in ranked list")))?;
    Ok(ndcg_from_rank(pos + 1, k))
}

/// NDCG@k of one slate scored by `primary` (and optional tie-breaking
/// `secondary`), ranked with the pipeline's total order.
pub fn slate_ndcg(
    candidates: &[String],
    positive: usize,
    primary: &[f64],
    secondary: Option<&[f64]>,
    k: usize,
) -> f64 {
    ndcg_from_rank(rank_of(positive, primary, secondary, candidates), k)
}

/// Mean NDCG@k over slates that carry a positive.
pub fn mean_ndcg(slates: &[CandidateSlate], scores: &[Vec<f64>], k: usize) -> f64 {
    let vals = par::map_range(slates.len(), |s| {
        slates[s]
            .positive_index()
            .map(|p| slate_ndcg(&slates[s].candidates, p, &scores[s], None, k))
    });
    let (sum, n) = vals
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean NDCG@10 overall and per profile-length group.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub overall: f64,
    pub group_mean: [f64; 4],
    pub group_count: [usize; 4],
}

impl RunMetrics {
    pub fn n_users(&self) -> usize {
        self.group_count.iter().sum()
    }
}

/// Scores every slate (ranked by the total order) against `qrels`.
/// `profile_lens` maps each slate user to its training profile length.
pub fn evaluate_run(
    slates: &[CandidateSlate],
    scores: &[Vec<f64>],
    secondary: Option<&[Vec<f64>]>,
    qrels: &BTreeMap<String, String>,
    profile_lens: &BTreeMap<String, usize>,
) -> Result<RunMetrics> {
    if scores.len() != slates.len() || secondary.is_some_and(|s| s.len() != slates.len()) {
        return Err(Error::Shape("score rows do not match slates".into()));
    }
    let per_slate = par::try_map_range(slates.len(), |s| -> Result<(usize, f64)> {
        let slate = &slates[s];
        let pos_tok = qrels
            .get(&slate.user_id)
            .ok_or_else(|| Error::Missing(format!("qrel for user {}", slate.user_id)))?;
        let pos = slate
            .candidates
            .iter()
            .position(|c| c == pos_tok)
            .ok_or_else(|| Error::Missing(format!("qrel item of {} not in slate", slate.user_id)))?;
        let len = *profile_lens
            .get(&slate.user_id)
            .ok_or_else(|| Error::Missing(format!("profile length of {}", slate.user_id)))?;
        let v = slate_ndcg(
            &slate.candidates,
            pos,
            &scores[s],
            secondary.map(|x| x[s].as_slice()),
            NDCG_CUTOFF,
        );
        Ok((ProfileGroup::of(len).index(), v))
    })?;
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    let mut total = 0.0;
    for (g, v) in per_slate {
        sums[g] += v;
        counts[g] += 1;
        total += v;
    }
    let n: usize = counts.iter().sum();
    let mut group_mean = [0.0; 4];
    for g in 0..4 {
        if counts[g] > 0 {
            group_mean[g] = sums[g] / counts[g] as f64;
        }
    }
    Ok(RunMetrics {
        overall: if n == 0 { 0.0 } else { total / n as f64 },
        group_mean,
        group_count: counts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub model: String,
    pub variant: String,
    pub metrics: RunMetrics,
}

/// Evaluation table: one row per (dataset, model, variant). "Avg" is the
/// plain mean over users.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn push(&mut self, dataset: &str, model: &str, variant: &str, metrics: RunMetrics) {
        self.rows.push(ReportRow {
            dataset: dataset.into(),
            model: model.into(),
            variant: variant.into(),
            metrics,
        });
    }

    pub fn render_tsv(&self) -> String {
        let mut s = String::from("dataset\tmodel\tvariant");
        for g in ProfileGroup::ALL {
            let _ = write!(s, "\t{}\tn_{}", g.label(), g.label());
        }
        s.push_str("\tavg\n");
        for r in &self.rows {
            let _ = write!(s, "{}\t{}\t{}", r.dataset, r.model, r.variant);
            for g in 0..4 {
                let _ = write!(s, "\t{:.5}\t{}", r.metrics.group_mean[g], r.metrics.group_count[g]);
            }
            let _ = writeln!(s, "\t{:.5}", r.metrics.overall);
        }
        s
    }

    /// Aligned text table: dataset rows, then model/variant, group columns and
    /// the user-mean "Avg" column.
    pub fn render_table(&self) -> String {
        let mut header: Vec<String> = vec!["Dataset".into(), "Model".into(), "Variant".into()];
        header.extend(ProfileGroup::ALL.iter().map(|g| g.title().to_string()));
        header.push("Avg".into());
        header.push("Users".into());
        let mut rows = vec![header];
        for r in &self.rows {
            let mut row = vec![r.dataset.clone(), r.model.clone(), r.variant.clone()];
            for g in 0..4 {
                row.push(if r.metrics.group_count[g] == 0 {
                    "-".into()
                } else {
                    format!("{:.5}", r.metrics.group_mean[g])
                });
            }
            row.push(format!("{:.5}", r.metrics.overall));
            row.push(r.metrics.n_users().to_string());
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (n, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, w))| if c < 3 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", cells.join(" | ").trim_end());
            if n == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                let _ = writeln!(out, "{}", rule.join("-+-"));
            }
        }
        out
    }
}
