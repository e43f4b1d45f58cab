//! Per-slate score columns shared by the ensembling stages.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::market::CandidateSlate;

/// Scores of several named units (recommenders or datasets) for a list of
/// slates: `scores[unit][slate][candidate]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    pub units: Vec<String>,
    pub scores: Vec<Vec<Vec<f64>>>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, unit: impl Into<String>, scores: Vec<Vec<f64>>) {
        self.units.push(unit.into());
        self.scores.push(scores);
    }

    pub fn unit(&self, name: &str) -> Option<&Vec<Vec<f64>>> {
        self.units.iter().position(|u| u == name).map(|i| &self.scores[i])
    }

    pub fn n_slates(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    /// Checks that every unit covers every slate candidate.
    pub fn check_shape(&self, slates: &[CandidateSlate]) -> Result<()> {
        for (u, rows) in self.units.iter().zip(&self.scores) {
            if rows.len() != slates.len()
                || rows.iter().zip(slates).any(|(r, s)| r.len() != s.candidates.len())
            {
                return Err(Error::Shape(format!("unit {u} does not cover the slates")));
            }
        }
        Ok(())
    }

    /// User-wise min-max normalised copy.
    pub fn normalized(&self) -> Result<ScoreTable> {
        let scores = self
            .scores
            .iter()
            .map(|rows| rows.iter().map(|r| crate::linear::normalize_minmax_userwise(r)).collect())
            .collect::<Result<_>>()?;
        Ok(ScoreTable { units: self.units.clone(), scores })
    }

    /// Restriction to the given units, in the given order.
    pub fn select(&self, units: &[String]) -> Result<ScoreTable> {
        let mut out = ScoreTable::new();
        for u in units {
            let s = self
                .unit(u)
                .ok_or_else(|| Error::Missing(format!("score column for {u}")))?;
            out.push(u.clone(), s.clone());
        }
        Ok(out)
    }

    /// The rows for `to`, looked up by user among the slates `from` this
    /// table is aligned with.
    pub fn realign(&self, from: &[CandidateSlate], to: &[CandidateSlate]) -> Result<ScoreTable> {
        let pos: HashMap<&str, usize> = from.iter().enumerate().map(|(i, s)| (s.user_id.as_str(), i)).collect();
        let rows = to
            .iter()
            .map(|s| {
                let i = *pos
                    .get(s.user_id.as_str())
                    .ok_or_else(|| Error::Missing(format!("scores for slate of {}", s.user_id)))?;
                if from[i].candidates != s.candidates {
                    return Err(Error::Slate { user: s.user_id.clone(), msg: "candidate lists differ".into() });
                }
                Ok(i)
            })
            .collect::<Result<Vec<_>>>()?;
        let scores = self.scores.iter().map(|u| rows.iter().map(|&i| u[i].clone()).collect()).collect();
        Ok(ScoreTable { units: self.units.clone(), scores })
    }

    /// `unit<TAB>user<TAB>comma-separated scores`, one line per (unit, slate).
    pub fn to_tsv(&self, slates: &[CandidateSlate]) -> Result<String> {
        self.check_shape(slates)?;
        let mut s = String::new();
        for (u, rows) in self.units.iter().zip(&self.scores) {
            for (slate, row) in slates.iter().zip(rows) {
                let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(s, "{u}\t{}\t{}", slate.user_id, vals.join(",")).unwrap();
            }
        }
        Ok(s)
    }

    /// Inverse of [`ScoreTable::to_tsv`] for the same slates.
    pub fn from_tsv(text: &str, slates: &[CandidateSlate]) -> Result<ScoreTable> {
        let bad = |m: String| Error::Decode(format!("score table: {m}"));
        let pos: HashMap<&str, usize> = slates.iter().enumerate().map(|(i, s)| (s.user_id.as_str(), i)).collect();
        let mut out = ScoreTable::new();
        let mut filled: Vec<Vec<bool>> = Vec::new();
        for line in text.lines() {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad(format!("bad line {line:?}")));
            }
            let u = match out.units.iter().position(|x| x == f[0]) {
                Some(u) => u,
                None => {
                    out.push(f[0], vec![Vec::new(); slates.len()]);
                    filled.push(vec![false; slates.len()]);
                    out.units.len() - 1
                }
            };
            let i = *pos.get(f[1]).ok_or_else(|| bad(format!("unknown user {}", f[1])))?;
            let vals = f[2]
                .split(',')
                .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad score {v}"))))
                .collect::<Result<Vec<_>>>()?;
            out.scores[u][i] = vals;
            filled[u][i] = true;
        }
        if filled.iter().flatten().any(|f| !f) {
            return Err(bad("missing rows".into()));
        }
        out.check_shape(slates)?;
        Ok(out)
    }
}
