//! Power-weighted linear score blending with parameters shared inside
//! profile-length groups: `s(u,i) = Σ_R c_R(g(u)) · ŝ_R(u,i)^e_R(g(u))`
//! where `ŝ` are user-wise min-max normalised scores.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{slate_ndcg, NDCG_CUTOFF};
use crate::market::CandidateSlate;
use crate::table::ScoreTable;
use crate::tuner::{self, Config, ParamSpec, SearchOptions, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProfileGroup {
    Short,
    QuiteShort,
    QuiteLong,
    Long,
}

impl ProfileGroup {
    pub const ALL: [ProfileGroup; 4] = [
        ProfileGroup::Short,
        ProfileGroup::QuiteShort,
        ProfileGroup::QuiteLong,
        ProfileGroup::Long,
    ];

    /// `<5` short, `5..8` quite short, `8..12` quite long, `>=12` long.
    pub fn of(profile_length: usize) -> Self {
        match profile_length {
            0..=4 => ProfileGroup::Short,
            5..=7 => ProfileGroup::QuiteShort,
            8..=11 => ProfileGroup::QuiteLong,
            _ => ProfileGroup::Long,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            ProfileGroup::Short => "short",
            ProfileGroup::QuiteShort => "quite_short",
            ProfileGroup::QuiteLong => "quite_long",
            ProfileGroup::Long => "long",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ProfileGroup::Short => "Short",
            ProfileGroup::QuiteShort => "Quite Short",
            ProfileGroup::QuiteLong => "Quite Long",
            ProfileGroup::Long => "Long",
        }
    }

    fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.label() == s)
    }
}

pub fn assign_group(profile_length: usize) -> ProfileGroup {
    ProfileGroup::of(profile_length)
}

/// `x → (x−min)/(max−min)`; a constant slate maps to 0.5 everywhere.
pub fn normalize_minmax_userwise(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Shape("cannot normalise an empty slate".into()));
    }
    if let Some(x) = scores.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("score {x} in min-max normalisation")));
    }
    let (lo, hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if hi == lo {
        return Ok(vec![0.5; scores.len()]);
    }
    Ok(scores.iter().map(|x| (x - lo) / (hi - lo)).collect())
}

pub const COEF_RANGE: (f64, f64) = (0.0, 1.0);
pub const EXP_RANGE: (f64, f64) = (0.25, 4.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitParams {
    pub c: f64,
    pub e: f64,
}

/// Coefficient and exponent per unit and profile group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedParams {
    pub units: Vec<String>,
    pub params: Vec<[UnitParams; 4]>,
}

impl GroupedParams {
    /// Every unit gets `c = 1, e = 1` in every group.
    pub fn uniform(units: &[String]) -> Self {
        Self {
            units: units.to_vec(),
            params: vec![[UnitParams { c: 1.0, e: 1.0 }; 4]; units.len()],
        }
    }

    pub fn get(&self, unit: &str, group: ProfileGroup) -> Option<UnitParams> {
        self.units
            .iter()
            .position(|u| u == unit)
            .map(|i| self.params[i][group.index()])
    }

    pub fn validate(&self) -> Result<()> {
        for (u, ps) in self.units.iter().zip(&self.params) {
            for p in ps {
                let ok = p.c.is_finite()
                    && p.e.is_finite()
                    && (COEF_RANGE.0..=COEF_RANGE.1).contains(&p.c)
                    && (EXP_RANGE.0..=EXP_RANGE.1).contains(&p.e);
                if !ok {
                    return Err(Error::InvalidParam(format!("unit {u}: c={} e={} out of bounds", p.c, p.e)));
                }
            }
        }
        Ok(())
    }

    /// `unit<TAB>group<TAB>c<TAB>e` lines.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("unit\tgroup\tc\te\n");
        for (u, ps) in self.units.iter().zip(&self.params) {
            for g in ProfileGroup::ALL {
                let p = ps[g.index()];
                let _ = writeln!(s, "{u}\t{}\t{}\t{}", g.label(), p.c, p.e);
            }
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut out = GroupedParams { units: vec![], params: vec![] };
        for (n, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Decode(format!("grouped params line {}", n + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            let g = ProfileGroup::from_label(f[1]).ok_or_else(bad)?;
            let c: f64 = f[2].parse().map_err(|_| bad())?;
            let e: f64 = f[3].parse().map_err(|_| bad())?;
            let idx = match out.units.iter().position(|u| u == f[0]) {
                Some(i) => i,
                None => {
                    out.units.push(f[0].to_string());
                    out.params.push([UnitParams { c: 0.0, e: 1.0 }; 4]);
                    out.units.len() - 1
                }
            };
            out.params[idx][g.index()] = UnitParams { c, e };
        }
        out.validate()?;
        Ok(out)
    }
}

fn combine_slate(table: &ScoreTable, unit_params: &[[UnitParams; 4]], slate: usize, group: usize) -> Vec<f64> {
    let n = table.scores[0][slate].len();
    let mut out = vec![0.0; n];
    for (u, rows) in table.scores.iter().enumerate() {
        let p = unit_params[u][group];
        if p.c == 0.0 {
            continue;
        }
        for (o, &x) in out.iter_mut().zip(&rows[slate]) {
            *o += p.c * x.powf(p.e);
        }
    }
    out
}

fn aligned_params(table: &ScoreTable, params: &GroupedParams) -> Result<Vec<[UnitParams; 4]>> {
    table
        .units
        .iter()
        .map(|u| {
            params
                .units
                .iter()
                .position(|p| p == u)
                .map(|i| params.params[i])
                .ok_or_else(|| Error::Missing(format!("blend parameters for unit {u}")))
        })
        .collect()
}

/// Blended score of every slate candidate. `table` must already be
/// normalised into [0, 1].
pub fn combine(table: &ScoreTable, params: &GroupedParams, profile_lens: &[usize]) -> Result<Vec<Vec<f64>>> {
    if table.units.is_empty() {
        return Err(Error::Shape("no score units to combine".into()));
    }
    if profile_lens.len() != table.n_slates() {
        return Err(Error::Shape("profile lengths do not match slates".into()));
    }
    let aligned = aligned_params(table, params)?;
    Ok(crate::par::map_range(table.n_slates(), |s| {
        combine_slate(table, &aligned, s, ProfileGroup::of(profile_lens[s]).index())
    }))
}

fn group_space(units: &[String]) -> SearchSpace {
    let mut params = Vec::with_capacity(units.len() * 2);
    for i in 0..units.len() {
        params.push(ParamSpec::real(&format!("c{i}"), COEF_RANGE.0, COEF_RANGE.1));
        params.push(ParamSpec::log_real(&format!("e{i}"), EXP_RANGE.0, EXP_RANGE.1));
    }
    SearchSpace::new(params).expect("static bounds are valid")
}

fn decode_group(cfg: &Config, n_units: usize) -> Vec<UnitParams> {
    (0..n_units)
        .map(|i| UnitParams {
            c: cfg.f64(&format!("c{i}")).unwrap_or(1.0),
            e: cfg.f64(&format!("e{i}")).unwrap_or(1.0),
        })
        .collect()
}

/// Result of [`optimize_params`].
#[derive(Debug, Clone)]
pub struct BlendFit {
    pub params: GroupedParams,
    /// Mean validation NDCG@10 over all slates with the returned parameters.
    pub objective: f64,
}

/// Searches coefficients and exponents maximising validation NDCG@10. The
/// objective separates over users, so each profile group is searched on its
/// own slates with the full budget.
pub fn optimize_params(
    table: &ScoreTable,
    slates: &[CandidateSlate],
    profile_lens: &[usize],
    budget: usize,
    seed: u64,
) -> Result<BlendFit> {
    table.check_shape(slates)?;
    if table.units.is_empty() {
        return Err(Error::Shape("no score units to blend".into()));
    }
    if profile_lens.len() != slates.len() {
        return Err(Error::Shape("profile lengths do not match slates".into()));
    }
    let positives: Vec<usize> = slates
        .iter()
        .map(|s| {
            s.positive_index()
                .ok_or_else(|| Error::Missing(format!("validation positive for {}", s.user_id)))
        })
        .collect::<Result<_>>()?;
    let n_units = table.units.len();
    let space = group_space(&table.units);
    let mut params = vec![[UnitParams { c: 1.0, e: 1.0 }; 4]; n_units];
    let mut total = 0.0;
    for g in ProfileGroup::ALL {
        let members: Vec<usize> = (0..slates.len())
            .filter(|&s| ProfileGroup::of(profile_lens[s]) == g)
            .collect();
        let objective = |cfg: &Config| {
            let ups = decode_group(cfg, n_units);
            let mut full = vec![[UnitParams { c: 0.0, e: 1.0 }; 4]; n_units];
            for (f, p) in full.iter_mut().zip(&ups) {
                f[g.index()] = *p;
            }
            if members.is_empty() {
                return 0.0;
            }
            let sum: f64 = members
                .iter()
                .map(|&s| {
                    let blended = combine_slate(table, &full, s, g.index());
                    slate_ndcg(&slates[s].candidates, positives[s], &blended, None, NDCG_CUTOFF)
                })
                .sum();
            sum / members.len() as f64
        };
        let opts = SearchOptions::new(budget, seed.wrapping_add(g.index() as u64));
        let res = tuner::search(&space, objective, &opts)?;
        for (u, p) in decode_group(&res.best.config, n_units).into_iter().enumerate() {
            params[u][g.index()] = p;
        }
        total += res.best.objective * members.len() as f64;
    }
    let objective = if slates.is_empty() { 0.0 } else { total / slates.len() as f64 };
    Ok(BlendFit {
        params: GroupedParams { units: table.units.clone(), params },
        objective,
    })
}
