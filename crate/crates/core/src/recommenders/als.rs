//! Implicit-feedback matrix factorisation by alternating least squares.
//!
//! Preference is 1 on observed entries and 0 elsewhere; confidence is
//! `1 + conf_alpha · r`. Each half-sweep refines every row with a few
//! conjugate-gradient steps started from its current value.

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::FactorModel;
use crate::error::{Error, Result};
use crate::par;
use crate::store::InteractionStore;

#[derive(Debug, Clone, PartialEq)]
pub struct AlsParams {
    pub factors: usize,
    pub reg: f64,
    pub conf_alpha: f64,
    pub iterations: usize,
    pub seed: u64,
    pub cg_steps: usize,
    pub init_scale: f64,
}

impl Default for AlsParams {
    fn default() -> Self {
        Self { factors: 32, reg: 0.01, conf_alpha: 10.0, iterations: 15, seed: 0, cg_steps: 3, init_scale: 0.01 }
    }
}

/// `Σ_{u,i} c_ui (p_ui − x_u·y_i)² + reg (‖X‖² + ‖Y‖²)`.
pub fn als_objective(store: &InteractionStore, x: &Array2<f64>, y: &Array2<f64>, params: &AlsParams) -> f64 {
    let yty = y.t().dot(y);
    let mut total = 0.0;
    for u in 0..store.n_users() {
        let xu = x.row(u);
        total += xu.dot(&yty.dot(&xu));
        let (items, ratings) = store.user_row(u);
        for (&i, &r) in items.iter().zip(ratings) {
            let s = xu.dot(&y.row(i as usize));
            let c = 1.0 + params.conf_alpha * r;
            total += c * (1.0 - s) * (1.0 - s) - s * s;
        }
    }
    total + params.reg * (x.iter().map(|v| v * v).sum::<f64>() + y.iter().map(|v| v * v).sum::<f64>())
}

/// Runs conjugate gradient on `A z = b` where
/// `A = FᵀF + Σ_k (c_k − 1) f_k f_kᵀ + reg I` over the observed `(k, c_k)`.
fn solve_row(
    start: ArrayView1<f64>,
    other: &Array2<f64>,
    gram: &Array2<f64>,
    observed: (&[u32], &[f64]),
    params: &AlsParams,
) -> Array1<f64> {
    let apply = |v: &Array1<f64>| {
        let mut out = gram.dot(v) + params.reg * v;
        for (&k, &r) in observed.0.iter().zip(observed.1) {
            let f = other.row(k as usize);
            out.scaled_add(params.conf_alpha * r * f.dot(v), &f);
        }
        out
    };
    let mut b = Array1::zeros(start.len());
    for (&k, &r) in observed.0.iter().zip(observed.1) {
        b.scaled_add(1.0 + params.conf_alpha * r, &other.row(k as usize));
    }
    let mut z = start.to_owned();
    let mut res = &b - &apply(&z);
    let mut p = res.clone();
    let mut rr = res.dot(&res);
    for _ in 0..params.cg_steps {
        if rr < 1e-20 {
            break;
        }
        let ap = apply(&p);
        let step = rr / p.dot(&ap);
        z.scaled_add(step, &p);
        res.scaled_add(-step, &ap);
        let rr_new = res.dot(&res);
        p = &res + &(rr_new / rr * &p);
        rr = rr_new;
    }
    z
}

fn half_sweep<'s>(
    target: &Array2<f64>,
    other: &Array2<f64>,
    params: &AlsParams,
    rows: impl Fn(usize) -> (&'s [u32], &'s [f64]) + Sync,
) -> Array2<f64> {
    let gram = other.t().dot(other);
    let solved = par::map_range(target.nrows(), |r| solve_row(target.row(r), other, &gram, rows(r), params));
    let mut out = Array2::zeros(target.raw_dim());
    for (r, v) in solved.into_iter().enumerate() {
        out.row_mut(r).assign(&v);
    }
    out
}

/// Fits the model and records the objective after every full sweep.
pub fn fit_als_traced(store: &InteractionStore, params: &AlsParams) -> Result<(FactorModel, Vec<f64>)> {
    if params.factors == 0 || params.iterations == 0 {
        return Err(Error::InvalidParam("ALS needs factors >= 1 and iterations >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(0.0, params.init_scale).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let mut x = Array2::from_shape_simple_fn((store.n_users(), params.factors), || normal.sample(&mut rng));
    let mut y = Array2::from_shape_simple_fn((store.n_items(), params.factors), || normal.sample(&mut rng));
    let mut trace = Vec::with_capacity(params.iterations);
    for _ in 0..params.iterations {
        x = half_sweep(&x, &y, params, |u| store.user_row(u));
        y = half_sweep(&y, &x, params, |i| store.item_col(i));
        let obj = als_objective(store, &x, &y, params);
        if !obj.is_finite() {
            return Err(Error::NotConverged { algorithm: "ALS".into(), residual: obj });
        }
        trace.push(obj);
    }
    Ok((FactorModel { user_factors: x, item_factors: y }, trace))
}

pub fn fit_als(store: &InteractionStore, params: &AlsParams) -> Result<FactorModel> {
    fit_als_traced(store, params).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::super::tests::store;
    use super::*;

    fn sample() -> InteractionStore {
        let names: Vec<String> = (0..60).map(|k| format!("t{k}")).collect();
        let mut e = Vec::new();
        for u in 0..40 {
            for i in 0..20 {
                if (u * 3 + i * 11) % 5 < 2 {
                    e.push((names[u].as_str(), names[40 + i].as_str(), 1.0 + ((u + 2 * i) % 5) as f64));
                }
            }
        }
        store(&e)
    }

    #[test]
    fn objective_never_increases() {
        let s = sample();
        let p = AlsParams { factors: 6, iterations: 15, ..Default::default() };
        let (_, trace) = fit_als_traced(&s, &p).unwrap();
        assert_eq!(trace.len(), 15);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let s = sample();
        let p = AlsParams { factors: 4, iterations: 3, seed: 9, ..Default::default() };
        assert_eq!(fit_als(&s, &p).unwrap(), fit_als(&s, &p).unwrap());
    }

    #[test]
    fn observed_entries_score_higher() {
        let s = sample();
        let p = AlsParams { factors: 8, iterations: 15, cg_steps: 8, ..Default::default() };
        let m = fit_als(&s, &p).unwrap();
        let (mut obs, mut unobs) = (Vec::new(), Vec::new());
        for u in 0..s.n_users() {
            for i in 0..s.n_items() {
                let v = m.user_factors.row(u).dot(&m.item_factors.row(i));
                if s.rating(u, i).is_some() { obs.push(v) } else { unobs.push(v) }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&obs) > mean(&unobs) + 0.3);
    }
}
