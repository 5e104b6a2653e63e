//! Average-cost MDP for peak age in a single cell with static users.
//!
//! State: the age vector, clipped at `h_cap`. Action: the user to serve.
//! Cost per slot: the largest age. Serving user `i` resets its age to 1 with
//! probability `p_i`; every other age grows by one.

use rayon::prelude::*;

use crate::engine::validate_probs;
use crate::error::{AoiError, Result};

/// Damping of the value update. Mixing the old table in makes the iteration
/// aperiodic without changing the optimal gain or policy.
const DAMPING: f64 = 0.9;
const MAX_STATES: u128 = 50_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub h_cap: u64,
    pub p: Vec<f64>,
    /// Differential values indexed by [`ValueTable::index`]; zero at the all-ones state.
    pub values: Vec<f64>,
    pub lambda: f64,
    /// Span of the last Bellman increment; the gain is within `span / 2` of `lambda`.
    pub span: f64,
    pub iterations: usize,
}

struct Layout {
    n: usize,
    h_cap: u64,
    stride: Vec<usize>,
}

impl Layout {
    fn new(n: usize, h_cap: u64) -> Self {
        let mut stride = Vec::with_capacity(n);
        let mut s = 1usize;
        for _ in 0..n {
            stride.push(s);
            s *= h_cap as usize;
        }
        Layout { n, h_cap, stride }
    }

    fn len(&self) -> usize {
        (self.h_cap as usize).pow(self.n as u32)
    }

    fn index(&self, ages: &[u64]) -> usize {
        ages.iter()
            .zip(&self.stride)
            .map(|(&a, &s)| (a.clamp(1, self.h_cap) - 1) as usize * s)
            .sum()
    }

    fn decode(&self, mut idx: usize, out: &mut [u64]) {
        let h = self.h_cap as usize;
        for a in out.iter_mut() {
            *a = (idx % h) as u64 + 1;
            idx /= h;
        }
    }

    /// Expected next value when serving each user, given the current ages.
    fn action_values(&self, ages: &[u64], p: &[f64], values: &[f64], out: &mut [f64]) {
        let grow = |a: u64| (a + 1).min(self.h_cap);
        let all: usize = ages
            .iter()
            .zip(&self.stride)
            .map(|(&a, &s)| (grow(a) - 1) as usize * s)
            .sum();
        let v_fail = values[all];
        for i in 0..self.n {
            let reset = all - (grow(ages[i]) - 1) as usize * self.stride[i];
            out[i] = p[i] * values[reset] + (1.0 - p[i]) * v_fail;
        }
    }
}

fn check_inputs(p: &[f64], h_cap: u64) -> Result<()> {
    validate_probs(p)?;
    if p.is_empty() {
        return Err(AoiError::invalid("need at least one user"));
    }
    if h_cap < 2 {
        return Err(AoiError::invalid("age cap must be at least 2"));
    }
    let states = (h_cap as u128).checked_pow(p.len() as u32).unwrap_or(u128::MAX);
    if states > MAX_STATES {
        return Err(AoiError::Budget {
            needed: states,
            limit: MAX_STATES,
        });
    }
    Ok(())
}

/// Lowest-index member of the near-minimal set.
fn argmin_lowest(q: &[f64]) -> usize {
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * (1.0 + min.abs());
    q.iter().position(|&x| x <= min + tol).unwrap_or(0)
}

pub fn relative_value_iteration(p: &[f64], h_cap: u64, tol: f64, max_iters: usize) -> Result<ValueTable> {
    check_inputs(p, h_cap)?;
    if !(tol > 0.0) {
        return Err(AoiError::invalid("tolerance must be positive"));
    }
    let layout = Layout::new(p.len(), h_cap);
    let n = p.len();
    let mut values = vec![0.0; layout.len()];
    let mut diff = vec![0.0; layout.len()];
    let mut span = f64::INFINITY;

    for iter in 1..=max_iters {
        diff.par_iter_mut().enumerate().for_each_init(
            || (vec![0u64; n], vec![0.0; n]),
            |(ages, q), (idx, d)| {
                layout.decode(idx, ages);
                layout.action_values(ages, p, &values, q);
                let best = q.iter().copied().fold(f64::INFINITY, f64::min);
                let cost = *ages.iter().max().unwrap() as f64;
                *d = cost + best - values[idx];
            },
        );
        let (lo, hi) = diff
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        span = hi - lo;
        if span <= tol {
            return Ok(ValueTable {
                h_cap,
                p: p.to_vec(),
                values,
                lambda: 0.5 * (lo + hi),
                span,
                iterations: iter,
            });
        }
        values.par_iter_mut().zip(&diff).for_each(|(v, d)| *v += DAMPING * d);
        let anchor = values[0];
        values.par_iter_mut().for_each(|v| *v -= anchor);
    }
    Err(AoiError::Convergence {
        iterations: max_iters,
        span,
    })
}

impl ValueTable {
    fn layout(&self) -> Layout {
        Layout::new(self.p.len(), self.h_cap)
    }

    pub fn n_users(&self) -> usize {
        self.p.len()
    }

    pub fn value(&self, ages: &[u64]) -> f64 {
        self.values[self.layout().index(ages)]
    }

    pub fn action_values(&self, ages: &[u64]) -> Vec<f64> {
        let mut q = vec![0.0; self.p.len()];
        let clipped: Vec<u64> = ages.iter().map(|a| (*a).clamp(1, self.h_cap)).collect();
        self.layout().action_values(&clipped, &self.p, &self.values, &mut q);
        q
    }

    /// Greedy action of the table; near-ties go to the lowest index.
    pub fn greedy_action(&self, ages: &[u64]) -> usize {
        argmin_lowest(&self.action_values(ages))
    }

    /// Number of states with every age at most `h_cap - margin` where the
    /// greedy action is not one of the oldest users.
    pub fn greedy_mismatches(&self, margin: u64) -> usize {
        let layout = self.layout();
        let limit = self.h_cap.saturating_sub(margin);
        (0..layout.len())
            .into_par_iter()
            .filter(|&idx| {
                let mut ages = vec![0; self.p.len()];
                layout.decode(idx, &mut ages);
                let top = *ages.iter().max().unwrap();
                top <= limit && ages[self.greedy_action(&ages)] != top
            })
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellmanCheck {
    pub max_residual: f64,
    pub states: usize,
    /// Whether the minimizing set equals the set of oldest users in every state.
    pub minimizer_is_max_age: bool,
    pub first_mismatch: Option<Vec<u64>>,
}

/// Plugs `V(h) = sum_j h_j / p_j` and `lambda = sum_j 1 / p_j` into the
/// peak-age Bellman equation on every state with all ages at most
/// `h_cap - 1`, where no clipping is involved.
pub fn verify_bellman_residual(p: &[f64], h_cap: u64) -> Result<BellmanCheck> {
    check_inputs(p, h_cap)?;
    let n = p.len();
    let inner = Layout::new(n, h_cap - 1);
    let lambda: f64 = p.iter().map(|x| 1.0 / x).sum();
    let v = |ages: &[u64]| -> f64 { ages.iter().zip(p).map(|(&h, &q)| h as f64 / q).sum() };

    let results: Vec<(f64, bool, usize)> = (0..inner.len())
        .into_par_iter()
        .map(|idx| {
            let mut ages = vec![0; n];
            inner.decode(idx, &mut ages);
            let grown: Vec<u64> = ages.iter().map(|a| a + 1).collect();
            let v_fail = v(&grown);
            let q: Vec<f64> = (0..n)
                .map(|i| {
                    let mut reset = grown.clone();
                    reset[i] = 1;
                    p[i] * v(&reset) + (1.0 - p[i]) * v_fail
                })
                .collect();
            let top = *ages.iter().max().unwrap();
            let best = q.iter().copied().fold(f64::INFINITY, f64::min);
            let residual = (lambda + v(&ages) - best - top as f64).abs();
            let tol = 1e-9 * (1.0 + best.abs());
            let same = (0..n).all(|i| (q[i] <= best + tol) == (ages[i] == top));
            (residual, same, idx)
        })
        .collect();

    let max_residual = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let first_mismatch = results.iter().find(|r| !r.1).map(|r| {
        let mut ages = vec![0; n];
        inner.decode(r.2, &mut ages);
        ages
    });
    Ok(BellmanCheck {
        max_residual,
        states: results.len(),
        minimizer_is_max_age: first_mismatch.is_none(),
        first_mismatch,
    })
}
