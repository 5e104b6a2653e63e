//! Offline optimum over all feasible decision sequences for a fully known
//! channel and occupancy script.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::engine::{Decision, Occupancy};
use crate::error::{AoiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Avg,
    Peak,
}

impl Metric {
    /// Per-slot cost in integer form: sum of ages or maximum age.
    pub fn slot_cost(&self, ages: &[u64]) -> u128 {
        match self {
            Metric::Avg => ages.iter().map(|&a| a as u128).sum(),
            Metric::Peak => ages.iter().copied().max().unwrap_or(0) as u128,
        }
    }

    /// Normalizes a summed slot cost into the time-averaged metric.
    pub fn normalize(&self, total: u128, n_users: usize, slots: usize) -> f64 {
        let denom = match self {
            Metric::Avg => (n_users * slots) as f64,
            Metric::Peak => slots as f64,
        };
        total as f64 / denom
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Avg => "avg",
            Metric::Peak => "peak",
        })
    }
}

impl FromStr for Metric {
    type Err = AoiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "avg" => Ok(Metric::Avg),
            "peak" => Ok(Metric::Peak),
            other => Err(AoiError::invalid(format!("unknown metric '{other}' (avg|peak)"))),
        }
    }
}

/// Enumeration limits. `max_states` caps memoized states for the memoized
/// search and visited leaves for the plain depth-first search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_states: u64,
    pub max_horizon: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_states: 2_000_000,
            max_horizon: 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub metric: Metric,
    /// Time-averaged cost, normalized like the simulator's cost functions.
    pub cost: f64,
    /// Unnormalized sum of per-slot costs.
    pub total: u128,
    pub decisions: Vec<Decision>,
}

/// Every feasible decision of one slot: each nonempty cell serves one of its
/// occupants or idles. Occupants come first in index order, idle last.
pub fn slot_choices(occ: &Occupancy) -> Vec<Decision> {
    let mut out = vec![Decision::idle(occ.n_cells())];
    for (cell, members) in occ.buckets().into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let mut next = Vec::with_capacity(out.len() * (members.len() + 1));
        for d in &out {
            for &u in &members {
                let mut e = d.clone();
                e.assign(cell, u);
                next.push(e);
            }
            next.push(d.clone());
        }
        out = next;
    }
    out
}

fn check_instance(channels: &[Vec<bool>], mobility: &[Occupancy], budget: &OracleBudget) -> Result<usize> {
    if channels.is_empty() || channels.len() != mobility.len() {
        return Err(AoiError::invalid(format!(
            "oracle needs matching nonempty scripts ({} channel rows, {} occupancy rows)",
            channels.len(),
            mobility.len()
        )));
    }
    let n = mobility[0].n_users();
    if channels.iter().any(|r| r.len() != n) || mobility.iter().any(|o| o.n_users() != n) {
        return Err(AoiError::invalid("oracle scripts disagree on N"));
    }
    if channels.len() > budget.max_horizon {
        return Err(AoiError::Budget {
            needed: channels.len() as u128,
            limit: budget.max_horizon as u128,
        });
    }
    Ok(n)
}

fn apply(ages: &[u64], d: &Decision, occ: &Occupancy, channel: &[bool]) -> Vec<u64> {
    ages.iter()
        .enumerate()
        .map(|(i, &a)| if channel[i] && d.is_scheduled(i, occ) { 1 } else { a + 1 })
        .collect()
}

struct Memo<'a> {
    channels: &'a [Vec<bool>],
    mobility: &'a [Occupancy],
    choices: Vec<Vec<Decision>>,
    metric: Metric,
    /// Per slot: age vector in force before the slot -> (best remaining cost, choice index).
    table: Vec<HashMap<Vec<u64>, (u128, usize)>>,
    states: u64,
    limit: u64,
}

impl Memo<'_> {
    fn solve(&mut self, t: usize, ages: &[u64]) -> Result<u128> {
        if t == self.channels.len() {
            return Ok(0);
        }
        if let Some(&(v, _)) = self.table[t].get(ages) {
            return Ok(v);
        }
        self.states += 1;
        if self.states > self.limit {
            return Err(AoiError::Budget {
                needed: self.states as u128,
                limit: self.limit as u128,
            });
        }
        let mut best: Option<(u128, usize)> = None;
        for k in 0..self.choices[t].len() {
            let next = apply(ages, &self.choices[t][k], &self.mobility[t], &self.channels[t]);
            let v = self.metric.slot_cost(&next) + self.solve(t + 1, &next)?;
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, k));
            }
        }
        let best = best.expect("at least the idle choice exists");
        self.table[t].insert(ages.to_vec(), best);
        Ok(best.0)
    }
}

/// Exact offline optimum by exhaustive search memoized on (slot, ages).
/// Ties between optimal decisions go to the earliest choice in
/// [`slot_choices`] order.
pub fn brute_force_opt(
    channels: &[Vec<bool>],
    mobility: &[Occupancy],
    metric: Metric,
    budget: &OracleBudget,
) -> Result<OracleSolution> {
    let n = check_instance(channels, mobility, budget)?;
    let mut memo = Memo {
        channels,
        mobility,
        choices: mobility.iter().map(slot_choices).collect(),
        metric,
        table: vec![HashMap::new(); channels.len()],
        states: 0,
        limit: budget.max_states,
    };
    let mut ages = vec![1u64; n];
    let total = memo.solve(0, &ages)?;
    let mut decisions = Vec::with_capacity(channels.len());
    for t in 0..channels.len() {
        let (_, k) = memo.table[t][&ages];
        let d = memo.choices[t][k].clone();
        ages = apply(&ages, &d, &mobility[t], &channels[t]);
        decisions.push(d);
    }
    Ok(OracleSolution {
        metric,
        cost: metric.normalize(total, n, channels.len()),
        total,
        decisions,
    })
}

/// The same minimum by plain depth-first enumeration of every decision
/// sequence, without memoization. Used to cross-check [`brute_force_opt`].
pub fn exhaustive_dfs_opt(
    channels: &[Vec<bool>],
    mobility: &[Occupancy],
    metric: Metric,
    budget: &OracleBudget,
) -> Result<f64> {
    let n = check_instance(channels, mobility, budget)?;
    let choices: Vec<Vec<Decision>> = mobility.iter().map(slot_choices).collect();
    let leaves = choices
        .iter()
        .try_fold(1u128, |acc, c| acc.checked_mul(c.len() as u128))
        .unwrap_or(u128::MAX);
    if leaves > budget.max_states as u128 {
        return Err(AoiError::Budget {
            needed: leaves,
            limit: budget.max_states as u128,
        });
    }

    fn dfs(
        t: usize,
        ages: &[u64],
        acc: u128,
        ch: &[Vec<bool>],
        mob: &[Occupancy],
        choices: &[Vec<Decision>],
        metric: Metric,
    ) -> u128 {
        if t == ch.len() {
            return acc;
        }
        choices[t]
            .iter()
            .map(|d| {
                let next = apply(ages, d, &mob[t], &ch[t]);
                dfs(t + 1, &next, acc + metric.slot_cost(&next), ch, mob, choices, metric)
            })
            .min()
            .expect("nonempty choice set")
    }

    let total = dfs(0, &vec![1; n], 0, channels, mobility, &choices, metric);
    Ok(metric.normalize(total, n, channels.len()))
}
