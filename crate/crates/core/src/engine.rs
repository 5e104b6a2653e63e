//! Slot-event pipeline and age dynamics.
//!
//! Each slot runs in a fixed order: users move, the scheduler picks at most
//! one occupant per cell, channel states are revealed (adaptive sources see
//! the decision first), transmissions succeed or fail, and the age vector is
//! measured at the end of the slot. Every age starts at 1 before slot 1.

use crate::channels::{ChannelSource, RevealContext, SourceMode};
use crate::error::{AoiError, Result};
use crate::mobility::MobilitySource;
use crate::policies::{Policy, SlotView};

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub n_users: usize,
    pub n_cells: usize,
    /// Per-user success probabilities. Empty in adversarial runs.
    pub success_probs: Vec<f64>,
    pub horizon: u64,
    pub seed: u64,
}

impl SystemParams {
    pub fn new(
        n_users: usize,
        n_cells: usize,
        success_probs: Vec<f64>,
        horizon: u64,
        seed: u64,
    ) -> Result<Self> {
        let params = SystemParams {
            n_users,
            n_cells,
            success_probs,
            horizon,
            seed,
        };
        params.validate()?;
        Ok(params)
    }

    /// Parameters for runs whose channels come from an adversary or a script.
    pub fn adversarial(n_users: usize, n_cells: usize, horizon: u64, seed: u64) -> Result<Self> {
        Self::new(n_users, n_cells, Vec::new(), horizon, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_cells == 0 || self.horizon == 0 {
            return Err(AoiError::invalid(format!(
                "N, M and T must be positive (got N={}, M={}, T={})",
                self.n_users, self.n_cells, self.horizon
            )));
        }
        if !self.success_probs.is_empty() {
            if self.success_probs.len() != self.n_users {
                return Err(AoiError::invalid(format!(
                    "expected {} success probabilities, got {}",
                    self.n_users,
                    self.success_probs.len()
                )));
            }
            validate_probs(&self.success_probs)?;
        }
        Ok(())
    }
}

pub(crate) fn validate_probs(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(AoiError::invalid("success probability vector is empty"));
    }
    for (i, &pi) in p.iter().enumerate() {
        if !(pi > 0.0 && pi <= 1.0) {
            return Err(AoiError::invalid(format!(
                "success probability of user {} must lie in (0, 1], got {pi}",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Per-user ages measured at the end of slot `t` (`t = 0` is the initial state).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AgeVector {
    ages: Vec<u64>,
    t: u64,
}

impl AgeVector {
    pub fn initial(n_users: usize) -> Self {
        AgeVector {
            ages: vec![1; n_users],
            t: 0,
        }
    }

    pub fn new(ages: Vec<u64>, t: u64) -> Result<Self> {
        if let Some(i) = ages.iter().position(|&a| a == 0) {
            return Err(AoiError::invalid(format!("age of user {} is 0", i + 1)));
        }
        Ok(AgeVector { ages, t })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.ages
    }

    pub fn get(&self, user: usize) -> u64 {
        self.ages[user]
    }

    pub fn sum(&self) -> u64 {
        self.ages.iter().sum()
    }

    pub fn max(&self) -> u64 {
        self.ages.iter().copied().max().unwrap_or(0)
    }

    /// Oldest user, ties broken by lowest index.
    pub fn max_user(&self) -> usize {
        let mut best = 0;
        for (i, &a) in self.ages.iter().enumerate() {
            if a > self.ages[best] {
                best = i;
            }
        }
        best
    }
}

/// Ages after one slot: 1 for users that succeeded, +1 for everyone else.
pub fn step_ages(prev: &AgeVector, successes: &[bool]) -> Result<AgeVector> {
    if successes.len() != prev.len() {
        return Err(AoiError::invalid(format!(
            "success vector has length {}, age vector has length {}",
            successes.len(),
            prev.len()
        )));
    }
    let ages = prev
        .ages
        .iter()
        .zip(successes)
        .map(|(&a, &ok)| if ok { 1 } else { a + 1 })
        .collect();
    Ok(AgeVector {
        ages,
        t: prev.t + 1,
    })
}

/// Cell assignment of every user in one slot. Cells are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occupancy {
    cell_of: Vec<usize>,
    n_cells: usize,
}

impl Occupancy {
    pub fn new(cell_of: Vec<usize>, n_cells: usize) -> Result<Self> {
        if let Some(i) = cell_of.iter().position(|&c| c >= n_cells) {
            return Err(AoiError::invalid(format!(
                "user {} is in cell {} but only {} cells exist",
                i + 1,
                cell_of[i] + 1,
                n_cells
            )));
        }
        Ok(Occupancy { cell_of, n_cells })
    }

    pub fn single_cell(n_users: usize) -> Self {
        Occupancy {
            cell_of: vec![0; n_users],
            n_cells: 1,
        }
    }

    pub fn n_users(&self) -> usize {
        self.cell_of.len()
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn cell_of(&self, user: usize) -> usize {
        self.cell_of[user]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.cell_of
    }

    /// Occupants of every cell, in ascending user order.
    pub fn buckets(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_cells];
        for (user, &cell) in self.cell_of.iter().enumerate() {
            out[cell].push(user);
        }
        out
    }

    pub fn nonempty_cells(&self) -> usize {
        let mut seen = vec![false; self.n_cells];
        self.cell_of.iter().for_each(|&c| seen[c] = true);
        seen.into_iter().filter(|&s| s).count()
    }
}

/// Per-cell scheduling choice: at most one user per cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Decision {
    scheduled: Vec<Option<usize>>,
}

impl Decision {
    pub fn idle(n_cells: usize) -> Self {
        Decision {
            scheduled: vec![None; n_cells],
        }
    }

    pub fn from_cells(scheduled: Vec<Option<usize>>) -> Self {
        Decision { scheduled }
    }

    pub fn assign(&mut self, cell: usize, user: usize) {
        self.scheduled[cell] = Some(user);
    }

    pub fn n_cells(&self) -> usize {
        self.scheduled.len()
    }

    pub fn scheduled_in(&self, cell: usize) -> Option<usize> {
        self.scheduled[cell]
    }

    pub fn cells(&self) -> &[Option<usize>] {
        &self.scheduled
    }

    pub fn is_scheduled(&self, user: usize, occ: &Occupancy) -> bool {
        self.scheduled[occ.cell_of(user)] == Some(user)
    }

    /// Users scheduled this slot, in cell order.
    pub fn scheduled_users(&self) -> impl Iterator<Item = usize> + '_ {
        self.scheduled.iter().filter_map(|s| *s)
    }

    pub fn validate(&self, occ: &Occupancy) -> Result<()> {
        if self.scheduled.len() != occ.n_cells() {
            return Err(AoiError::invalid(format!(
                "decision covers {} cells, occupancy has {}",
                self.scheduled.len(),
                occ.n_cells()
            )));
        }
        for (cell, s) in self.scheduled.iter().enumerate() {
            if let Some(user) = *s {
                if user >= occ.n_users() || occ.cell_of(user) != cell {
                    return Err(AoiError::Precondition(format!(
                        "cell {} scheduled user {} who is not in that cell",
                        cell + 1,
                        user + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub t: u64,
    pub occupancy: Occupancy,
    pub decision: Decision,
    /// `true` means the channel was Good.
    pub channel: Vec<bool>,
    pub successes: Vec<bool>,
    pub ages_after: AgeVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub params: SystemParams,
    pub records: Vec<SlotRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Ages in force when the decision of record `idx` was taken.
    pub fn ages_before(&self, idx: usize) -> AgeVector {
        if idx == 0 {
            AgeVector::initial(self.params.n_users)
        } else {
            self.records[idx - 1].ages_after.clone()
        }
    }

    pub fn channel_rows(&self) -> Vec<Vec<bool>> {
        self.records.iter().map(|r| r.channel.clone()).collect()
    }

    pub fn occupancy_rows(&self) -> Vec<Occupancy> {
        self.records.iter().map(|r| r.occupancy.clone()).collect()
    }

    pub fn decisions(&self) -> Vec<Decision> {
        self.records.iter().map(|r| r.decision.clone()).collect()
    }

    pub fn total_successes(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.successes.iter().filter(|&&s| s).count())
            .sum()
    }

    /// Checks every per-slot invariant: contiguity, feasibility, success rule
    /// and the age recursion.
    pub fn check_invariants(&self) -> Result<()> {
        let mut prev = AgeVector::initial(self.params.n_users);
        for (idx, rec) in self.records.iter().enumerate() {
            let slot = idx as u64 + 1;
            if rec.t != slot || rec.ages_after.t() != slot {
                return Err(AoiError::invalid(format!(
                    "record {idx} carries slot {} (expected {slot})",
                    rec.t
                )));
            }
            rec.decision.validate(&rec.occupancy)?;
            for user in 0..self.params.n_users {
                let expect = rec.decision.is_scheduled(user, &rec.occupancy) && rec.channel[user];
                if rec.successes[user] != expect {
                    return Err(AoiError::invalid(format!(
                        "slot {slot}: success flag of user {} disagrees with decision and channel",
                        user + 1
                    )));
                }
            }
            let next = step_ages(&prev, &rec.successes)?;
            if next != rec.ages_after {
                return Err(AoiError::invalid(format!(
                    "slot {slot}: ages do not follow the age recursion"
                )));
            }
            prev = next;
        }
        Ok(())
    }
}

/// Running sums behind both cost metrics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostAccumulator {
    slots: u64,
    n_users: usize,
    sum_ages: u128,
    sum_peaks: u128,
}

impl CostAccumulator {
    pub fn new(n_users: usize) -> Self {
        CostAccumulator {
            n_users,
            ..Default::default()
        }
    }

    pub fn observe(&mut self, ages: &AgeVector) {
        self.slots += 1;
        self.sum_ages += ages.sum() as u128;
        self.sum_peaks += ages.max() as u128;
    }

    pub fn slots(&self) -> u64 {
        self.slots
    }

    /// Sum over slots and users of the ages (un-normalized average cost).
    pub fn total_age(&self) -> u128 {
        self.sum_ages
    }

    /// Sum over slots of the per-slot maximum age (un-normalized peak cost).
    pub fn total_peak(&self) -> u128 {
        self.sum_peaks
    }

    pub fn avg_aoi(&self) -> f64 {
        self.sum_ages as f64 / (self.n_users as f64 * self.slots as f64)
    }

    pub fn peak_aoi(&self) -> f64 {
        self.sum_peaks as f64 / self.slots as f64
    }
}

fn cost_of(trace: &Trace) -> Result<CostAccumulator> {
    if trace.is_empty() {
        return Err(AoiError::invalid("cost of an empty trace is undefined"));
    }
    let mut acc = CostAccumulator::new(trace.params.n_users);
    trace.records.iter().for_each(|r| acc.observe(&r.ages_after));
    Ok(acc)
}

/// Time- and user-averaged age over the trace.
pub fn avg_aoi_cost(trace: &Trace) -> Result<f64> {
    Ok(cost_of(trace)?.avg_aoi())
}

/// Time average of the per-slot maximum age.
pub fn peak_aoi_cost(trace: &Trace) -> Result<f64> {
    Ok(cost_of(trace)?.peak_aoi())
}

/// A single run in progress. Use [`run_simulation`] to collect a full trace
/// or [`run_streaming`] when only statistics are needed.
pub struct Simulation<'a> {
    params: &'a SystemParams,
    policy: &'a mut dyn Policy,
    channels: &'a mut dyn ChannelSource,
    mobility: &'a mut dyn MobilitySource,
    ages: AgeVector,
}

impl<'a> Simulation<'a> {
    pub fn new(
        params: &'a SystemParams,
        policy: &'a mut dyn Policy,
        channels: &'a mut dyn ChannelSource,
        mobility: &'a mut dyn MobilitySource,
    ) -> Result<Self> {
        params.validate()?;
        channels.check_compatible(params)?;
        policy.check_compatible(params)?;
        if channels.n_users() != params.n_users {
            return Err(AoiError::invalid(format!(
                "channel source has {} users, system has {}",
                channels.n_users(),
                params.n_users
            )));
        }
        if mobility.n_users() != params.n_users || mobility.n_cells() != params.n_cells {
            return Err(AoiError::invalid(format!(
                "mobility source is {}x{} (users x cells), system is {}x{}",
                mobility.n_users(),
                mobility.n_cells(),
                params.n_users,
                params.n_cells
            )));
        }
        if policy.uses_lookahead() && channels.mode() == SourceMode::Adaptive {
            return Err(AoiError::Unsupported(format!(
                "policy {} reads current channel states, which an adaptive source only \
                 produces after the decision",
                policy.name()
            )));
        }
        Ok(Simulation {
            params,
            policy,
            channels,
            mobility,
            ages: AgeVector::initial(params.n_users),
        })
    }

    pub fn ages(&self) -> &AgeVector {
        &self.ages
    }

    pub fn step(&mut self) -> Result<SlotRecord> {
        let t = self.ages.t() + 1;
        let n = self.params.n_users;
        let occupancy = self.mobility.next_occupancy(t)?;
        if occupancy.n_users() != n || occupancy.n_cells() != self.params.n_cells {
            return Err(AoiError::invalid(format!(
                "slot {t}: mobility emitted an occupancy of the wrong shape"
            )));
        }

        let lookahead = if self.policy.uses_lookahead() {
            let ctx = RevealContext {
                t,
                occupancy: &occupancy,
                ages_before: &self.ages,
                decision: None,
            };
            Some(self.channels.realize(&ctx)?)
        } else {
            None
        };

        let decision = self.policy.decide(&SlotView {
            t,
            ages: &self.ages,
            occupancy: &occupancy,
            channel: lookahead.as_deref(),
        })?;
        decision.validate(&occupancy)?;

        let channel = match lookahead {
            Some(states) => states,
            None => self.channels.realize(&RevealContext {
                t,
                occupancy: &occupancy,
                ages_before: &self.ages,
                decision: Some(&decision),
            })?,
        };
        if channel.len() != n {
            return Err(AoiError::invalid(format!(
                "slot {t}: channel source emitted {} states for {n} users",
                channel.len()
            )));
        }

        let successes: Vec<bool> = (0..n)
            .map(|i| channel[i] && decision.is_scheduled(i, &occupancy))
            .collect();
        let ages_after = step_ages(&self.ages, &successes)?;
        self.ages = ages_after.clone();

        Ok(SlotRecord {
            t,
            occupancy,
            decision,
            channel,
            successes,
            ages_after,
        })
    }
}

pub fn run_simulation(
    params: &SystemParams,
    policy: &mut dyn Policy,
    channels: &mut dyn ChannelSource,
    mobility: &mut dyn MobilitySource,
) -> Result<Trace> {
    let mut records = Vec::with_capacity(params.horizon.min(1 << 20) as usize);
    run_streaming(params, policy, channels, mobility, |r| records.push(r.clone()))?;
    Ok(Trace {
        params: params.clone(),
        records,
    })
}

/// Runs the full horizon, handing each record to `observe` instead of storing it.
pub fn run_streaming<F>(
    params: &SystemParams,
    policy: &mut dyn Policy,
    channels: &mut dyn ChannelSource,
    mobility: &mut dyn MobilitySource,
    mut observe: F,
) -> Result<()>
where
    F: FnMut(&SlotRecord),
{
    let mut sim = Simulation::new(params, policy, channels, mobility)?;
    for _ in 0..params.horizon {
        let rec = sim.step()?;
        observe(&rec);
    }
    Ok(())
}
