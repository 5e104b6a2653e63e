//! Post-hoc trace analytics.

use std::fmt;

use crate::engine::{AgeVector, Trace};
use crate::error::{AoiError, Result};
use crate::oracle::Metric;
use crate::stats::{BatchMeans, Estimate};

/// One closed super-interval: it starts right after the previous Max-user
/// success and ends with the slot in which its own Max-user succeeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuperInterval {
    /// First slot of the interval (1-based).
    pub start: u64,
    /// Slot of the Max-user's success.
    pub end: u64,
    pub max_user: usize,
}

impl SuperInterval {
    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Trailing interval whose Max-user had not succeeded by the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpenInterval {
    pub start: u64,
    pub slots: u64,
    pub max_user: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperIntervalDecomposition {
    pub intervals: Vec<SuperInterval>,
    pub open: Option<OpenInterval>,
}

impl SuperIntervalDecomposition {
    /// Success slots `T_1 < T_2 < ...` of the closed intervals.
    pub fn boundaries(&self) -> Vec<u64> {
        self.intervals.iter().map(|i| i.end).collect()
    }

    /// Lengths of the closed intervals.
    pub fn lengths(&self) -> Vec<u64> {
        self.intervals.iter().map(SuperInterval::len).collect()
    }

    /// Slots covered, including the open tail.
    pub fn covered_slots(&self) -> u64 {
        self.lengths().iter().sum::<u64>() + self.open.map_or(0, |o| o.slots)
    }
}

/// Splits a max-age trace into super-intervals and checks that it really is
/// one: the Max-user (oldest user before the decision, lowest index on ties)
/// stays fixed inside an interval and is scheduled in every slot of it.
pub fn decompose_super_intervals(trace: &Trace) -> Result<SuperIntervalDecomposition> {
    let mut intervals = Vec::new();
    let mut current: Option<(u64, usize)> = None;
    for (idx, rec) in trace.records.iter().enumerate() {
        let max_user = trace.ages_before(idx).max_user();
        let (start, m) = *current.get_or_insert((rec.t, max_user));
        if m != max_user {
            return Err(AoiError::Consistency {
                slot: rec.t,
                msg: format!("Max-user changed from {} to {} inside an interval", m + 1, max_user + 1),
            });
        }
        if !rec.decision.is_scheduled(m, &rec.occupancy) {
            return Err(AoiError::Consistency {
                slot: rec.t,
                msg: format!("Max-user {} was not scheduled", m + 1),
            });
        }
        if rec.successes[m] {
            intervals.push(SuperInterval {
                start,
                end: rec.t,
                max_user: m,
            });
            current = None;
        }
    }
    let last = trace.records.last().map_or(0, |r| r.t);
    let open = current.map(|(start, max_user)| OpenInterval {
        start,
        slots: last - start + 1,
        max_user,
    });
    Ok(SuperIntervalDecomposition { intervals, open })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntervalBoundViolation {
    pub slot: u64,
    /// 1-based interval number.
    pub interval: usize,
    pub age: u64,
    pub bound: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalBoundReport {
    pub slots_checked: u64,
    /// Smallest `bound - age` over all checked slots.
    pub min_slack: Option<i64>,
    /// Same, restricted to the first N intervals.
    pub min_slack_early: Option<i64>,
    /// Same, restricted to later intervals.
    pub min_slack_steady: Option<i64>,
    pub violations: Vec<IntervalBoundViolation>,
}

impl IntervalBoundReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

fn min_opt(a: Option<i64>, b: i64) -> Option<i64> {
    Some(a.map_or(b, |a| a.min(b)))
}

/// Checks the super-interval age bound: in slot `k` of interval `i` the
/// Max-user's age (in force when the decision is taken) is at most
/// `k + sum of the N-1 preceding interval lengths`, missing ones counting 0.
pub fn verify_interval_bound(decomp: &SuperIntervalDecomposition, trace: &Trace) -> IntervalBoundReport {
    let n = trace.params.n_users;
    let mut report = IntervalBoundReport {
        slots_checked: 0,
        min_slack: None,
        min_slack_early: None,
        min_slack_steady: None,
        violations: Vec::new(),
    };
    let spans = decomp
        .intervals
        .iter()
        .map(|i| (i.start, i.len(), i.max_user))
        .chain(decomp.open.map(|o| (o.start, o.slots, o.max_user)));
    let lengths = decomp.lengths();
    for (i, (start, len, m)) in spans.enumerate() {
        let history: u64 = lengths[i.saturating_sub(n - 1)..i].iter().sum();
        for k in 1..=len {
            let slot = start + k - 1;
            let age = trace.ages_before(slot as usize - 1).get(m);
            let bound = k + history;
            let slack = bound as i64 - age as i64;
            report.slots_checked += 1;
            report.min_slack = min_opt(report.min_slack, slack);
            if i < n {
                report.min_slack_early = min_opt(report.min_slack_early, slack);
            } else {
                report.min_slack_steady = min_opt(report.min_slack_steady, slack);
            }
            if slack < 0 {
                report.violations.push(IntervalBoundViolation {
                    slot,
                    interval: i + 1,
                    age,
                    bound,
                });
            }
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub policy_cost: f64,
    pub reference_cost: f64,
    pub ratio: f64,
    pub metric: Metric,
    pub instance: String,
}

pub fn competitive_ratio(
    policy_cost: f64,
    reference_cost: f64,
    metric: Metric,
    instance: impl Into<String>,
) -> Result<RatioReport> {
    if !(reference_cost > 0.0) || !reference_cost.is_finite() {
        return Err(AoiError::invalid(format!("reference cost must be positive, got {reference_cost}")));
    }
    Ok(RatioReport {
        policy_cost,
        reference_cost,
        ratio: policy_cost / reference_cost,
        metric,
        instance: instance.into(),
    })
}

impl fmt::Display for RatioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}]: {} / {} = {}",
            self.instance, self.metric, self.policy_cost, self.reference_cost, self.ratio
        )
    }
}

/// Summed per-slot cost of every closed super-interval.
pub fn interval_costs(trace: &Trace, decomp: &SuperIntervalDecomposition, metric: Metric) -> Vec<u128> {
    decomp
        .intervals
        .iter()
        .map(|iv| {
            (iv.start..=iv.end)
                .map(|t| metric.slot_cost(trace.records[t as usize - 1].ages_after.as_slice()))
                .sum()
        })
        .collect()
}

/// Summed per-slot cost over consecutive blocks of `block` slots; a partial
/// last block is dropped.
pub fn block_costs(trace: &Trace, block: usize, metric: Metric) -> Vec<u128> {
    if block == 0 {
        return Vec::new();
    }
    trace
        .records
        .chunks_exact(block)
        .map(|c| c.iter().map(|r| metric.slot_cost(r.ages_after.as_slice())).sum())
        .collect()
}

/// Counts of the per-slot maximum age.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TailHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl TailHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, max_age: u64) {
        let k = max_age as usize;
        if self.counts.len() <= k {
            self.counts.resize(k + 1, 0);
        }
        self.counts[k] += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn max_observed(&self) -> u64 {
        self.counts.iter().rposition(|&c| c > 0).unwrap_or(0) as u64
    }

    /// Number of samples with maximum age at least `k`.
    pub fn tail_count(&self, k: u64) -> u64 {
        self.counts.iter().skip(k as usize).sum()
    }

    /// Empirical `P(max age >= k)`.
    pub fn tail_prob(&self, k: u64) -> f64 {
        if self.total == 0 {
            return f64::NAN;
        }
        self.tail_count(k) as f64 / self.total as f64
    }

    /// `(k, count >= k, P(max >= k))` for k = 1 ..= max observed.
    pub fn rows(&self) -> Vec<(u64, u64, f64)> {
        let mut rows = Vec::new();
        let mut above = self.total;
        for k in 1..=self.max_observed() {
            rows.push((k, above, above as f64 / self.total as f64));
            above -= self.counts.get(k as usize).copied().unwrap_or(0);
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryStats {
    pub slots: u64,
    pub avg_aoi: Estimate,
    pub peak_aoi: Estimate,
    /// Time average of the summed ages.
    pub sum_age: Estimate,
    pub per_user_avg_age: Vec<f64>,
    pub tail: TailHistogram,
}

pub const MIN_STATIONARY_SLOTS: u64 = 10_000;

pub fn default_burn_in(horizon: u64) -> u64 {
    (horizon / 10).min(10_000)
}

/// Streaming form of [`stationary_stats`] for runs too long to keep.
#[derive(Debug, Clone)]
pub struct StationaryAccumulator {
    burn_in: u64,
    seen: u64,
    avg: BatchMeans,
    peak: BatchMeans,
    sum: BatchMeans,
    per_user: Vec<u128>,
    tail: TailHistogram,
}

impl StationaryAccumulator {
    pub fn new(n_users: usize, horizon: u64, burn_in: u64) -> Self {
        let kept = horizon.saturating_sub(burn_in);
        StationaryAccumulator {
            burn_in,
            seen: 0,
            avg: BatchMeans::new(kept, 50),
            peak: BatchMeans::new(kept, 50),
            sum: BatchMeans::new(kept, 50),
            per_user: vec![0; n_users],
            tail: TailHistogram::new(),
        }
    }

    pub fn observe(&mut self, ages: &AgeVector) {
        self.seen += 1;
        if self.seen <= self.burn_in {
            return;
        }
        let sum = ages.sum() as f64;
        self.avg.push(sum / ages.len() as f64);
        self.sum.push(sum);
        self.peak.push(ages.max() as f64);
        for (acc, &a) in self.per_user.iter_mut().zip(ages.as_slice()) {
            *acc += a as u128;
        }
        self.tail.push(ages.max());
    }

    pub fn finish(self) -> Result<StationaryStats> {
        let slots = self.seen.saturating_sub(self.burn_in);
        if slots < MIN_STATIONARY_SLOTS {
            return Err(AoiError::InsufficientData(format!(
                "{slots} slots after burn-in {} (need {MIN_STATIONARY_SLOTS})",
                self.burn_in
            )));
        }
        Ok(StationaryStats {
            slots,
            avg_aoi: self.avg.estimate(),
            peak_aoi: self.peak.estimate(),
            sum_age: self.sum.estimate(),
            per_user_avg_age: self.per_user.iter().map(|&s| s as f64 / slots as f64).collect(),
            tail: self.tail,
        })
    }
}

/// Post-burn-in averages and the max-age tail. `burn_in` defaults to
/// `min(10^4, T/10)`.
pub fn stationary_stats(trace: &Trace, burn_in: Option<u64>) -> Result<StationaryStats> {
    let horizon = trace.len() as u64;
    let burn_in = burn_in.unwrap_or_else(|| default_burn_in(horizon));
    let mut acc = StationaryAccumulator::new(trace.params.n_users, horizon, burn_in);
    for rec in &trace.records {
        acc.observe(&rec.ages_after);
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{all_bad, all_good, tightness_adversary};
    use crate::engine::{run_simulation, Occupancy, SystemParams};
    use crate::mobility::static_source;
    use crate::policies::Cma;

    fn cma_trace(n: usize, t: u64, ch: &mut dyn crate::channels::ChannelSource) -> Trace {
        let params = SystemParams::adversarial(n, 1, t, 0).unwrap();
        let mut mob = static_source(Occupancy::single_cell(n));
        run_simulation(&params, &mut Cma, ch, &mut mob).unwrap()
    }

    #[test]
    fn all_good_intervals_have_length_one() {
        let trace = cma_trace(2, 6, &mut all_good(2));
        let d = decompose_super_intervals(&trace).unwrap();
        assert_eq!(d.lengths(), vec![1; 6]);
        assert_eq!(d.open, None);
        let users: Vec<_> = d.intervals.iter().map(|i| i.max_user).collect();
        assert_eq!(users, vec![0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn all_bad_is_one_open_interval() {
        let trace = cma_trace(3, 5, &mut all_bad(3));
        let d = decompose_super_intervals(&trace).unwrap();
        assert!(d.intervals.is_empty());
        assert_eq!(
            d.open,
            Some(OpenInterval {
                start: 1,
                slots: 5,
                max_user: 0
            })
        );
        assert_eq!(d.covered_slots(), 5);
        assert!(verify_interval_bound(&d, &trace).holds());
    }

    #[test]
    fn tightness_intervals_and_zero_slack() {
        let (n, delta) = (3, 5);
        let mut adv = tightness_adversary(n, delta).unwrap();
        let trace = cma_trace(n, 10 * delta, &mut adv);
        let d = decompose_super_intervals(&trace).unwrap();
        assert_eq!(d.lengths(), vec![delta; 10]);
        let report = verify_interval_bound(&d, &trace);
        assert!(report.holds());
        assert_eq!(report.min_slack_steady, Some(0));
    }

    #[test]
    fn non_max_age_trace_is_rejected() {
        let mut trace = cma_trace(2, 3, &mut all_bad(2));
        // Serve user 2 in slot 1 although user 1 is the Max-user.
        trace.records[0].decision = crate::engine::Decision::from_cells(vec![Some(1)]);
        assert!(matches!(
            decompose_super_intervals(&trace),
            Err(AoiError::Consistency { slot: 1, .. })
        ));
    }

    #[test]
    fn ratio_requires_positive_reference() {
        let r = competitive_ratio(3.0, 1.5, Metric::Avg, "x").unwrap();
        assert_eq!(r.ratio, 2.0);
        assert!(competitive_ratio(1.0, 0.0, Metric::Avg, "x").is_err());
    }

    #[test]
    fn tail_histogram_counts() {
        let mut h = TailHistogram::new();
        for a in [1, 1, 2, 4] {
            h.push(a);
        }
        assert_eq!(h.tail_count(1), 4);
        assert_eq!(h.tail_count(2), 2);
        assert_eq!(h.tail_count(3), 1);
        assert_eq!(h.tail_prob(5), 0.0);
        assert_eq!(h.rows().len(), 4);
        assert_eq!(h.rows()[2], (3, 1, 0.25));
    }

    #[test]
    fn stationary_needs_enough_slots() {
        let trace = cma_trace(1, 5_000, &mut all_good(1));
        assert!(matches!(
            stationary_stats(&trace, None),
            Err(AoiError::InsufficientData(_))
        ));
        let trace = cma_trace(2, 20_000, &mut all_good(2));
        let s = stationary_stats(&trace, None).unwrap();
        assert_eq!(s.slots, 18_000);
        assert_eq!(s.peak_aoi.mean, 2.0);
        assert_eq!(s.avg_aoi.mean, 1.5);
        assert_eq!(s.per_user_avg_age, vec![1.5, 1.5]);
    }

    #[test]
    fn block_costs_drop_partial_blocks() {
        let trace = cma_trace(2, 5, &mut all_bad(2));
        // ages after slot t are (t+1, t+1)
        assert_eq!(block_costs(&trace, 2, Metric::Avg), vec![4 + 6, 8 + 10]);
        assert_eq!(block_costs(&trace, 2, Metric::Peak), vec![2 + 3, 4 + 5]);
    }
}
