//! Channel-state sources: stochastic erasure channels, the single-Good-user
//! randomized input, recorded replays and the adaptive adversaries.

use std::path::Path;

use rand::Rng;

use crate::engine::{AgeVector, Decision, Occupancy, SystemParams};
use crate::error::{AoiError, Result};
use crate::rng::{stream, stream_rng, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceMode {
    /// States do not depend on the scheduler's choices.
    Oblivious,
    /// States are chosen after seeing the current decision.
    Adaptive,
}

/// What a source may look at when revealing the states of slot `t`.
/// `decision` is `None` only for oblivious sources queried ahead of
/// scheduling by a look-ahead policy.
pub struct RevealContext<'a> {
    pub t: u64,
    pub occupancy: &'a Occupancy,
    pub ages_before: &'a AgeVector,
    pub decision: Option<&'a Decision>,
}

pub trait ChannelSource {
    fn mode(&self) -> SourceMode;
    fn n_users(&self) -> usize;

    fn check_compatible(&self, _params: &SystemParams) -> Result<()> {
        Ok(())
    }

    /// Good (`true`) / Bad (`false`) state of every user for one slot.
    fn realize(&mut self, ctx: &RevealContext<'_>) -> Result<Vec<bool>>;
}

fn require_decision<'a>(ctx: &RevealContext<'a>, who: &str) -> Result<&'a Decision> {
    ctx.decision.ok_or_else(|| {
        AoiError::Precondition(format!("{who} must see the slot's decision before revealing states"))
    })
}

/// Independent erasure channels, Good with probability `p[i]` in every slot.
#[derive(Debug, Clone)]
pub struct BecChannels {
    p: Vec<f64>,
    rng: SimRng,
}

pub fn bec_source(p: &[f64], seed: u64) -> Result<BecChannels> {
    crate::engine::validate_probs(p)?;
    Ok(BecChannels {
        p: p.to_vec(),
        rng: stream_rng(seed, stream::CHANNEL),
    })
}

impl ChannelSource for BecChannels {
    fn mode(&self) -> SourceMode {
        SourceMode::Oblivious
    }

    fn n_users(&self) -> usize {
        self.p.len()
    }

    fn realize(&mut self, _ctx: &RevealContext<'_>) -> Result<Vec<bool>> {
        Ok(self.p.iter().map(|&p| p >= 1.0 || self.rng.random_bool(p)).collect())
    }
}

/// Every user always Good, or always Bad.
#[derive(Debug, Clone)]
pub struct ConstantChannels {
    n_users: usize,
    good: bool,
}

pub fn all_good(n_users: usize) -> ConstantChannels {
    ConstantChannels { n_users, good: true }
}

pub fn all_bad(n_users: usize) -> ConstantChannels {
    ConstantChannels { n_users, good: false }
}

impl ChannelSource for ConstantChannels {
    fn mode(&self) -> SourceMode {
        SourceMode::Oblivious
    }

    fn n_users(&self) -> usize {
        self.n_users
    }

    fn realize(&mut self, _ctx: &RevealContext<'_>) -> Result<Vec<bool>> {
        Ok(vec![self.good; self.n_users])
    }
}

/// Exactly one uniformly chosen user is Good in each slot, independently over time.
#[derive(Debug, Clone)]
pub struct YaoChannels {
    n_users: usize,
    rng: SimRng,
}

pub fn yao_source(n_users: usize, seed: u64) -> Result<YaoChannels> {
    if n_users == 0 {
        return Err(AoiError::invalid("yao source needs at least one user"));
    }
    Ok(YaoChannels {
        n_users,
        rng: stream_rng(seed, stream::CHANNEL),
    })
}

impl ChannelSource for YaoChannels {
    fn mode(&self) -> SourceMode {
        SourceMode::Oblivious
    }

    fn n_users(&self) -> usize {
        self.n_users
    }

    fn realize(&mut self, _ctx: &RevealContext<'_>) -> Result<Vec<bool>> {
        let good = self.rng.random_range(0..self.n_users);
        let mut states = vec![false; self.n_users];
        states[good] = true;
        Ok(states)
    }
}

/// Shadow of the max-age scheduler on a single cell driven by the
/// fixed-length super-interval construction: the current Max-user (oldest,
/// lowest index on ties) fails for `delta - 1` slots and succeeds on slot
/// `delta`; nobody else is ever scheduled by the shadow.
#[derive(Debug, Clone)]
pub(crate) struct SuperIntervalShadow {
    ages: Vec<u64>,
    delta: u64,
    elapsed: u64,
}

impl SuperIntervalShadow {
    pub(crate) fn new(n_users: usize, delta: u64) -> Result<Self> {
        if n_users < 2 {
            return Err(AoiError::invalid("the super-interval construction needs N >= 2"));
        }
        if delta == 0 || !(delta - 1).is_multiple_of(n_users as u64 - 1) {
            return Err(AoiError::invalid(format!(
                "super-interval length {delta} must satisfy delta = 1 (mod {})",
                n_users - 1
            )));
        }
        Ok(SuperIntervalShadow {
            ages: vec![1; n_users],
            delta,
            elapsed: 0,
        })
    }

    pub(crate) fn max_user(&self) -> usize {
        let mut best = 0;
        for (i, &a) in self.ages.iter().enumerate() {
            if a > self.ages[best] {
                best = i;
            }
        }
        best
    }

    /// 1-based position of the upcoming slot inside its super-interval.
    pub(crate) fn position(&self) -> u64 {
        self.elapsed + 1
    }

    pub(crate) fn delta(&self) -> u64 {
        self.delta
    }

    pub(crate) fn n_users(&self) -> usize {
        self.ages.len()
    }

    pub(crate) fn advance(&mut self) {
        let max = self.max_user();
        let last = self.position() == self.delta;
        self.ages.iter_mut().for_each(|a| *a += 1);
        if last {
            self.ages[max] = 1;
            self.elapsed = 0;
        } else {
            self.elapsed += 1;
        }
    }
}

/// Adaptive adversary that makes every super-interval of the max-age
/// scheduler exactly `delta` slots long on a single cell.
#[derive(Debug, Clone)]
pub struct TightnessAdversary {
    shadow: SuperIntervalShadow,
}

pub fn tightness_adversary(n_users: usize, delta: u64) -> Result<TightnessAdversary> {
    Ok(TightnessAdversary {
        shadow: SuperIntervalShadow::new(n_users, delta)?,
    })
}

impl TightnessAdversary {
    pub fn delta(&self) -> u64 {
        self.shadow.delta()
    }
}

impl ChannelSource for TightnessAdversary {
    fn mode(&self) -> SourceMode {
        SourceMode::Adaptive
    }

    fn n_users(&self) -> usize {
        self.shadow.n_users()
    }

    fn check_compatible(&self, params: &SystemParams) -> Result<()> {
        if params.n_cells != 1 {
            return Err(AoiError::Unsupported(format!(
                "the tightness adversary is defined for a single cell (M = {})",
                params.n_cells
            )));
        }
        Ok(())
    }

    fn realize(&mut self, ctx: &RevealContext<'_>) -> Result<Vec<bool>> {
        require_decision(ctx, "the tightness adversary")?;
        let mut states = vec![true; self.shadow.n_users()];
        if self.shadow.position() < self.shadow.delta() {
            states[self.shadow.max_user()] = false;
        }
        self.shadow.advance();
        Ok(states)
    }
}

/// Two users, one cell: whoever is scheduled gets a Bad channel and the other
/// user a Good one. If the cell idles, a random user is Good.
#[derive(Debug, Clone)]
pub struct ThroughputAdversary {
    rng: SimRng,
}

pub fn throughput_adversary(seed: u64) -> ThroughputAdversary {
    ThroughputAdversary {
        rng: stream_rng(seed, stream::CHANNEL),
    }
}

impl ChannelSource for ThroughputAdversary {
    fn mode(&self) -> SourceMode {
        SourceMode::Adaptive
    }

    fn n_users(&self) -> usize {
        2
    }

    fn check_compatible(&self, params: &SystemParams) -> Result<()> {
        if params.n_users != 2 || params.n_cells != 1 {
            return Err(AoiError::Unsupported(format!(
                "the throughput adversary needs N = 2 and M = 1 (got N = {}, M = {})",
                params.n_users, params.n_cells
            )));
        }
        Ok(())
    }

    fn realize(&mut self, ctx: &RevealContext<'_>) -> Result<Vec<bool>> {
        let decision = require_decision(ctx, "the throughput adversary")?;
        let good = match decision.scheduled_in(0) {
            Some(user) => 1 - user,
            None => self.rng.random_range(0..2),
        };
        let mut states = vec![false; 2];
        states[good] = true;
        Ok(states)
    }
}

/// Re-emits recorded channel rows verbatim.
#[derive(Debug, Clone)]
pub struct ReplayChannels {
    rows: Vec<Vec<bool>>,
    n_users: usize,
    next: usize,
}

impl ReplayChannels {
    pub fn from_rows(rows: Vec<Vec<bool>>) -> Result<Self> {
        let n_users = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| AoiError::invalid("cannot replay an empty channel sequence"))?;
        if rows.iter().any(|r| r.len() != n_users) {
            return Err(AoiError::invalid("replayed channel rows change length"));
        }
        Ok(ReplayChannels {
            rows,
            n_users,
            next: 0,
        })
    }
}

/// Channel replay from a saved trace file.
pub fn replay_source(trace_file: impl AsRef<Path>) -> Result<ReplayChannels> {
    let trace = crate::trace_io::load_trace(trace_file)?;
    ReplayChannels::from_rows(trace.channel_rows())
}

impl ChannelSource for ReplayChannels {
    fn mode(&self) -> SourceMode {
        SourceMode::Oblivious
    }

    fn n_users(&self) -> usize {
        self.n_users
    }

    fn realize(&mut self, ctx: &RevealContext<'_>) -> Result<Vec<bool>> {
        let row = self
            .rows
            .get(self.next)
            .cloned()
            .ok_or(AoiError::TruncatedSource { slot: ctx.t })?;
        self.next += 1;
        Ok(row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draw(src: &mut dyn ChannelSource, n: usize, t: u64) -> Vec<bool> {
        let occ = Occupancy::single_cell(n);
        let ages = AgeVector::initial(n);
        let d = Decision::idle(1);
        src.realize(&RevealContext {
            t,
            occupancy: &occ,
            ages_before: &ages,
            decision: Some(&d),
        })
        .unwrap()
    }

    #[test]
    fn bec_certain_success() {
        let mut src = bec_source(&[1.0, 1.0], 0).unwrap();
        for t in 1..100 {
            assert_eq!(draw(&mut src, 2, t), vec![true, true]);
        }
        assert!(bec_source(&[0.0], 0).is_err());
    }

    #[test]
    fn bec_frequency() {
        let n = 100_000u64;
        let mut src = bec_source(&[0.5], 8).unwrap();
        let good = (1..=n).filter(|&t| draw(&mut src, 1, t)[0]).count() as f64 / n as f64;
        assert!((good - 0.5).abs() <= 3.0 * (0.25 / n as f64).sqrt(), "{good}");
    }

    #[test]
    fn yao_single_user() {
        let mut src = yao_source(1, 3).unwrap();
        for t in 1..50 {
            assert_eq!(draw(&mut src, 1, t), vec![true]);
        }
    }

    #[test]
    fn yao_exactly_one_good_with_uniform_marginals() {
        let (n, slots) = (4usize, 100_000u64);
        let mut src = yao_source(n, 17).unwrap();
        let mut counts = vec![0u64; n];
        for t in 1..=slots {
            let s = draw(&mut src, n, t);
            assert_eq!(s.iter().filter(|&&g| g).count(), 1);
            s.iter().enumerate().filter(|(_, &g)| g).for_each(|(i, _)| counts[i] += 1);
        }
        let q = 1.0 / n as f64;
        let sigma = (q * (1.0 - q) / slots as f64).sqrt();
        for c in counts {
            assert!((c as f64 / slots as f64 - q).abs() <= 3.0 * sigma);
        }
    }

    #[test]
    fn tightness_rejects_bad_delta() {
        assert!(tightness_adversary(3, 4).is_err());
        assert!(tightness_adversary(3, 5).is_ok());
        assert!(tightness_adversary(1, 5).is_err());
        assert!(tightness_adversary(2, 6).is_ok());
    }

    #[test]
    fn tightness_requires_single_cell() {
        let adv = tightness_adversary(3, 5).unwrap();
        let params = SystemParams::adversarial(3, 2, 10, 0).unwrap();
        assert!(matches!(adv.check_compatible(&params), Err(AoiError::Unsupported(_))));
    }

    #[test]
    fn tightness_pattern_first_intervals() {
        let mut adv = tightness_adversary(3, 5).unwrap();
        let rows: Vec<Vec<bool>> = (1..=10).map(|t| draw(&mut adv, 3, t)).collect();
        // Interval 1: user 1 is the Max-user, interval 2: user 2.
        for row in &rows[0..4] {
            assert_eq!(row, &vec![false, true, true]);
        }
        assert_eq!(rows[4], vec![true, true, true]);
        for row in &rows[5..9] {
            assert_eq!(row, &vec![true, false, true]);
        }
        assert_eq!(rows[9], vec![true, true, true]);
    }

    #[test]
    fn throughput_adversary_needs_two_users() {
        let adv = throughput_adversary(0);
        let params = SystemParams::adversarial(3, 1, 10, 0).unwrap();
        assert!(matches!(adv.check_compatible(&params), Err(AoiError::Unsupported(_))));
    }

    #[test]
    fn adaptive_sources_need_the_decision() {
        let mut adv = throughput_adversary(0);
        let occ = Occupancy::single_cell(2);
        let ages = AgeVector::initial(2);
        let err = adv
            .realize(&RevealContext {
                t: 1,
                occupancy: &occ,
                ages_before: &ages,
                decision: None,
            })
            .unwrap_err();
        assert!(matches!(err, AoiError::Precondition(_)));
    }
}
