//! Scheduling rules. Every rule picks at most one occupant per nonempty cell;
//! ties always go to the lowest user index.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::channels::SuperIntervalShadow;
use crate::engine::{validate_probs, AgeVector, Decision, Occupancy, SystemParams};
use crate::error::{AoiError, Result};
use crate::rng::{stream, stream_rng, SimRng};

/// Everything a policy may observe when deciding slot `t`. `channel` is
/// filled only for look-ahead (offline-informed) policies.
pub struct SlotView<'a> {
    pub t: u64,
    pub ages: &'a AgeVector,
    pub occupancy: &'a Occupancy,
    pub channel: Option<&'a [bool]>,
}

pub trait Policy {
    fn name(&self) -> &'static str;

    /// Whether the policy reads the current slot's channel states.
    fn uses_lookahead(&self) -> bool {
        false
    }

    fn check_compatible(&self, _params: &SystemParams) -> Result<()> {
        Ok(())
    }

    fn decide(&mut self, view: &SlotView<'_>) -> Result<Decision>;
}

/// Per-cell argmax of `score`, scanning users in index order so that the
/// lowest index wins ties.
fn argmax_per_cell<S, F>(occ: &Occupancy, score: F) -> Decision
where
    S: PartialOrd + Copy,
    F: Fn(usize) -> S,
{
    let mut best: Vec<Option<(usize, S)>> = vec![None; occ.n_cells()];
    for (user, &cell) in occ.as_slice().iter().enumerate() {
        let s = score(user);
        match best[cell] {
            Some((_, b)) if !(s > b) => {}
            _ => best[cell] = Some((user, s)),
        }
    }
    Decision::from_cells(best.into_iter().map(|b| b.map(|(u, _)| u)).collect())
}

fn check_len(p: &[f64], occ: &Occupancy) -> Result<()> {
    if p.len() != occ.n_users() {
        return Err(AoiError::invalid(format!(
            "{} success probabilities for {} users",
            p.len(),
            occ.n_users()
        )));
    }
    Ok(())
}

/// Max-age: each cell serves its oldest occupant.
pub fn cma_decide(ages: &AgeVector, occ: &Occupancy) -> Decision {
    argmax_per_cell(occ, |i| ages.get(i))
}

/// Max-weight: each cell serves the occupant maximizing `p_i * h_i^2`.
pub fn mmw_decide(ages: &AgeVector, occ: &Occupancy, p: &[f64]) -> Result<Decision> {
    check_len(p, occ)?;
    Ok(argmax_per_cell(occ, |i| {
        let h = ages.get(i) as f64;
        p[i] * h * h
    }))
}

/// Each cell serves the occupant with the highest success probability.
pub fn throughput_greedy_decide(occ: &Occupancy, p: &[f64]) -> Result<Decision> {
    check_len(p, occ)?;
    Ok(argmax_per_cell(occ, |i| p[i]))
}

/// Stationary randomized rule: occupant `i` of a cell is drawn with
/// probability proportional to `1 / sqrt(p_i)`.
pub fn rand_decide(occ: &Occupancy, p: &[f64], rng: &mut SimRng) -> Result<Decision> {
    check_len(p, occ)?;
    let mut decision = Decision::idle(occ.n_cells());
    for (cell, members) in occ.buckets().into_iter().enumerate() {
        match members.len() {
            0 => {}
            1 => decision.assign(cell, members[0]),
            _ => {
                let weights: Vec<f64> = members.iter().map(|&i| 1.0 / p[i].sqrt()).collect();
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = *members.last().unwrap();
                for (&i, &w) in members.iter().zip(&weights) {
                    if u < w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                decision.assign(cell, pick);
            }
        }
    }
    Ok(decision)
}

/// Serves the single user whose channel is Good. Needs the current channel
/// states, so it is offline-informed by construction.
pub fn clairvoyant_single_good_decide(channel: &[bool], occ: &Occupancy) -> Result<Decision> {
    let good: Vec<usize> = (0..channel.len()).filter(|&i| channel[i]).collect();
    if good.len() != 1 {
        return Err(AoiError::Precondition(format!(
            "clairvoyant single-good policy needs exactly one Good user, found {}",
            good.len()
        )));
    }
    let mut decision = Decision::idle(occ.n_cells());
    decision.assign(occ.cell_of(good[0]), good[0]);
    Ok(decision)
}

/// Cyclic service: in slot `t` each cell serves the occupant that comes
/// first at or after position `(t - 1) mod N` in index order.
pub fn round_robin_decide(occ: &Occupancy, t: u64) -> Decision {
    let n = occ.n_users();
    let start = ((t.max(1) - 1) % n as u64) as usize;
    argmax_per_cell(occ, |i| std::cmp::Reverse((i + n - start) % n))
}

/// Choice of the offline comparison policy inside one super-interval of the
/// fixed-length construction: the Max-user on the last slot, otherwise the
/// oldest of the remaining users (which cycles through them in turn).
pub fn policy_p_choice(ages: &AgeVector, max_user: usize, position: u64, delta: u64) -> usize {
    if position >= delta {
        return max_user;
    }
    let mut best: Option<usize> = None;
    for i in (0..ages.len()).filter(|&i| i != max_user) {
        if best.is_none_or(|b| ages.get(i) > ages.get(b)) {
            best = Some(i);
        }
    }
    best.unwrap_or(max_user)
}

#[derive(Debug, Clone, Default)]
pub struct Cma;

impl Policy for Cma {
    fn name(&self) -> &'static str {
        "cma"
    }

    fn decide(&mut self, view: &SlotView<'_>) -> Result<Decision> {
        Ok(cma_decide(view.ages, view.occupancy))
    }
}

#[derive(Debug, Clone)]
pub struct Mmw {
    p: Vec<f64>,
}

impl Mmw {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        validate_probs(&p)?;
        Ok(Mmw { p })
    }
}

impl Policy for Mmw {
    fn name(&self) -> &'static str {
        "mmw"
    }

    fn decide(&mut self, view: &SlotView<'_>) -> Result<Decision> {
        mmw_decide(view.ages, view.occupancy, &self.p)
    }
}

#[derive(Debug, Clone)]
pub struct RandPolicy {
    p: Vec<f64>,
    rng: SimRng,
}

impl RandPolicy {
    pub fn new(p: Vec<f64>, seed: u64) -> Result<Self> {
        validate_probs(&p)?;
        Ok(RandPolicy {
            p,
            rng: stream_rng(seed, stream::POLICY),
        })
    }
}

impl Policy for RandPolicy {
    fn name(&self) -> &'static str {
        "rand"
    }

    fn decide(&mut self, view: &SlotView<'_>) -> Result<Decision> {
        rand_decide(view.occupancy, &self.p, &mut self.rng)
    }
}

#[derive(Debug, Clone)]
pub struct ThroughputGreedy {
    p: Vec<f64>,
}

impl ThroughputGreedy {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        validate_probs(&p)?;
        Ok(ThroughputGreedy { p })
    }
}

impl Policy for ThroughputGreedy {
    fn name(&self) -> &'static str {
        "throughput-greedy"
    }

    fn decide(&mut self, view: &SlotView<'_>) -> Result<Decision> {
        throughput_greedy_decide(view.occupancy, &self.p)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ClairvoyantSingleGood;

impl Policy for ClairvoyantSingleGood {
    fn name(&self) -> &'static str {
        "clairvoyant"
    }

    fn uses_lookahead(&self) -> bool {
        true
    }

    fn decide(&mut self, view: &SlotView<'_>) -> Result<Decision> {
        let channel = view.channel.ok_or_else(|| {
            AoiError::Precondition("clairvoyant policy ran without channel look-ahead".into())
        })?;
        clairvoyant_single_good_decide(channel, view.occupancy)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RoundRobin;

impl Policy for RoundRobin {
    fn name(&self) -> &'static str {
        "round-robin"
    }

    fn decide(&mut self, view: &SlotView<'_>) -> Result<Decision> {
        Ok(round_robin_decide(view.occupancy, view.t))
    }
}

/// Offline comparison policy for the fixed-length super-interval
/// construction. It tracks the construction's Max-user with the same shadow
/// the adversary uses.
#[derive(Debug, Clone)]
pub struct PolicyP {
    shadow: SuperIntervalShadow,
}

impl PolicyP {
    pub fn new(n_users: usize, delta: u64) -> Result<Self> {
        Ok(PolicyP {
            shadow: SuperIntervalShadow::new(n_users, delta)?,
        })
    }
}

impl Policy for PolicyP {
    fn name(&self) -> &'static str {
        "policy-p"
    }

    fn check_compatible(&self, params: &SystemParams) -> Result<()> {
        if params.n_cells != 1 {
            return Err(AoiError::Unsupported(format!(
                "policy P is defined for a single cell (M = {})",
                params.n_cells
            )));
        }
        if params.n_users != self.shadow.n_users() {
            return Err(AoiError::invalid("policy P was built for a different N"));
        }
        Ok(())
    }

    fn decide(&mut self, view: &SlotView<'_>) -> Result<Decision> {
        let user = policy_p_choice(
            view.ages,
            self.shadow.max_user(),
            self.shadow.position(),
            self.shadow.delta(),
        );
        self.shadow.advance();
        let mut d = Decision::idle(view.occupancy.n_cells());
        d.assign(view.occupancy.cell_of(user), user);
        Ok(d)
    }
}

/// Replays a fixed decision sequence.
#[derive(Debug, Clone)]
pub struct ReplayDecisions {
    rows: Vec<Decision>,
}

impl ReplayDecisions {
    pub fn new(rows: Vec<Decision>) -> Self {
        ReplayDecisions { rows }
    }
}

impl Policy for ReplayDecisions {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn decide(&mut self, view: &SlotView<'_>) -> Result<Decision> {
        self.rows
            .get(view.t as usize - 1)
            .cloned()
            .ok_or(AoiError::TruncatedSource { slot: view.t })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Cma,
    Mmw,
    Rand,
    PolicyP { delta: u64 },
    ClairvoyantSingleGood,
    ThroughputGreedy,
    RoundRobin,
}

impl PolicyKind {
    pub fn needs_probs(&self) -> bool {
        matches!(self, PolicyKind::Mmw | PolicyKind::Rand | PolicyKind::ThroughputGreedy)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Cma => write!(f, "cma"),
            PolicyKind::Mmw => write!(f, "mmw"),
            PolicyKind::Rand => write!(f, "rand"),
            PolicyKind::PolicyP { delta } => write!(f, "policy-p:{delta}"),
            PolicyKind::ClairvoyantSingleGood => write!(f, "clairvoyant"),
            PolicyKind::ThroughputGreedy => write!(f, "throughput-greedy"),
            PolicyKind::RoundRobin => write!(f, "round-robin"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = AoiError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(delta) = s.strip_prefix("policy-p:") {
            let delta = delta
                .parse()
                .map_err(|_| AoiError::invalid(format!("bad super-interval length in '{s}'")))?;
            return Ok(PolicyKind::PolicyP { delta });
        }
        match s {
            "cma" => Ok(PolicyKind::Cma),
            "mmw" => Ok(PolicyKind::Mmw),
            "rand" => Ok(PolicyKind::Rand),
            "clairvoyant" => Ok(PolicyKind::ClairvoyantSingleGood),
            "throughput-greedy" => Ok(PolicyKind::ThroughputGreedy),
            "round-robin" => Ok(PolicyKind::RoundRobin),
            "policy-p" => Err(AoiError::invalid("policy-p needs a length, e.g. policy-p:501")),
            other => Err(AoiError::invalid(format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub kind: PolicyKind,
    pub success_probs: Vec<f64>,
    pub seed: u64,
}

impl PolicyParams {
    pub fn build(&self, n_users: usize) -> Result<Box<dyn Policy + Send>> {
        if self.kind.needs_probs() && self.success_probs.len() != n_users {
            return Err(AoiError::invalid(format!(
                "policy {} needs {} success probabilities, got {}",
                self.kind,
                n_users,
                self.success_probs.len()
            )));
        }
        let p = self.success_probs.clone();
        Ok(match self.kind {
            PolicyKind::Cma => Box::new(Cma),
            PolicyKind::Mmw => Box::new(Mmw::new(p)?),
            PolicyKind::Rand => Box::new(RandPolicy::new(p, self.seed)?),
            PolicyKind::PolicyP { delta } => Box::new(PolicyP::new(n_users, delta)?),
            PolicyKind::ClairvoyantSingleGood => Box::new(ClairvoyantSingleGood),
            PolicyKind::ThroughputGreedy => Box::new(ThroughputGreedy::new(p)?),
            PolicyKind::RoundRobin => Box::new(RoundRobin),
        })
    }
}
