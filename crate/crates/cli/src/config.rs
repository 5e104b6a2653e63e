//! Experiment configuration: a TOML file with `[sim]`, `[policy]`,
//! `[channel]` and `[mobility]` tables, plus `key.path=value` overrides
//! applied on top.

use std::path::PathBuf;

use aoi_core::mobility::GridSpec;
use aoi_core::oracle::Metric;
use aoi_core::policies::PolicyKind;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const PRESETS: &[(&str, &str)] = &[
    ("grid_avg", include_str!("../configs/grid_avg.toml")),
    ("grid_peak", include_str!("../configs/grid_peak.toml")),
    ("full_scale", include_str!("../configs/full_scale.toml")),
];

/// Users simulated by `--full-scale`.
pub const FULL_SCALE_USERS: usize = 3000;

/// Upper limit on `users * horizon` when full traces are kept.
pub const MAX_SAVED_USER_SLOTS: u64 = 20_000_000;

/// Tables missing from a file take the desk-scale defaults below; keys
/// missing from a present table take that table's own defaults, which leave
/// optional keys unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub policy: PolicyConfig,
    pub channel: ChannelConfig,
    pub mobility: MobilityConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sim: SimConfig::default(),
            policy: PolicyConfig::default(),
            channel: ChannelConfig {
                p: Some(ProbSpec::Uniform { lo: 0.0, hi: 1.0 }),
                ..ChannelConfig::default()
            },
            mobility: MobilityConfig {
                width: Some(10),
                height: Some(10),
                ..MobilityConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub users: usize,
    pub horizon: u64,
    pub seed: u64,
    pub replications: u32,
    /// Slots dropped before the steady-state averages; `min(T/10, 10^4)` if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    /// Running averages are written every `window` slots.
    pub window: u64,
    pub metrics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub save_traces: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            users: 200,
            horizon: 100_000,
            seed: 1,
            replications: 3,
            burn_in: None,
            window: 1_000,
            metrics: vec!["avg".into(), "peak".into()],
            out_dir: None,
            save_traces: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub kinds: Vec<String>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            kinds: vec!["cma".into(), "mmw".into()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    Bec,
    Yao,
    AllGood,
    AllBad,
    Tightness,
    Throughput,
    Replay,
}

/// Success probabilities: an explicit list, or drawn per replication
/// uniformly from `(lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbSpec {
    Fixed(Vec<f64>),
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    /// Drives erasure channels; with other kinds it only feeds the weights
    /// of policies that need probabilities.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<ProbSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            kind: ChannelKind::Bec,
            p: None,
            delta: None,
            trace: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MobilityKind {
    Grid,
    Torus,
    Iid,
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub kind: MobilityKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    /// Cell count for `iid` and `static`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            kind: MobilityKind::Grid,
            width: None,
            height: None,
            cells: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelPlan {
    Bec,
    Yao,
    AllGood,
    AllBad,
    Tightness { delta: u64 },
    Throughput,
    Replay(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MobilityPlan {
    Grid(GridSpec),
    Torus(GridSpec),
    Iid { cells: usize },
    Static { cells: usize },
}

/// A validated configuration with every name resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub n_users: usize,
    pub n_cells: usize,
    pub horizon: u64,
    pub seed: u64,
    pub replications: u32,
    pub burn_in: u64,
    pub window: u64,
    pub metrics: Vec<Metric>,
    pub policies: Vec<PolicyKind>,
    pub probs: Option<ProbSpec>,
    pub channel: ChannelPlan,
    pub mobility: MobilityPlan,
    pub save_traces: bool,
}

impl Plan {
    /// Seed of replication `r`.
    pub fn replication_seed(&self, r: u32) -> u64 {
        self.seed.wrapping_add(r as u64)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::with_overrides(text, &[])
    }

    /// Parses `text` and applies `key.path=value` overrides. Values are read
    /// as TOML and fall back to plain strings. An override into a table the
    /// file leaves out starts from that table's desk-scale default.
    pub fn with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)?;
        let defaults = toml::Table::try_from(ExperimentConfig::default()).expect("defaults serialize");
        for o in overrides {
            let head = o.split(['.', '=']).next().unwrap_or("").trim();
            if !table.contains_key(head) {
                if let Some(d) = defaults.get(head) {
                    table.insert(head.to_string(), d.clone());
                }
            }
            apply_override(&mut table, o)?;
        }
        Ok(table.try_into()?)
    }

    pub fn preset(name: &str) -> Result<&'static str> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| *text)
            .ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                CliError::invalid(format!("unknown preset {name:?} (known: {})", names.join(", ")))
            })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<Plan> {
        let mut errs = Vec::new();
        let sim = &self.sim;
        if sim.users == 0 {
            errs.push("sim.users: must be at least 1".to_string());
        }
        if sim.horizon == 0 {
            errs.push("sim.horizon: must be at least 1".to_string());
        }
        if sim.replications == 0 {
            errs.push("sim.replications: must be at least 1".to_string());
        }
        if sim.window == 0 {
            errs.push("sim.window: must be at least 1".to_string());
        }
        let mut metrics = Vec::new();
        for m in &sim.metrics {
            match m.parse::<Metric>() {
                Ok(x) if !metrics.contains(&x) => metrics.push(x),
                Ok(_) => errs.push(format!("sim.metrics: {m} listed twice")),
                Err(e) => errs.push(format!("sim.metrics: {e}")),
            }
        }
        if metrics.is_empty() && sim.metrics.is_empty() {
            errs.push("sim.metrics: at least one of avg, peak".to_string());
        }
        if sim.save_traces && (sim.users as u64).saturating_mul(sim.horizon) > MAX_SAVED_USER_SLOTS {
            errs.push(format!(
                "sim.save_traces: users * horizon exceeds {MAX_SAVED_USER_SLOTS}; traces would not fit in memory"
            ));
        }

        let mut policies = Vec::new();
        for k in &self.policy.kinds {
            match k.parse::<PolicyKind>() {
                Ok(p) => policies.push(p),
                Err(e) => errs.push(format!("policy.kinds: {e}")),
            }
        }
        if self.policy.kinds.is_empty() {
            errs.push("policy.kinds: list at least one policy".to_string());
        }

        let mobility = match self.mobility.kind {
            MobilityKind::Grid | MobilityKind::Torus => {
                if self.mobility.cells.is_some() {
                    errs.push("mobility.cells: grids take width and height instead".to_string());
                }
                match (self.mobility.width, self.mobility.height) {
                    (Some(w), Some(h)) => match GridSpec::new(w, h) {
                        Ok(g) if self.mobility.kind == MobilityKind::Grid => Some(MobilityPlan::Grid(g)),
                        Ok(g) => Some(MobilityPlan::Torus(g)),
                        Err(e) => {
                            errs.push(format!("mobility.width/height: {e}"));
                            None
                        }
                    },
                    _ => {
                        errs.push("mobility.width/height: both required for grid walks".to_string());
                        None
                    }
                }
            }
            MobilityKind::Iid | MobilityKind::Static => {
                if self.mobility.width.is_some() || self.mobility.height.is_some() {
                    errs.push("mobility.width/height: only grid walks take a shape; use mobility.cells".to_string());
                }
                match self.mobility.cells {
                    Some(c) if c > 0 => Some(if self.mobility.kind == MobilityKind::Iid {
                        MobilityPlan::Iid { cells: c }
                    } else {
                        MobilityPlan::Static { cells: c }
                    }),
                    _ => {
                        errs.push("mobility.cells: must be at least 1".to_string());
                        None
                    }
                }
            }
        };
        let n_cells = match mobility {
            Some(MobilityPlan::Grid(g) | MobilityPlan::Torus(g)) => g.n_cells(),
            Some(MobilityPlan::Iid { cells } | MobilityPlan::Static { cells }) => cells,
            None => 0,
        };

        let ch = &self.channel;
        if let Some(p) = &ch.p {
            match p {
                ProbSpec::Fixed(v) => {
                    if v.len() != sim.users {
                        errs.push(format!("channel.p: {} values for {} users", v.len(), sim.users));
                    }
                    if let Some(bad) = v.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
                        errs.push(format!("channel.p: {bad} is outside (0, 1]"));
                    }
                }
                ProbSpec::Uniform { lo, hi } => {
                    if !(0.0 <= *lo && lo < hi && *hi <= 1.0) {
                        errs.push(format!("channel.p: need 0 <= lo < hi <= 1, got ({lo}, {hi}]"));
                    }
                }
            }
        }
        if ch.kind == ChannelKind::Bec && ch.p.is_none() {
            errs.push("channel.p: erasure channels need success probabilities".to_string());
        }
        if ch.delta.is_some() && ch.kind != ChannelKind::Tightness {
            errs.push("channel.delta: only the tightness adversary takes an interval length".to_string());
        }
        if ch.trace.is_some() && ch.kind != ChannelKind::Replay {
            errs.push("channel.trace: only replayed channels read a trace".to_string());
        }
        let channel = match ch.kind {
            ChannelKind::Bec => ChannelPlan::Bec,
            ChannelKind::Yao => ChannelPlan::Yao,
            ChannelKind::AllGood => ChannelPlan::AllGood,
            ChannelKind::AllBad => ChannelPlan::AllBad,
            ChannelKind::Throughput => {
                if sim.users != 2 {
                    errs.push("channel.kind: the throughput adversary needs exactly 2 users".to_string());
                }
                ChannelPlan::Throughput
            }
            ChannelKind::Tightness => {
                let delta = ch.delta.unwrap_or(0);
                if ch.delta.is_none() {
                    errs.push("channel.delta: required by the tightness adversary".to_string());
                } else if sim.users >= 2 && (delta < 2 || !(delta - 1).is_multiple_of(sim.users as u64 - 1)) {
                    errs.push(format!("channel.delta: {delta} must be at least 2 and 1 mod (users - 1)"));
                }
                if sim.users < 2 {
                    errs.push("sim.users: the tightness adversary needs at least 2 users".to_string());
                }
                ChannelPlan::Tightness { delta }
            }
            ChannelKind::Replay => match &ch.trace {
                Some(p) => ChannelPlan::Replay(p.clone()),
                None => {
                    errs.push("channel.trace: required for replayed channels".to_string());
                    ChannelPlan::Replay(PathBuf::new())
                }
            },
        };
        if matches!(channel, ChannelPlan::Tightness { .. } | ChannelPlan::Throughput) && n_cells != 1 {
            errs.push("mobility: adversarial constructions use a single static cell (kind = \"static\", cells = 1)".to_string());
        }

        for p in &policies {
            if p.needs_probs() && ch.p.is_none() {
                errs.push(format!("channel.p: policy {p} needs success probabilities"));
            }
            match p {
                PolicyKind::PolicyP { delta } if *delta != ch.delta.unwrap_or(0) || ch.kind != ChannelKind::Tightness => {
                    errs.push(format!(
                        "policy.kinds: {p} must run against the tightness adversary with the same delta"
                    ));
                }
                PolicyKind::ClairvoyantSingleGood if !matches!(ch.kind, ChannelKind::Yao | ChannelKind::Replay) => {
                    errs.push(format!("policy.kinds: {p} needs yao or replayed channels"));
                }
                _ => {}
            }
        }

        if !errs.is_empty() {
            return Err(CliError::Validation(errs));
        }
        Ok(Plan {
            n_users: sim.users,
            n_cells,
            horizon: sim.horizon,
            seed: sim.seed,
            replications: sim.replications,
            burn_in: sim.burn_in.unwrap_or_else(|| aoi_core::analysis::default_burn_in(sim.horizon)),
            window: sim.window,
            metrics,
            policies,
            probs: ch.p.clone(),
            channel,
            mobility: mobility.expect("checked above"),
            save_traces: sim.save_traces,
        })
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::invalid(format!("override {assignment:?} is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::invalid(format!("override {assignment:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let (last, parents) = keys.split_last().expect("nonempty");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::invalid(format!("override {assignment:?}: {k} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
