//! The single-table subcommands: bounds, ratio, mdp, tail and trace-dump.

use std::path::Path;

use aoi_core::analysis::{decompose_super_intervals, stationary_stats, verify_interval_bound};
use aoi_core::bounds::{bound_table, ld_exponent, peak_optimum};
use aoi_core::channels::{throughput_adversary, tightness_adversary, ReplayChannels};
use aoi_core::fuzz::{fuzz_instance, FuzzSpec};
use aoi_core::mobility::static_source;
use aoi_core::oracle::{brute_force_opt, ld_tail_oracle, relative_value_iteration, verify_bellman_residual};
use aoi_core::oracle::{Metric, OracleBudget};
use aoi_core::policies::{ClairvoyantSingleGood, Cma, Policy, PolicyKind, PolicyParams, PolicyP};
use aoi_core::trace_io::load_trace;
use aoi_core::{avg_aoi_cost, peak_aoi_cost, run_simulation, AoiError, Decision, Occupancy, SystemParams, Trace};
use rayon::prelude::*;

use crate::cells;
use crate::error::{CliError, Result};
use crate::table::{sig6, Table};

/// A rendered table plus the failure, if any, that should set the exit code
/// once the table has been written.
#[derive(Debug)]
pub struct Outcome {
    pub csv: String,
    pub failure: Option<CliError>,
}

impl Outcome {
    fn ok(csv: String) -> Self {
        Outcome { csv, failure: None }
    }
}

/// Parses `a`, `a..b` or `a..=b` as an inclusive range.
pub fn parse_range<T>(s: &str) -> std::result::Result<std::ops::RangeInclusive<T>, String>
where
    T: std::str::FromStr + PartialOrd + Copy,
{
    let num = |x: &str| x.trim().parse::<T>().map_err(|_| format!("{x:?} is not a number"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (num(a)?, num(b.strip_prefix('=').unwrap_or(b))?),
        None => {
            let v = num(s)?;
            (v, v)
        }
    };
    if lo > hi {
        return Err(format!("empty range {s:?}"));
    }
    Ok(lo..=hi)
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn bounds(p: &[f64], n_cells: usize, g: Option<f64>) -> Result<Outcome> {
    let rows = bound_table(n_cells, p, g)?;
    let mut t = Table::new("bounds", &["name", "value", "asymptotic", "formula", "inputs"]);
    t.param("p", join(p)).param("cells", n_cells);
    if let Some(g) = g {
        t.param("g", g);
    }
    for r in rows {
        let inputs: Vec<String> = r.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        t.row(cells![r.name, sig6(r.value), r.asymptotic, r.formula, inputs.join(";")]);
    }
    Ok(Outcome::ok(t.render()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzArgs {
    pub spec: FuzzSpec,
    pub instances: u64,
    pub seed: u64,
    pub budget: OracleBudget,
}

struct FuzzRow {
    id: u64,
    n: usize,
    m: usize,
    horizon: u64,
    interval_bound_slack: Option<i64>,
    interval_bound_ok: bool,
    /// Per metric: the oracle cost or the budget error message.
    results: Vec<(Metric, f64, std::result::Result<f64, String>)>,
}

/// Max-age against the exact offline optimum on random scripted instances.
/// Checks the `2N^2` (average) and `2N` (peak) guarantees and the
/// super-interval age bound on every instance.
pub fn ratio_fuzz(args: &FuzzArgs) -> Result<Outcome> {
    let rows: Vec<FuzzRow> = (0..args.instances)
        .into_par_iter()
        .map(|id| -> Result<FuzzRow> {
            let inst = fuzz_instance(&args.spec, args.seed, id)?;
            let trace = inst.run(&mut Cma)?;
            let report = verify_interval_bound(&decompose_super_intervals(&trace)?, &trace);
            let mut results = Vec::new();
            for metric in [Metric::Avg, Metric::Peak] {
                let cost = match metric {
                    Metric::Avg => avg_aoi_cost(&trace)?,
                    Metric::Peak => peak_aoi_cost(&trace)?,
                };
                let opt = match brute_force_opt(&inst.channels, &inst.mobility, metric, &args.budget) {
                    Ok(s) => Ok(s.cost),
                    Err(e @ AoiError::Budget { .. }) => Err(e.to_string()),
                    Err(e) => return Err(e.into()),
                };
                results.push((metric, cost, opt));
            }
            Ok(FuzzRow {
                id,
                n: inst.params.n_users,
                m: inst.params.n_cells,
                horizon: inst.params.horizon,
                interval_bound_slack: report.min_slack,
                interval_bound_ok: report.holds(),
                results,
            })
        })
        .collect::<Result<_>>()?;

    let mut t = Table::new(
        "ratio fuzz",
        &[
            "id", "users", "cells", "horizon", "metric", "cma_cost", "opt_cost", "ratio", "guarantee", "interval_bound_slack",
            "status",
        ],
    );
    t.param("users", format!("{}..={}", args.spec.users.start(), args.spec.users.end()))
        .param("cells", format!("{}..={}", args.spec.cells.start(), args.spec.cells.end()))
        .param("horizon", format!("{}..={}", args.spec.horizon.start(), args.spec.horizon.end()))
        .param("instances", args.instances)
        .param("seed", args.seed)
        .param("max_states", args.budget.max_states)
        .param("max_horizon", args.budget.max_horizon);

    let (mut max_avg, mut max_peak) = (0.0f64, 0.0f64);
    let (mut violations, mut budget_hits, mut bound_fails) = (0usize, 0usize, 0usize);
    let mut body = Vec::new();
    for r in &rows {
        if !r.interval_bound_ok {
            bound_fails += 1;
        }
        let slack = r.interval_bound_slack.map(|s| s.to_string()).unwrap_or_default();
        for (metric, cost, opt) in &r.results {
            let nf = r.n as f64;
            let cap = match metric {
                Metric::Avg => 2.0 * nf * nf,
                Metric::Peak => 2.0 * nf,
            };
            let (opt_s, ratio_s, status) = match opt {
                Ok(opt) => {
                    let ratio = cost / opt;
                    let max = if *metric == Metric::Avg { &mut max_avg } else { &mut max_peak };
                    *max = max.max(ratio);
                    let status = if ratio > cap * (1.0 + 1e-12) {
                        violations += 1;
                        "violation"
                    } else if !r.interval_bound_ok {
                        "interval-bound-violation"
                    } else {
                        "ok"
                    };
                    (sig6(*opt), sig6(ratio), status)
                }
                Err(_) => {
                    budget_hits += 1;
                    (String::new(), String::new(), "budget")
                }
            };
            body.push(cells![r.id, r.n, r.m, r.horizon, metric, sig6(*cost), opt_s, ratio_s, cap, slack, status]);
        }
    }
    t.param("max_ratio_avg", sig6(max_avg))
        .param("max_ratio_peak", sig6(max_peak))
        .param("ratio_violations", violations)
        .param("interval_bound_violations", bound_fails)
        .param("budget_exceeded", budget_hits);
    for row in body {
        t.row(row);
    }
    let failure = if violations > 0 || bound_fails > 0 {
        Some(CliError::Property(format!(
            "{violations} ratios above the guarantee, {bound_fails} traces break the super-interval age bound"
        )))
    } else if budget_hits > 0 {
        Some(CliError::Budget(format!("{budget_hits} oracle solves exceeded the budget")))
    } else {
        None
    };
    Ok(Outcome { csv: t.render()?, failure })
}

fn tightness_trace(n: usize, delta: u64, intervals: u64, policy: &mut dyn Policy) -> Result<Trace> {
    let params = SystemParams::adversarial(n, 1, intervals * delta, 0)?;
    let mut adv = tightness_adversary(n, delta)?;
    let mut mob = static_source(Occupancy::single_cell(n));
    Ok(run_simulation(&params, policy, &mut adv, &mut mob)?)
}

/// Max-age against the round-robin comparison schedule on the adversary
/// that pins every super-interval to `delta` slots.
pub fn ratio_tightness(n: usize, deltas: &[u64], intervals: u64) -> Result<Outcome> {
    if intervals == 0 {
        return Err(CliError::invalid("intervals: must be at least 1"));
    }
    let mut t = Table::new(
        "ratio tightness",
        &["delta", "intervals", "metric", "cma_cost", "reference_cost", "ratio", "limit", "all_intervals_delta"],
    );
    t.param("users", n)
        .param("deltas", deltas.iter().map(u64::to_string).collect::<Vec<_>>().join(","))
        .param("intervals", intervals);
    let mut bad = Vec::new();
    for &delta in deltas {
        let cma = tightness_trace(n, delta, intervals, &mut Cma)?;
        let reference = tightness_trace(n, delta, intervals, &mut PolicyP::new(n, delta)?)?;
        let d = decompose_super_intervals(&cma)?;
        let exact = d.open.is_none() && d.lengths().iter().all(|&l| l == delta);
        if !exact {
            bad.push(delta);
        }
        let nf = n as f64;
        for (metric, a, b, limit) in [
            (Metric::Avg, avg_aoi_cost(&cma)?, avg_aoi_cost(&reference)?, nf * nf),
            (Metric::Peak, peak_aoi_cost(&cma)?, peak_aoi_cost(&reference)?, 2.0 * nf - 1.0),
        ] {
            t.row(cells![delta, intervals, metric, sig6(a), sig6(b), sig6(a / b), limit, exact]);
        }
    }
    let failure = (!bad.is_empty())
        .then(|| CliError::Property(format!("super-interval lengths drift from delta for delta in {bad:?}")));
    Ok(Outcome { csv: t.render()?, failure })
}

/// Deterministic and randomized online policies against the adaptive
/// adversary that fails whichever user is scheduled, and the clairvoyant
/// schedule on the channels the max-age rule saw.
pub fn ratio_duel(horizon: u64, seed: u64) -> Result<Outcome> {
    let params = SystemParams::adversarial(2, 1, horizon, seed)?;
    let probs = vec![0.5, 0.5];
    let kinds = [PolicyKind::Cma, PolicyKind::Mmw, PolicyKind::RoundRobin, PolicyKind::ThroughputGreedy, PolicyKind::Rand];
    let mut t = Table::new("ratio duel", &["policy", "kind", "successes", "avg_aoi", "peak_aoi"]);
    t.param("horizon", horizon).param("seed", seed);
    let mut cma_rows = None;
    let mut online_successes = 0;
    for kind in kinds {
        let mut policy = PolicyParams {
            kind,
            success_probs: probs.clone(),
            seed,
        }
        .build(2)?;
        let mut adv = throughput_adversary(seed);
        let mut mob = static_source(Occupancy::single_cell(2));
        let trace = run_simulation(&params, policy.as_mut(), &mut adv, &mut mob)?;
        online_successes += trace.total_successes();
        t.row(cells![
            kind,
            "online",
            trace.total_successes(),
            sig6(avg_aoi_cost(&trace)?),
            sig6(peak_aoi_cost(&trace)?)
        ]);
        if kind == PolicyKind::Cma {
            cma_rows = Some(trace.channel_rows());
        }
    }
    let mut replay = ReplayChannels::from_rows(cma_rows.expect("cma ran"))?;
    let mut mob = static_source(Occupancy::single_cell(2));
    let offline = run_simulation(&params, &mut ClairvoyantSingleGood, &mut replay, &mut mob)?;
    t.row(cells![
        PolicyKind::ClairvoyantSingleGood,
        "offline",
        offline.total_successes(),
        sig6(avg_aoi_cost(&offline)?),
        sig6(peak_aoi_cost(&offline)?)
    ]);
    let failure = (online_successes > 0 || offline.total_successes() as u64 != horizon).then(|| {
        CliError::Property(format!(
            "expected no online successes and {horizon} offline, got {online_successes} and {}",
            offline.total_successes()
        ))
    });
    Ok(Outcome { csv: t.render()?, failure })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpArgs {
    pub p: Vec<f64>,
    pub h_cap: u64,
    pub tol: f64,
    pub max_iters: usize,
    /// Allowed relative gap between the computed gain and `sum 1/p_i`.
    pub rel_tol: f64,
}

/// Relative value iteration for the peak-age MDP of one cell, plus the
/// closed-form Bellman check.
pub fn mdp(args: &MdpArgs) -> Result<Outcome> {
    let vt = relative_value_iteration(&args.p, args.h_cap, args.tol, args.max_iters)?;
    let check = verify_bellman_residual(&args.p, args.h_cap)?;
    let target = peak_optimum(&args.p)?;
    let rel = (vt.lambda - target).abs() / target;
    let mut t = Table::new(
        "mdp",
        &[
            "lambda",
            "sum_inv_p",
            "rel_error",
            "span",
            "iterations",
            "greedy_mismatches",
            "bellman_states",
            "bellman_max_residual",
            "minimizer_is_max_age",
        ],
    );
    t.param("p", join(&args.p))
        .param("h_cap", args.h_cap)
        .param("tol", args.tol)
        .param("max_iters", args.max_iters)
        .param("rel_tol", args.rel_tol);
    t.row(cells![
        sig6(vt.lambda),
        sig6(target),
        sig6(rel),
        sig6(vt.span),
        vt.iterations,
        vt.greedy_mismatches(10),
        check.states,
        sig6(check.max_residual),
        check.minimizer_is_max_age
    ]);
    let mut problems = Vec::new();
    if rel > args.rel_tol {
        problems.push(format!("gain {} is {:.3}% from {target}", vt.lambda, 100.0 * rel));
    }
    if check.max_residual > 1e-10 {
        problems.push(format!("Bellman residual {:e}", check.max_residual));
    }
    if !check.minimizer_is_max_age {
        problems.push(format!("minimizer differs from max-age at {:?}", check.first_mismatch));
    }
    let failure = (!problems.is_empty()).then(|| CliError::Property(problems.join("; ")));
    Ok(Outcome { csv: t.render()?, failure })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailArgs {
    pub p: Vec<f64>,
    pub policy: PolicyKind,
    pub horizon: u64,
    pub k_range: Option<(u64, u64)>,
    pub seed: u64,
}

/// Histogram of the stationary maximum age and its fitted log-slope.
pub fn tail(args: &TailArgs) -> Result<Outcome> {
    let fit = ld_tail_oracle(&args.p, args.policy, args.horizon, args.k_range, args.seed)?;
    let target = -ld_exponent(&args.p)?;
    let mut t = Table::new("tail", &["k", "tail_count", "tail_prob", "in_fit"]);
    t.param("p", join(&args.p))
        .param("policy", args.policy)
        .param("horizon", args.horizon)
        .param("seed", args.seed)
        .param("slope", sig6(fit.slope))
        .param("slope_std_error", sig6(fit.std_error))
        .param("target_slope", sig6(target))
        .param("relative_error", sig6((fit.slope - target).abs() / target.abs()))
        .param("fit_range", format!("{}..={}", fit.k_lo, fit.k_hi))
        .param("mean_gap", sig6(fit.mean_gap));
    for (k, count, prob) in fit.histogram.rows() {
        t.row(cells![k, count, sig6(prob), (fit.k_lo..=fit.k_hi).contains(&k)]);
    }
    Ok(Outcome::ok(t.render()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpView {
    Slots,
    Intervals,
    Stats,
}

fn describe_decision(d: &Decision) -> String {
    d.cells()
        .iter()
        .enumerate()
        .filter_map(|(c, u)| u.map(|u| format!("{}:{}", c + 1, u + 1)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn bits(b: &[bool]) -> String {
    b.iter().map(|&x| if x { '1' } else { '0' }).collect()
}

/// Reads a saved trace and prints one of three views of it. User and cell
/// numbers are 1-based, as in the trace file.
pub fn trace_dump(path: &Path, view: DumpView, burn_in: Option<u64>) -> Result<Outcome> {
    let trace = load_trace(path)?;
    let p = &trace.params;
    let header = |t: &mut Table| {
        t.param("trace", path.display())
            .param("users", p.n_users)
            .param("cells", p.n_cells)
            .param("horizon", p.horizon)
            .param("seed", p.seed);
    };
    match view {
        DumpView::Slots => {
            let mut t = Table::new(
                "trace-dump slots",
                &["t", "decisions", "channel", "successes", "sum_age", "max_age", "max_user"],
            );
            header(&mut t);
            for r in &trace.records {
                t.row(cells![
                    r.t,
                    describe_decision(&r.decision),
                    bits(&r.channel),
                    bits(&r.successes),
                    r.ages_after.sum(),
                    r.ages_after.max(),
                    r.ages_after.max_user() + 1
                ]);
            }
            Ok(Outcome::ok(t.render()?))
        }
        DumpView::Intervals => {
            let d = decompose_super_intervals(&trace)?;
            let report = verify_interval_bound(&d, &trace);
            let mut t = Table::new("trace-dump intervals", &["interval", "start", "end", "length", "max_user", "closed"]);
            header(&mut t);
            let opt = |x: Option<i64>| x.map(|s| s.to_string()).unwrap_or_else(|| "none".into());
            t.param("interval_bound_holds", report.holds())
                .param("interval_bound_min_slack", opt(report.min_slack))
                .param("interval_bound_min_slack_first_n", opt(report.min_slack_early))
                .param("interval_bound_min_slack_after", opt(report.min_slack_steady));
            for (i, iv) in d.intervals.iter().enumerate() {
                t.row(cells![i + 1, iv.start, iv.end, iv.len(), iv.max_user + 1, true]);
            }
            if let Some(o) = &d.open {
                t.row(cells![d.intervals.len() + 1, o.start, "", o.slots, o.max_user + 1, false]);
            }
            let failure = report.violations.first().map(|v| {
                CliError::Property(format!(
                    "age {} exceeds bound {} at slot {} (interval {})",
                    v.age, v.bound, v.slot, v.interval
                ))
            });
            Ok(Outcome { csv: t.render()?, failure })
        }
        DumpView::Stats => {
            let s = stationary_stats(&trace, burn_in)?;
            let mut t = Table::new("trace-dump stats", &["quantity", "value", "std_error"]);
            header(&mut t);
            t.param("slots_after_burn_in", s.slots);
            t.row(cells!["avg_aoi", sig6(s.avg_aoi.mean), sig6(s.avg_aoi.std_error)]);
            t.row(cells!["peak_aoi", sig6(s.peak_aoi.mean), sig6(s.peak_aoi.std_error)]);
            t.row(cells!["sum_age", sig6(s.sum_age.mean), sig6(s.sum_age.std_error)]);
            for (i, a) in s.per_user_avg_age.iter().enumerate() {
                t.row(cells![format!("user_{}_avg_age", i + 1), sig6(*a), ""]);
            }
            Ok(Outcome::ok(t.render()?))
        }
    }
}
