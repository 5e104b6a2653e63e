//! Running-average experiments: every configured policy on every
//! replication, one CSV per policy.

use std::path::{Path, PathBuf};

use aoi_core::analysis::{StationaryAccumulator, MIN_STATIONARY_SLOTS};
use aoi_core::channels::{
    all_bad, all_good, bec_source, replay_source, throughput_adversary, tightness_adversary, yao_source,
    ChannelSource,
};
use aoi_core::mobility::{grid_walk_source, iid_uniform_source, static_source, torus_walk_source, MobilitySource};
use aoi_core::oracle::Metric;
use aoi_core::policies::{PolicyKind, PolicyParams};
use aoi_core::rng::{stream, stream_rng};
use aoi_core::stats::Estimate;
use aoi_core::trace_io::save_trace;
use aoi_core::{run_simulation, run_streaming, CostAccumulator, Occupancy, SystemParams};
use rand::Rng;
use rayon::prelude::*;

use crate::cells;
use crate::config::{ChannelPlan, ExperimentConfig, MobilityPlan, Plan, ProbSpec};
use crate::error::Result;
use crate::table::{sig6, write_atomic, Table};

/// Running averages of one policy on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRun {
    pub policy: PolicyKind,
    pub replication: u32,
    pub seed: u64,
    /// `(slot, running avg-AoI, running peak-AoI)` every `window` slots and
    /// at the horizon.
    pub checkpoints: Vec<(u64, f64, f64)>,
    pub avg_aoi: f64,
    pub peak_aoi: f64,
    /// Post-burn-in averages, when enough slots remain.
    pub steady: Option<(Estimate, Estimate)>,
    pub successes: u64,
    pub trace_file: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub runs: Vec<PolicyRun>,
    /// Per-policy CSV files, in policy order.
    pub files: Vec<(PathBuf, String)>,
    pub summary: String,
}

/// Success probabilities of one replication. Drawn values lie in `(lo, hi]`.
pub fn replication_probs(spec: &ProbSpec, n_users: usize, seed: u64) -> Vec<f64> {
    match spec {
        ProbSpec::Fixed(v) => v.clone(),
        ProbSpec::Uniform { lo, hi } => {
            let mut rng = stream_rng(seed, stream::PARAMS);
            (0..n_users).map(|_| hi - (hi - lo) * rng.random::<f64>()).collect()
        }
    }
}

fn build_channels(plan: &Plan, probs: &[f64], seed: u64) -> Result<Box<dyn ChannelSource>> {
    let n = plan.n_users;
    Ok(match &plan.channel {
        ChannelPlan::Bec => Box::new(bec_source(probs, seed)?),
        ChannelPlan::Yao => Box::new(yao_source(n, seed)?),
        ChannelPlan::AllGood => Box::new(all_good(n)),
        ChannelPlan::AllBad => Box::new(all_bad(n)),
        ChannelPlan::Tightness { delta } => Box::new(tightness_adversary(n, *delta)?),
        ChannelPlan::Throughput => Box::new(throughput_adversary(seed)),
        ChannelPlan::Replay(path) => Box::new(replay_source(path)?),
    })
}

fn build_mobility(plan: &Plan, seed: u64) -> Result<Box<dyn MobilitySource>> {
    let n = plan.n_users;
    Ok(match plan.mobility {
        MobilityPlan::Grid(g) => Box::new(grid_walk_source(g, n, seed)),
        MobilityPlan::Torus(g) => Box::new(torus_walk_source(g, n, seed)),
        MobilityPlan::Iid { cells } => Box::new(iid_uniform_source(n, cells, seed)?),
        MobilityPlan::Static { cells } => {
            let occ = Occupancy::new((0..n).map(|i| i % cells).collect(), cells)?;
            Box::new(static_source(occ))
        }
    })
}

fn file_stem(kind: &PolicyKind) -> String {
    kind.to_string().replace(':', "-")
}

fn run_one(plan: &Plan, kind: &PolicyKind, replication: u32, trace_dir: Option<&Path>) -> Result<PolicyRun> {
    let seed = plan.replication_seed(replication);
    let probs = plan
        .probs
        .as_ref()
        .map(|s| replication_probs(s, plan.n_users, seed))
        .unwrap_or_default();
    let channel_probs = if plan.channel == ChannelPlan::Bec { probs.clone() } else { Vec::new() };
    let params = SystemParams::new(plan.n_users, plan.n_cells, channel_probs, plan.horizon, seed)?;
    let mut policy = PolicyParams {
        kind: *kind,
        success_probs: probs,
        seed,
    }
    .build(plan.n_users)?;
    let mut channels = build_channels(plan, &params.success_probs, seed)?;
    let mut mobility = build_mobility(plan, seed)?;

    let mut cost = CostAccumulator::new(plan.n_users);
    let mut steady = StationaryAccumulator::new(plan.n_users, plan.horizon, plan.burn_in);
    let mut checkpoints = Vec::new();
    let mut successes = 0u64;
    let mut observe = |rec: &aoi_core::SlotRecord| {
        cost.observe(&rec.ages_after);
        steady.observe(&rec.ages_after);
        successes += rec.successes.iter().filter(|&&s| s).count() as u64;
        if rec.t.is_multiple_of(plan.window) || rec.t == plan.horizon {
            checkpoints.push((rec.t, cost.avg_aoi(), cost.peak_aoi()));
        }
    };

    let mut trace_file = None;
    if let Some(dir) = trace_dir {
        let trace = run_simulation(&params, policy.as_mut(), channels.as_mut(), mobility.as_mut())?;
        trace.records.iter().for_each(&mut observe);
        let path = dir.join(format!("trace_{}_seed{seed}.aoitrace", file_stem(kind)));
        save_trace(&trace, &path)?;
        trace_file = Some(path);
    } else {
        run_streaming(&params, policy.as_mut(), channels.as_mut(), mobility.as_mut(), observe)?;
    }

    let steady = if plan.horizon.saturating_sub(plan.burn_in) >= MIN_STATIONARY_SLOTS {
        let s = steady.finish()?;
        Some((s.avg_aoi, s.peak_aoi))
    } else {
        None
    };
    Ok(PolicyRun {
        policy: *kind,
        replication,
        seed,
        checkpoints,
        avg_aoi: cost.avg_aoi(),
        peak_aoi: cost.peak_aoi(),
        steady,
        successes,
        trace_file,
    })
}

/// Runs every (replication, policy) pair in parallel and renders the CSVs.
/// Nothing is written to disk except traces when `save_traces` is set.
pub fn simulate(config: &ExperimentConfig, out_dir: &Path) -> Result<SimulateOutput> {
    let plan = config.validate()?;
    let trace_dir = plan.save_traces.then_some(out_dir);
    let jobs: Vec<(u32, &PolicyKind)> = (0..plan.replications)
        .flat_map(|r| plan.policies.iter().map(move |k| (r, k)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(r, k)| run_one(&plan, k, r, trace_dir))
        .collect::<Result<Vec<_>>>()?;

    let header_config = config.to_toml();
    let seeds: Vec<String> = (0..plan.replications).map(|r| plan.replication_seed(r).to_string()).collect();
    let mut files = Vec::new();
    for kind in &plan.policies {
        let mut cols = vec!["replication", "seed", "slot"];
        for m in &plan.metrics {
            cols.push(match m {
                Metric::Avg => "avg_aoi",
                Metric::Peak => "peak_aoi",
            });
        }
        let mut t = Table::new("simulate", &cols);
        t.param("policy", kind).param("seeds", seeds.join(",")).comment(header_config.clone());
        for run in runs.iter().filter(|r| &r.policy == kind) {
            for &(slot, avg, peak) in &run.checkpoints {
                let mut row = cells![run.replication, run.seed, slot];
                for m in &plan.metrics {
                    row.push(sig6(if *m == Metric::Avg { avg } else { peak }));
                }
                t.row(row);
            }
        }
        files.push((out_dir.join(format!("simulate_{}.csv", file_stem(kind))), t.render()?));
    }

    let mut s = Table::new(
        "simulate",
        &[
            "policy",
            "replication",
            "seed",
            "slots",
            "avg_aoi",
            "peak_aoi",
            "steady_avg_aoi",
            "steady_avg_se",
            "steady_peak_aoi",
            "steady_peak_se",
            "successes",
        ],
    );
    s.param("seeds", seeds.join(",")).param("burn_in", plan.burn_in).comment(header_config);
    for run in &runs {
        let (sa, sae, sp, spe) = match &run.steady {
            Some((a, p)) => (sig6(a.mean), sig6(a.std_error), sig6(p.mean), sig6(p.std_error)),
            None => Default::default(),
        };
        s.row(cells![
            run.policy,
            run.replication,
            run.seed,
            plan.horizon,
            sig6(run.avg_aoi),
            sig6(run.peak_aoi),
            sa,
            sae,
            sp,
            spe,
            run.successes
        ]);
    }
    Ok(SimulateOutput {
        runs,
        files,
        summary: s.render()?,
    })
}

/// Output directory: the explicit flag, then `sim.out_dir`, then the
/// `AOI_OUT_DIR` environment variable, then the working directory.
pub fn resolve_out_dir(flag: Option<&Path>, config: &ExperimentConfig, env: Option<PathBuf>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.sim.out_dir.clone())
        .or(env)
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn write_files(out: &SimulateOutput) -> Result<()> {
    for (path, text) in &out.files {
        write_atomic(path, text)?;
    }
    Ok(())
}
