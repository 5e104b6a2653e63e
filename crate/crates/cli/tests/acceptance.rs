//! Acceptance checks. Each check renders a CSV table and a verdict; the
//! whole set is then run a second time and every table must come out
//! byte-identical. Tables are also written under the cargo tmp dir.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use aoi_cli::commands::{self, FuzzArgs, MdpArgs, TailArgs};
use aoi_cli::config::ExperimentConfig;
use aoi_cli::simulate::{simulate, PolicyRun, SimulateOutput};
use aoi_cli::table::{sig6, Table};
use aoi_core::analysis::{decompose_super_intervals, default_burn_in, verify_interval_bound, StationaryAccumulator};
use aoi_core::bounds::{avg_converse, avg_converse_leading, ld_exponent, mmw_upper_identical, peak_optimum};
use aoi_core::channels::yao_source;
use aoi_core::fuzz::{fuzz_instance, FuzzSpec};
use aoi_core::mobility::{g_uniform, static_source};
use aoi_core::oracle::OracleBudget;
use aoi_core::policies::{ClairvoyantSingleGood, Cma, PolicyKind};
use aoi_core::{run_streaming, Occupancy, SystemParams};

const PROB_SETS: [&[f64]; 3] = [&[0.5, 0.5], &[0.5, 0.8], &[0.3, 0.6, 0.9]];

struct Verdict {
    csv: String,
    pass: bool,
    detail: String,
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_reader(csv.as_bytes());
    r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect()
}

fn config(overrides: &[&str]) -> ExperimentConfig {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::with_overrides("", &o).unwrap()
}

fn run_config(cfg: &ExperimentConfig) -> SimulateOutput {
    let dir = tempfile::tempdir().unwrap();
    simulate(cfg, dir.path()).unwrap()
}

fn all_csv(out: &SimulateOutput) -> String {
    let mut s = out.summary.clone();
    for (path, text) in &out.files {
        let name = path.file_name().unwrap().to_string_lossy();
        let _ = writeln!(s, "## {name}");
        s.push_str(text);
    }
    s
}

fn fixed_p(p: &[f64]) -> String {
    format!("channel.p={p:?}")
}

fn steady_avg(run: &PolicyRun) -> (f64, f64) {
    let (a, _) = run.steady.as_ref().expect("long enough for steady-state averages");
    (a.mean, a.std_error)
}

fn bellman_optimum(timed: bool) -> Verdict {
    let mut csv = String::new();
    let mut pass = true;
    let mut detail = Vec::new();
    for p in PROB_SETS {
        let start = Instant::now();
        let out = commands::mdp(&MdpArgs {
            p: p.to_vec(),
            h_cap: 80,
            tol: 1e-4,
            max_iters: 200_000,
            rel_tol: 0.01,
        })
        .unwrap();
        let took = start.elapsed();
        let row = &data_rows(&out.csv)[0];
        let ok = out.failure.is_none() && (!timed || took < Duration::from_secs(60));
        pass &= ok;
        detail.push(format!("{p:?}: lambda {} vs {} residual {}", row[0], row[1], row[7]));
        csv.push_str(&out.csv);
    }
    Verdict {
        csv,
        pass,
        detail: detail.join("; "),
    }
}

fn max_age_peak_optimality(timed: bool) -> Verdict {
    let start = Instant::now();
    let mut t = Table::new("acceptance max-age-peak", &["p", "peak_aoi", "std_error", "sum_inv_p", "rel_error"]);
    let mut pass = true;
    let mut csv_runs = String::new();
    for p in PROB_SETS {
        let cfg = config(&[
            &format!("sim.users={}", p.len()),
            "sim.horizon=1000000",
            "sim.replications=1",
            "sim.seed=7",
            "sim.window=100000",
            "sim.metrics=[\"peak\"]",
            "policy.kinds=[\"cma\"]",
            &fixed_p(p),
            "mobility={kind = \"static\", cells = 1}",
        ]);
        let out = run_config(&cfg);
        let run = &out.runs[0];
        let peak = run.steady.as_ref().unwrap().1;
        let target = peak_optimum(p).unwrap();
        let rel = (peak.mean - target).abs() / target;
        pass &= rel <= 0.02;
        t.row(vec![format!("{p:?}"), sig6(peak.mean), sig6(peak.std_error), sig6(target), sig6(rel)]);
        csv_runs.push_str(&all_csv(&out));
    }
    let took = start.elapsed();
    if timed {
        pass &= took < Duration::from_secs(30);
    }
    let csv = t.render().unwrap() + &csv_runs;
    let detail = data_rows(&csv)
        .iter()
        .take(3)
        .map(|r| format!("{} {} vs {}", r[0], r[1], r[3]))
        .collect::<Vec<_>>()
        .join("; ");
    Verdict { csv, pass, detail }
}

fn renewal_constants() -> Verdict {
    let horizon = 1_000_000;
    let mut t = Table::new("acceptance renewal", &["users", "user", "avg_age", "target", "rel_error"]);
    t.param("horizon", horizon).param("seed", 3);
    let mut pass = true;
    let mut detail = Vec::new();
    for n in [2usize, 4] {
        let params = SystemParams::adversarial(n, 1, horizon, 3).unwrap();
        let mut ch = yao_source(n, 3).unwrap();
        let mut mob = static_source(Occupancy::single_cell(n));
        let mut acc = StationaryAccumulator::new(n, horizon, default_burn_in(horizon));
        run_streaming(&params, &mut ClairvoyantSingleGood, &mut ch, &mut mob, |r| acc.observe(&r.ages_after)).unwrap();
        let s = acc.finish().unwrap();
        let nf = n as f64;
        for (i, a) in s.per_user_avg_age.iter().enumerate() {
            let rel = (a - nf).abs() / nf;
            pass &= rel <= 0.02;
            t.row(vec![n.to_string(), (i + 1).to_string(), sig6(*a), sig6(nf), sig6(rel)]);
        }
        let rel = (s.sum_age.mean - nf * nf).abs() / (nf * nf);
        pass &= rel <= 0.02;
        t.row(vec![n.to_string(), "total".into(), sig6(s.sum_age.mean), sig6(nf * nf), sig6(rel)]);
        detail.push(format!("N={n}: total {:.4} vs {}", s.sum_age.mean, n * n));
    }
    Verdict {
        csv: t.render().unwrap(),
        pass,
        detail: detail.join("; "),
    }
}

fn tightness() -> Verdict {
    let n = 3.0;
    let out = commands::ratio_tightness(3, &[501], 100).unwrap();
    let rows = data_rows(&out.csv);
    let ratio = |metric: &str| -> f64 { rows.iter().find(|r| r[2] == metric).unwrap()[5].parse().unwrap() };
    let (avg, peak) = (ratio("avg"), ratio("peak"));
    let exact = rows.iter().all(|r| r[7] == "true");
    let pass = out.failure.is_none() && exact && avg >= 0.9 * n * n && peak >= 0.9 * (2.0 * n - 1.0);
    Verdict {
        detail: format!("avg ratio {avg} (need {}), peak ratio {peak} (need {})", 0.9 * n * n, 0.9 * (2.0 * n - 1.0)),
        csv: out.csv,
        pass,
    }
}

fn upper_bound_fuzz() -> Verdict {
    let out = commands::ratio_fuzz(&FuzzArgs {
        spec: FuzzSpec {
            users: 2..=3,
            cells: 1..=2,
            horizon: 1..=10,
        },
        instances: 500,
        seed: 2024,
        budget: OracleBudget::default(),
    })
    .unwrap();
    let rows = data_rows(&out.csv);
    let max = |m: &str| {
        rows.iter()
            .filter(|r| r[4] == m)
            .map(|r| r[7].parse::<f64>().unwrap() / r[8].parse::<f64>().unwrap())
            .fold(0.0, f64::max)
    };
    Verdict {
        detail: format!(
            "500 instances, worst ratio/guarantee avg {:.3} peak {:.3}, failure: {}",
            max("avg"),
            max("peak"),
            out.failure.as_ref().map(|e| e.to_string()).unwrap_or_else(|| "none".into())
        ),
        pass: out.failure.is_none(),
        csv: out.csv,
    }
}

fn super_interval_bound() -> Verdict {
    let spec = FuzzSpec {
        users: 1..=4,
        cells: 1..=3,
        horizon: 1..=200,
    };
    let mut t = Table::new(
        "acceptance super-interval-bound",
        &["users", "traces", "slots_checked", "min_slack", "min_slack_after_first_n", "violations"],
    );
    t.param("traces", 10_000).param("seed", 17);
    let mut stats = [(0u64, 0u64, i64::MAX, i64::MAX, 0usize); 5];
    for id in 0..10_000 {
        let inst = fuzz_instance(&spec, 17, id).unwrap();
        let trace = inst.run(&mut Cma).unwrap();
        let report = verify_interval_bound(&decompose_super_intervals(&trace).unwrap(), &trace);
        let s = &mut stats[inst.params.n_users];
        s.0 += 1;
        s.1 += report.slots_checked;
        s.2 = s.2.min(report.min_slack.unwrap_or(i64::MAX));
        s.3 = s.3.min(report.min_slack_steady.unwrap_or(i64::MAX));
        s.4 += report.violations.len();
    }
    let show = |x: i64| if x == i64::MAX { String::new() } else { x.to_string() };
    let mut violations = 0;
    for (n, s) in stats.iter().enumerate().skip(1) {
        violations += s.4;
        t.row(vec![n.to_string(), s.0.to_string(), s.1.to_string(), show(s.2), show(s.3), s.4.to_string()]);
    }
    Verdict {
        csv: t.render().unwrap(),
        pass: violations == 0,
        detail: format!("10000 traces, {violations} violations"),
    }
}

fn max_weight_sandwich() -> Verdict {
    let (n, m, p) = (32usize, 16usize, 0.5);
    let probs = vec![p; n];
    let cfg = config(&[
        "sim.users=32",
        "sim.horizon=1000000",
        "sim.replications=1",
        "sim.seed=5",
        "sim.window=100000",
        "policy.kinds=[\"mmw\"]",
        &fixed_p(&probs),
        "mobility={kind = \"iid\", cells = 16}",
    ]);
    let out = run_config(&cfg);
    let (avg, se) = steady_avg(&out.runs[0]);
    let g = g_uniform(n, m);
    let lo = avg_converse(&probs, g).unwrap();
    let hi = mmw_upper_identical(n, m, p).unwrap();
    let identity = hi / avg_converse_leading(&probs, g).unwrap();
    let inside = avg >= 0.98 * lo && avg <= 1.02 * hi;
    let exact_two = (identity - 2.0).abs() <= 1e-12;

    let mut t = Table::new("acceptance max-weight-sandwich", &["quantity", "value"]);
    t.param("users", n).param("cells", m).param("p", p);
    for (k, v) in [("avg_converse", lo), ("mmw_avg_aoi", avg), ("mmw_avg_se", se), ("mmw_upper", hi), ("g", g)] {
        t.row(vec![k.into(), sig6(v)]);
    }
    t.row(vec!["upper_over_converse_leading".into(), format!("{identity:.15}")]);
    Verdict {
        csv: t.render().unwrap() + &all_csv(&out),
        pass: inside && exact_two,
        detail: format!("{lo:.4} <= {avg:.4} <= {hi:.4} (2% slack), upper / leading converse = {identity}"),
    }
}

fn tail_decay() -> Verdict {
    let two = commands::tail(&TailArgs {
        p: vec![0.5, 0.7],
        policy: PolicyKind::Cma,
        horizon: 5_000_000,
        k_range: None,
        seed: 11,
    })
    .unwrap();
    let one = commands::tail(&TailArgs {
        p: vec![0.4],
        policy: PolicyKind::Cma,
        horizon: 20_000_000,
        k_range: None,
        seed: 11,
    })
    .unwrap();
    let slope = |csv: &str| -> f64 {
        let line = csv.lines().find(|l| l.starts_with("# slope = ")).unwrap();
        line["# slope = ".len()..].parse().unwrap()
    };
    let (s2, s1) = (slope(&two.csv), slope(&one.csv));
    let (t2, t1) = (-ld_exponent(&[0.5, 0.7]).unwrap(), -ld_exponent(&[0.4]).unwrap());
    let (e2, e1) = ((s2 - t2).abs() / t2.abs(), (s1 - t1).abs() / t1.abs());
    Verdict {
        detail: format!(
            "N=2 slope {s2} vs {t2:.6} ({:.2}%), N=1 slope {s1} vs {t1:.6} ({:.2}%)",
            100.0 * e2,
            100.0 * e1
        ),
        pass: e2 <= 0.10 && e1 <= 0.05,
        csv: two.csv + &one.csv,
    }
}

fn one_good_lower_bound() -> Verdict {
    let cfg = config(&[
        "sim.users=2",
        "sim.horizon=1000000",
        "sim.replications=1",
        "sim.seed=9",
        "sim.window=100000",
        "sim.metrics=[\"avg\"]",
        "policy.kinds=[\"cma\", \"mmw\", \"rand\", \"round-robin\"]",
        "channel.kind=yao",
        "channel.p=[0.5, 0.5]",
        "mobility={kind = \"static\", cells = 1}",
    ]);
    let out = run_config(&cfg);
    let mut pass = true;
    let mut detail = Vec::new();
    for run in &out.runs {
        let (avg, se) = steady_avg(run);
        let (sum, sum_se) = (2.0 * avg, 2.0 * se);
        pass &= sum >= 6.0 - 3.0 * sum_se;
        detail.push(format!("{} {sum:.4}", run.policy));
    }
    Verdict {
        csv: all_csv(&out),
        pass,
        detail: format!("sum-age (need >= 6 - 3 SE): {}", detail.join(", ")),
    }
}

fn desk_scale_orderings() -> Verdict {
    let preset = |name: &str| ExperimentConfig::from_toml(ExperimentConfig::preset(name).unwrap()).unwrap();
    let avg_out = run_config(&preset("grid_avg"));
    let peak_out = run_config(&preset("grid_peak"));
    let by_seed = |out: &SimulateOutput, pick: fn(&PolicyRun) -> f64| -> Vec<(u64, f64, f64)> {
        let seeds: Vec<u64> = out.runs.iter().filter(|r| r.policy == PolicyKind::Cma).map(|r| r.seed).collect();
        seeds
            .iter()
            .map(|&s| {
                let get = |k| pick(out.runs.iter().find(|r| r.seed == s && r.policy == k).unwrap());
                (s, get(PolicyKind::Cma), get(PolicyKind::Mmw))
            })
            .collect()
    };
    let avg = by_seed(&avg_out, |r| r.avg_aoi);
    let peak = by_seed(&peak_out, |r| r.peak_aoi);
    let avg_ok = avg.iter().all(|&(_, cma, mmw)| mmw < cma);
    let peak_ok = peak.iter().all(|&(_, cma, mmw)| cma < mmw);
    let fmt = |v: &[(u64, f64, f64)]| {
        v.iter()
            .map(|(s, c, m)| format!("seed {s} cma {c:.4} mmw {m:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    Verdict {
        csv: all_csv(&avg_out) + &all_csv(&peak_out),
        pass: avg_ok && peak_ok,
        detail: format!(
            "avg (mmw < cma: {avg_ok}): {}; peak (cma < mmw: {peak_ok}): {}",
            fmt(&avg),
            fmt(&peak)
        ),
    }
}

type Check = (&'static str, fn(bool) -> Verdict);

fn checks() -> Vec<Check> {
    vec![
        ("bellman optimum of the peak-age MDP", bellman_optimum),
        ("max-age attains the peak optimum", max_age_peak_optimality),
        ("clairvoyant renewal constants", |_| renewal_constants()),
        ("tightness of the max-age ratios", |_| tightness()),
        ("max-age within 2N^2 / 2N of the offline optimum", |_| upper_bound_fuzz()),
        ("super-interval age bound on fuzzed traces", |_| super_interval_bound()),
        ("max-weight between converse and guarantee", |_| max_weight_sandwich()),
        ("max-age tail decay rate", |_| tail_decay()),
        ("one-good-channel lower bound for online policies", |_| one_good_lower_bound()),
        ("desk-scale grid orderings", |_| desk_scale_orderings()),
    ]
}

fn out_dir() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn main() {
    let dir = out_dir();
    std::fs::create_dir_all(&dir).unwrap();
    let mut failures = 0;
    let mut first = Vec::new();
    for (i, (name, check)) in checks().into_iter().enumerate() {
        let start = Instant::now();
        let v = check(true);
        let verdict = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {verdict}: {name} [{:.1}s] {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            v.detail
        );
        if !v.pass {
            failures += 1;
        }
        std::fs::write(dir.join(format!("criterion_{:02}.csv", i + 1)), &v.csv).unwrap();
        first.push(v.csv);
    }

    let start = Instant::now();
    let mut differing = Vec::new();
    for (i, (_, check)) in checks().into_iter().enumerate() {
        if check(false).csv != first[i] {
            differing.push(i + 1);
        }
    }
    let pass = differing.is_empty();
    println!(
        "criterion 11 {}: reruns reproduce every table byte for byte [{:.1}s] {}",
        if pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        if pass {
            format!("{} tables identical", first.len())
        } else {
            format!("tables differ for criteria {differing:?}")
        }
    );
    if !pass {
        failures += 1;
    }
    println!("tables written to {}", dir.display());
    if failures > 0 {
        println!("{failures} of 11 criteria failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
