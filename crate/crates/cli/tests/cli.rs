use std::path::Path;
use std::process::{Command, Output};

fn aoi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aoi"))
        .args(args)
        .current_dir(cwd)
        .env_remove("AOI_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL: &[&str] = &[
    "--set",
    "sim.users=6",
    "--set",
    "sim.horizon=400",
    "--set",
    "sim.replications=1",
    "--set",
    "sim.window=100",
    "--set",
    "mobility.width=2",
    "--set",
    "mobility.height=2",
];

#[test]
fn bounds_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = aoi(&["bounds", "--p", "0.5,0.5"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("# aoi bounds"));
    assert!(text.lines().any(|l| !l.starts_with('#')));
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = aoi(&["simulate", "--set", "sim.users=0", "--set", "sim.horizon=0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("users") && err.contains("horizon"), "{err}");
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = aoi(&["simulate", "--set", "sim.userz=5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--print-config"];
    args.extend_from_slice(SMALL);
    let first = stdout(&aoi(&args, dir.path()));
    let file = dir.path().join("exp.toml");
    std::fs::write(&file, &first).unwrap();
    let second = aoi(&["simulate", "--print-config", file.to_str().unwrap()], dir.path());
    assert!(second.status.success());
    assert_eq!(stdout(&second), first);
}

#[test]
fn out_dir_env_is_used_when_no_flag_or_key() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_env");
    std::fs::create_dir(&target).unwrap();
    let mut args = vec!["simulate"];
    args.extend_from_slice(SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_aoi"))
        .args(&args)
        .current_dir(dir.path())
        .env("AOI_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(target.join("simulate_cma.csv").exists());
    assert!(target.join("simulate_mmw.csv").exists());
    assert!(!dir.path().join("simulate_cma.csv").exists());
}

#[test]
fn out_dir_flag_beats_env() {
    let dir = tempfile::tempdir().unwrap();
    let (env_dir, flag_dir) = (dir.path().join("env"), dir.path().join("flag"));
    std::fs::create_dir(&env_dir).unwrap();
    std::fs::create_dir(&flag_dir).unwrap();
    let mut args = vec!["simulate", "--out-dir", flag_dir.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_aoi"))
        .args(&args)
        .env("AOI_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(flag_dir.join("simulate_cma.csv").exists());
    assert!(!env_dir.join("simulate_cma.csv").exists());
}

#[test]
fn interval_dump_of_a_non_greedy_trace_is_a_property_violation() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--set", "sim.save_traces=true", "--set", "mobility={kind = \"static\", cells = 1}"];
    args.extend_from_slice(&SMALL[..6]);
    let o = aoi(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut traces: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "aoitrace"))
        .collect();
    traces.sort();
    assert_eq!(traces.len(), 2);
    let (cma, mmw) = (&traces[0], &traces[1]);
    assert!(cma.to_string_lossy().contains("cma"));

    let ok = aoi(&["trace-dump", cma.to_str().unwrap(), "--view", "intervals"], dir.path());
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(stdout(&ok).contains("interval_bound_holds = true"));

    let bad = aoi(&["trace-dump", mmw.to_str().unwrap(), "--view", "intervals"], dir.path());
    assert_eq!(bad.status.code(), Some(4), "{}", String::from_utf8_lossy(&bad.stderr));

    let short = aoi(&["trace-dump", mmw.to_str().unwrap(), "--view", "stats"], dir.path());
    assert_eq!(short.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&short.stderr).contains("insufficient data"));
}

#[test]
fn out_flag_writes_the_table_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("t.csv");
    let o = aoi(&["ratio", "tightness", "--delta", "11", "--intervals", "5", "--out", file.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(file).unwrap();
    assert!(text.contains("all_intervals_delta"));
}

#[test]
fn fuzz_budget_exhaustion_exits_with_budget_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = aoi(
        &["ratio", "fuzz", "--instances", "5", "--horizon", "10..10", "--max-states", "3"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
