use aoi_core::channels::{yao_source, ReplayChannels};
use aoi_core::fuzz::{fuzz_instance, FuzzSpec};
use aoi_core::mobility::static_source;
use aoi_core::oracle::{
    brute_force_opt, exhaustive_dfs_opt, ld_tail_oracle, relative_value_iteration, verify_bellman_residual, Metric,
    OracleBudget,
};
use aoi_core::policies::{ClairvoyantSingleGood, Cma, Mmw, Policy, PolicyKind, RandPolicy, RoundRobin};
use aoi_core::{avg_aoi_cost, peak_aoi_cost, run_simulation, Occupancy, SystemParams};

fn spec(t_max: u64) -> FuzzSpec {
    FuzzSpec {
        users: 2..=3,
        cells: 1..=2,
        horizon: 1..=t_max,
    }
}

fn cost(trace: &aoi_core::Trace, metric: Metric) -> f64 {
    match metric {
        Metric::Avg => avg_aoi_cost(trace).unwrap(),
        Metric::Peak => peak_aoi_cost(trace).unwrap(),
    }
}

#[test]
fn no_policy_beats_the_oracle() {
    let budget = OracleBudget::default();
    for id in 0..120 {
        let inst = fuzz_instance(&spec(9), 41, id).unwrap();
        let n = inst.params.n_users;
        let probs = vec![0.5; n];
        let mut policies: Vec<Box<dyn Policy>> = vec![
            Box::new(Cma),
            Box::new(Mmw::new((1..=n).map(|i| i as f64 / n as f64).collect()).unwrap()),
            Box::new(RandPolicy::new(probs, id).unwrap()),
            Box::new(RoundRobin),
        ];
        for metric in [Metric::Avg, Metric::Peak] {
            let opt = brute_force_opt(&inst.channels, &inst.mobility, metric, &budget).unwrap();
            for p in policies.iter_mut() {
                let c = cost(&inst.run(p.as_mut()).unwrap(), metric);
                assert!(c >= opt.cost - 1e-12, "{} {} {metric}: {c} < {}", inst.describe(), p.name(), opt.cost);
            }
        }
    }
}

#[test]
fn oracle_decisions_achieve_the_reported_cost() {
    let budget = OracleBudget::default();
    for id in 0..60 {
        let inst = fuzz_instance(&spec(10), 5, id).unwrap();
        for metric in [Metric::Avg, Metric::Peak] {
            let opt = brute_force_opt(&inst.channels, &inst.mobility, metric, &budget).unwrap();
            let mut replay = aoi_core::policies::ReplayDecisions::new(opt.decisions.clone());
            let trace = inst.run(&mut replay).unwrap();
            assert_eq!(cost(&trace, metric), opt.cost, "{}", inst.describe());
        }
    }
}

#[test]
fn max_age_stays_within_its_competitive_guarantee() {
    let budget = OracleBudget::default();
    for id in 0..200 {
        let inst = fuzz_instance(&spec(10), 77, id).unwrap();
        let n = inst.params.n_users as f64;
        let trace = inst.run(&mut Cma).unwrap();
        for (metric, cap) in [(Metric::Avg, 2.0 * n * n), (Metric::Peak, 2.0 * n)] {
            let opt = brute_force_opt(&inst.channels, &inst.mobility, metric, &budget).unwrap();
            let ratio = cost(&trace, metric) / opt.cost;
            assert!((1.0..=cap).contains(&ratio), "{} {metric}: {ratio}", inst.describe());
        }
    }
}

#[test]
fn memoized_and_plain_search_agree() {
    let budget = OracleBudget::default();
    for id in 0..80 {
        let inst = fuzz_instance(&spec(6), 13, id).unwrap();
        for metric in [Metric::Avg, Metric::Peak] {
            let memo = brute_force_opt(&inst.channels, &inst.mobility, metric, &budget).unwrap();
            let dfs = exhaustive_dfs_opt(&inst.channels, &inst.mobility, metric, &budget).unwrap();
            assert_eq!(memo.cost, dfs, "{} {metric}", inst.describe());
        }
    }
}

#[test]
fn oracle_serves_the_good_user_on_one_good_inputs() {
    let budget = OracleBudget::default();
    for seed in 0..20 {
        let params = SystemParams::adversarial(2, 1, 10, seed).unwrap();
        let mut mob = static_source(Occupancy::single_cell(2));
        let mut ch = yao_source(2, seed).unwrap();
        let trace = run_simulation(&params, &mut ClairvoyantSingleGood, &mut ch, &mut mob).unwrap();
        let rows = trace.channel_rows();
        let mobility = trace.occupancy_rows();

        let opt = brute_force_opt(&rows, &mobility, Metric::Avg, &budget).unwrap();
        assert_eq!(opt.decisions, trace.decisions(), "seed {seed}");
        assert_eq!(opt.cost, avg_aoi_cost(&trace).unwrap());

        let peak = brute_force_opt(&rows, &mobility, Metric::Peak, &budget).unwrap();
        assert_eq!(peak.cost, peak_aoi_cost(&trace).unwrap());

        // Replaying the same channels under the max-age rule cannot do better.
        let mut replay = ReplayChannels::from_rows(rows.clone()).unwrap();
        let cma = run_simulation(&params, &mut Cma, &mut replay, &mut mob).unwrap();
        assert!(avg_aoi_cost(&cma).unwrap() >= opt.cost);
    }
}

#[test]
fn value_iteration_recovers_the_peak_optimum() {
    let vt = relative_value_iteration(&[0.5, 0.5], 60, 1e-4, 100_000).unwrap();
    assert!((vt.lambda - 4.0).abs() <= 1e-4);
    let vt = relative_value_iteration(&[0.5, 0.8], 80, 1e-4, 100_000).unwrap();
    assert!((vt.lambda - 3.25).abs() <= 1e-4);
    assert_eq!(vt.greedy_mismatches(10), 0);
    let vt = relative_value_iteration(&[1.0], 5, 1e-9, 100).unwrap();
    assert!((vt.lambda - 1.0).abs() < 1e-9);
}

#[test]
fn bellman_residual_vanishes_for_random_probabilities() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let n = rng.random_range(1..=3);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..=1.0)).collect();
        let check = verify_bellman_residual(&p, 25).unwrap();
        assert!(check.max_residual <= 1e-10, "{p:?}");
        assert!(check.minimizer_is_max_age, "{p:?}");
    }
}

#[test]
fn max_age_tail_decays_at_the_weakest_channel_rate() {
    let p = [0.5, 0.7];
    let fit = ld_tail_oracle(&p, PolicyKind::Cma, 2_000_000, None, 21).unwrap();
    let target = 0.5f64.ln();
    assert!((fit.slope - target).abs() <= 0.1 * target.abs(), "{}", fit.slope);
    // The tail can never be thinner than the weakest user's own geometric tail.
    for &(k, prob) in &fit.points {
        assert!(prob >= 0.5f64.powi(k as i32) * 0.9, "k = {k}: {prob}");
    }
}
