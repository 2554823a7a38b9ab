//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Seeds derive from a single master fixed before any run.

use std::process::ExitCode;
use std::time::Instant;

use arw_core::engine::{check_abelian, check_least_action, check_sleep_monotonicity, stabilize, stabilize_config};
use arw_core::experiments::oracle::all_configurations;
use arw_core::experiments::report::scaling_report;
use arw_core::experiments::stats::{ks_critical, ks_statistic_discrete, mean_se};
use arw_core::experiments::verify::{random_instance, random_policy_pair};
use arw_core::experiments::{exact_expected_t, supercritical_growth_report, Scheme, SweepGrid, TrialOptions};
use arw_core::model::sample_initial;
use arw_core::rng::{self, derive_seed, tag};
use arw_core::subcritical::{set_traps, StackSegment};
use arw_core::supercritical::{
    init_labels_with_stack, run_loop, stabilization_step, Label, Step, Termination, DEFAULT_MAX_ROUNDS,
};
use arw_core::{Configuration, InstructionStack, Params, Policy, Verdict, DEFAULT_BUDGET};
use rand::Rng;
use rayon::prelude::*;

const MASTER: u64 = 20_261_016;
/// Cap for order-independence runs; a capped run is indeterminate and
/// replaced by the next instance.
const CHECK_BUDGET: u64 = 2_000_000;

struct Verdicts {
    passed: usize,
    failed: usize,
    skipped: usize,
}

/// Evaluates instances 0, 1, 2, ... until `want` of them are decided.
fn decided(want: usize, check: impl Fn(u64) -> Verdict + Sync) -> Verdicts {
    let mut v = Verdicts { passed: 0, failed: 0, skipped: 0 };
    let mut next = 0u64;
    while v.passed + v.failed < want {
        let batch: Vec<Verdict> = (next..next + 64).into_par_iter().map(&check).collect();
        next += 64;
        for verdict in batch {
            if v.passed + v.failed == want {
                break;
            }
            match verdict {
                Verdict::Pass => v.passed += 1,
                Verdict::Fail => v.failed += 1,
                Verdict::Indeterminate => v.skipped += 1,
            }
        }
    }
    v
}

fn instance_rng(check: u64, i: u64) -> rand_pcg::Pcg64Mcg {
    rng::stream(derive_seed(MASTER, check, i), tag::AUX)
}

fn abelian() -> (bool, String) {
    let v = decided(500, |i| {
        let mut rng = instance_rng(1, i);
        let p = random_instance(&mut rng, 16);
        let (a, b) = random_policy_pair(&mut rng);
        check_abelian(&p, &a, &b, CHECK_BUDGET)
    });
    (v.failed == 0, format!("{} identical, {} differ, {} capped and replaced", v.passed, v.failed, v.skipped))
}

fn least_action_and_monotonicity() -> (bool, String) {
    let la = decided(200, |i| {
        let mut rng = instance_rng(2, i);
        let p = random_instance(&mut rng, 32);
        let full = stabilize(&p, &Policy::FollowLatest, CHECK_BUDGET);
        if !full.is_stabilized() {
            return Verdict::Indeterminate;
        }
        let prefix = rng.gen_range(0..=full.t() + 1);
        check_least_action(&p, prefix, rng.gen(), CHECK_BUDGET)
    });
    let sm = decided(200, |i| {
        let mut rng = instance_rng(3, i);
        let p = random_instance(&mut rng, 32);
        check_sleep_monotonicity(&p, rng.gen_range(0.0..1.0), rng.gen(), CHECK_BUDGET)
    });
    (
        la.failed == 0 && sm.failed == 0,
        format!(
            "least action {}/{} ({} replaced), sleep monotonicity {}/{} ({} replaced)",
            la.passed,
            la.passed + la.failed,
            la.skipped,
            sm.passed,
            sm.passed + sm.failed,
            sm.skipped
        ),
    )
}

fn oracle_equivalence() -> (bool, String) {
    const TRIALS: u64 = 100_000;
    let mut cases = Vec::new();
    for n in 2..=4 {
        for config in all_configurations(n, 2) {
            for lambda in [0.5, 1.0, 2.0] {
                cases.push((config.clone(), lambda));
            }
        }
    }
    let results: Vec<(bool, f64)> = cases
        .par_iter()
        .enumerate()
        .map(|(c, (config, lambda))| {
            let exact = exact_expected_t(config.n(), config, *lambda).expect("small system").as_f64();
            let samples: Vec<f64> = (0..TRIALS)
                .map(|t| {
                    let stack = InstructionStack::new(derive_seed(MASTER, 1000 + c as u64, t), *lambda);
                    stabilize_config(config.clone(), &stack, &Policy::FollowLatest, u64::MAX).t() as f64
                })
                .collect();
            let (m, se) = mean_se(&samples).unwrap();
            let z = if se > 0.0 { (m - exact).abs() / se } else if m == exact { 0.0 } else { f64::INFINITY };
            (z <= 4.0, z)
        })
        .collect();
    let bad = results.iter().filter(|r| !r.0).count();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    (bad == 0, format!("{} cases, {bad} outside 4 SE, largest |z| {worst:.2}", cases.len()))
}

fn lone_particle() -> (bool, String) {
    const TRIALS: u64 = 100_000;
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, lambda) in [0.1, 1.0, 10.0].into_iter().enumerate() {
        let samples: Vec<u64> = (0..TRIALS)
            .into_par_iter()
            .map(|t| {
                let stack = InstructionStack::new(derive_seed(MASTER, 2000 + k as u64, t), lambda);
                stabilize_config(Configuration::point_mass(16, 0, 1), &stack, &Policy::FollowLatest, u64::MAX).t()
            })
            .collect();
        let p = lambda / (1.0 + lambda);
        let floats: Vec<f64> = samples.iter().map(|&t| t as f64).collect();
        let (m, se) = mean_se(&floats).unwrap();
        let z = (m - 1.0 / p).abs() / se;
        let d = ks_statistic_discrete(&samples, |t| 1.0 - (1.0 - p).powi(t as i32));
        let crit = ks_critical(1e-3, samples.len());
        ok &= z <= 3.0 && d <= crit;
        parts.push(format!("lambda {lambda}: mean {m:.4} vs {:.4} (|z| {z:.2}), KS {d:.4} <= {crit:.4}", 1.0 / p));
    }
    (ok, parts.join("; "))
}

fn subcritical_scaling() -> (bool, String) {
    let grid = SweepGrid {
        n: vec![256, 512, 1024, 2048, 4096],
        mu: vec![0.3],
        lambda: vec![2.0],
        trials: 50,
        budget: DEFAULT_BUDGET,
        scheme: Scheme::Direct,
        seed: derive_seed(MASTER, 5, 0),
    };
    let rep = scaling_report(&grid, &TrialOptions::default()).expect("valid grid");
    let ok = rep.normalized_ratios.iter().all(|&r| r <= 2.0) && rep.rows.iter().all(|r| r.censored_fraction == 0.0);
    let ratios: Vec<String> = rep.normalized_ratios.iter().map(|r| format!("{r:.3}")).collect();
    (ok, format!("normalized median ratios [{}]", ratios.join(", ")))
}

fn supercritical_growth() -> (bool, String) {
    let grid = SweepGrid {
        n: vec![16, 20, 24, 32, 40],
        mu: vec![0.9],
        lambda: vec![0.005],
        trials: 50,
        budget: 100_000_000,
        scheme: Scheme::Direct,
        seed: derive_seed(MASTER, 6, 0),
    };
    let rep = supercritical_growth_report(&grid, &TrialOptions::default()).expect("valid grid");
    let ratio = rep.median_ratio(40, 20);
    let ok = rep.strictly_increasing && rep.slope.is_some_and(|s| s > 0.0) && ratio.is_some_and(|r| r >= 10.0);
    let rows: Vec<String> = rep
        .rows
        .iter()
        .map(|r| format!("n {} median {:.3e} censored {:.0}%", r.n, r.median.value, 100.0 * r.median.censored_fraction))
        .collect();
    (ok, format!("{}; slope {:?}; T(40)/T(20) {:?}", rows.join(", "), rep.slope, ratio))
}

fn trap_scheme() -> (bool, String) {
    let (r, lambda, m) = (200usize, 1.0, 60u32);
    let runs: Vec<_> = (0..200u64)
        .into_par_iter()
        .map(|i| {
            let stack = InstructionStack::new(derive_seed(MASTER, 7, i), lambda);
            set_traps(r, m, &StackSegment::fresh(&stack, 2 * r + 2, 0, r))
        })
        .collect();
    let successes = runs.iter().filter(|run| run.success).count();
    let hits: Vec<bool> = runs.iter().flat_map(|run| run.hit_left.iter().copied()).collect();
    let left = hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64;
    let adv: Vec<f64> = runs.iter().flat_map(|run| run.advances.iter().map(|&a| a as f64)).collect();
    let mean_adv = adv.iter().sum::<f64>() / adv.len() as f64;
    let bound = (1.0 + 1.0 / lambda) * 1.1;
    let ok = successes * 100 >= 95 * runs.len() && (0.4..=0.6).contains(&left) && mean_adv <= bound;
    (ok, format!("success {successes}/200, left fraction {left:.3}, mean advance {mean_adv:.3} <= {bound:.2}"))
}

fn loop_sustainment() -> (bool, String) {
    let (n, mu, lambda) = (200, 0.9, 0.005);
    let kept: Vec<(bool, f64)> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let p = Params::new(n, mu, lambda, derive_seed(MASTER, 8, i)).unwrap();
            let stack = InstructionStack::new(p.seed, lambda);
            let mut s = init_labels_with_stack(&sample_initial(&p), stack).unwrap();
            stabilization_step(&mut s, Step::A, DEFAULT_BUDGET).unwrap();
            let (zero, far) = s.poles();
            let a = s.particles().iter().filter(|q| q.position == zero && !q.sleepy).count();
            stabilization_step(&mut s, Step::B, DEFAULT_BUDGET).unwrap();
            let at_far =
                s.particles().iter().filter(|q| q.label == Label::X && q.position == far && !q.sleepy).count();
            let y_awake = s.particles().iter().filter(|q| q.label == Label::Y).all(|q| !q.sleepy);
            let frac = if a == 0 { 1.0 } else { at_far as f64 / a as f64 };
            (frac >= 0.9 && y_awake, frac)
        })
        .collect();
    let good = kept.iter().filter(|k| k.0).count();
    let mean_frac = kept.iter().map(|k| k.1).sum::<f64>() / kept.len() as f64;

    let mut bounded = 0;
    let mut exact = 0;
    let mut violations = 0;
    for (mu, lambda, budget) in [(0.9, 0.005, 10_000_000u64), (0.75, 1.0, DEFAULT_BUDGET)] {
        for n in [4usize, 6, 8, 10, 12] {
            let res: Vec<(bool, bool)> = (0..40u64)
                .into_par_iter()
                .map(|i| {
                    let p = Params::new(n, mu, lambda, derive_seed(MASTER, 9, i)).unwrap();
                    let truth = stabilize(&p, &Policy::FollowLatest, budget);
                    let rep = run_loop(&p, DEFAULT_MAX_ROUNDS, budget).unwrap();
                    let fixed = rep.termination == Termination::AllAsleep;
                    let ok = rep.total_instructions <= truth.t() && (!fixed || rep.total_instructions == truth.t());
                    (ok, fixed)
                })
                .collect();
            bounded += res.len();
            exact += res.iter().filter(|r| r.1).count();
            violations += res.iter().filter(|r| !r.0).count();
        }
    }
    (
        good >= 90 && violations == 0,
        format!(
            "step B kept >= 0.9A with all Y awake in {good}/100 (mean fraction {mean_frac:.3}); \
             loop <= engine T in {}/{bounded} runs ({exact} fixed, equal there)",
            bounded - violations
        ),
    )
}

fn point_mass_scaling() -> (bool, String) {
    let grid = SweepGrid {
        n: vec![128, 256, 512],
        mu: vec![0.5],
        lambda: vec![1.0],
        trials: 50,
        budget: DEFAULT_BUDGET,
        scheme: Scheme::PointMass,
        seed: derive_seed(MASTER, 10, 0),
    };
    let rep = scaling_report(&grid, &TrialOptions::default()).expect("valid grid");
    let ok = rep.median_ratios.iter().all(|r| (4.0..=16.0).contains(r)) && rep.rows.iter().all(|r| r.censored_fraction == 0.0);
    let ratios: Vec<String> = rep.median_ratios.iter().map(|r| format!("{r:.3}")).collect();
    (ok, format!("median ratios [{}]", ratios.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> (bool, String)); 9] = [
        ("abelian property", abelian),
        ("least action and sleep monotonicity", least_action_and_monotonicity),
        ("oracle equivalence", oracle_equivalence),
        ("lone particle law", lone_particle),
        ("subcritical scaling", subcritical_scaling),
        ("supercritical growth", supercritical_growth),
        ("trap scheme", trap_scheme),
        ("loop sustainment", loop_sustainment),
        ("point mass scaling", point_mass_scaling),
    ];
    let only: Option<usize> = std::env::var("ARW_ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = run();
        if !ok {
            failures += 1;
        }
        println!(
            "criterion {} {}: {} ({detail}) [{:.1}s]",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    }
}
