//! Randomized self-checks of the simulator.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_pcg::Pcg64Mcg;
use rayon::prelude::*;
use serde::Serialize;

use super::oracle::{all_configurations, exact_expected_t};
use super::stats::mean_se;
use crate::engine::{
    check_abelian, check_least_action, check_sleep_monotonicity, stabilize, stabilize_config, Policy, Verdict,
    DEFAULT_BUDGET,
};
use crate::error::ArwError;
use crate::model::{sample_initial, Params, SiteState};
use crate::rng::{self, derive_seed, tag};
use crate::stack::InstructionStack;
use crate::subcritical::{gather_phase, make_layout, set_traps, StackSegment};
use crate::supercritical::{run_loop, Termination, DEFAULT_MAX_ROUNDS};

pub const DENSITIES: [f64; 3] = [0.2, 0.5, 0.8];
pub const SLEEP_RATES: [f64; 3] = [0.2, 1.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub instances: usize,
    pub seed: u64,
    /// Per-run instruction cap; runs that hit it are indeterminate.
    pub budget: u64,
    /// Monte Carlo trials per configuration in the oracle comparison.
    pub oracle_trials: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { instances: 100, seed: 1, budget: 2_000_000, oracle_trials: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: usize,
    pub failed: usize,
    pub indeterminate: usize,
}

impl CheckResult {
    fn tally(name: &'static str, verdicts: impl IntoIterator<Item = Verdict>) -> Self {
        let mut r = CheckResult { name, passed: 0, failed: 0, indeterminate: 0 };
        for v in verdicts {
            match v {
                Verdict::Pass => r.passed += 1,
                Verdict::Fail => r.failed += 1,
                Verdict::Indeterminate => r.indeterminate += 1,
            }
        }
        r
    }

    pub fn ok(&self) -> bool {
        self.failed == 0 && self.passed > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifySummary {
    pub checks: Vec<CheckResult>,
}

impl VerifySummary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(CheckResult::ok)
    }
}

impl fmt::Display for VerifySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<26} {:>7} {:>7} {:>13}  status", "check", "passed", "failed", "indeterminate")?;
        for c in &self.checks {
            let status = if c.ok() { "ok" } else { "FAILED" };
            writeln!(f, "{:<26} {:>7} {:>7} {:>13}  {status}", c.name, c.passed, c.failed, c.indeterminate)?;
        }
        write!(f, "overall: {}", if self.all_passed() { "pass" } else { "FAIL" })
    }
}

/// A random small instance for the order-independence checks.
pub fn random_instance(rng: &mut Pcg64Mcg, max_n: usize) -> Params {
    let n = rng.gen_range(2..=max_n);
    let mu = *DENSITIES.choose(rng).unwrap();
    let lambda = *SLEEP_RATES.choose(rng).unwrap();
    Params::new(n, mu, lambda, rng.gen()).expect("valid by construction")
}

/// Two distinct policies drawn at random.
pub fn random_policy_pair(rng: &mut Pcg64Mcg) -> (Policy, Policy) {
    let mut all = vec![
        Policy::LeftmostUnstable,
        Policy::SweepCyclic,
        Policy::FollowLatest,
        Policy::RandomUnstable(rng.gen()),
        Policy::RandomUnstable(rng.gen()),
    ];
    all.shuffle(rng);
    (all[0].clone(), all[1].clone())
}

fn instance_rng(seed: u64, check: u64, i: usize) -> Pcg64Mcg {
    rng::stream(derive_seed(seed, check, i as u64), tag::AUX)
}

fn abelian(cfg: &VerifyConfig) -> CheckResult {
    let verdicts: Vec<Verdict> = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(cfg.seed, 1, i);
            let p = random_instance(&mut rng, 16);
            let (a, b) = random_policy_pair(&mut rng);
            check_abelian(&p, &a, &b, cfg.budget)
        })
        .collect();
    CheckResult::tally("abelian", verdicts)
}

fn least_action(cfg: &VerifyConfig) -> CheckResult {
    let verdicts: Vec<Verdict> = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(cfg.seed, 2, i);
            let p = random_instance(&mut rng, 32);
            let full = stabilize(&p, &Policy::FollowLatest, cfg.budget);
            if !full.is_stabilized() {
                return Verdict::Indeterminate;
            }
            let prefix = rng.gen_range(0..=full.t() + 1);
            check_least_action(&p, prefix, rng.gen(), cfg.budget)
        })
        .collect();
    CheckResult::tally("least_action", verdicts)
}

fn sleep_monotonicity(cfg: &VerifyConfig) -> CheckResult {
    let verdicts: Vec<Verdict> = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(cfg.seed, 3, i);
            let p = random_instance(&mut rng, 32);
            check_sleep_monotonicity(&p, rng.gen_range(0.0..1.0), rng.gen(), cfg.budget)
        })
        .collect();
    CheckResult::tally("sleep_monotonicity", verdicts)
}

/// Masking a jump must be refused.
fn mask_contract(cfg: &VerifyConfig) -> CheckResult {
    let verdicts = (0..cfg.instances).map(|i| {
        let stack = InstructionStack::new(derive_seed(cfg.seed, 4, i as u64), 1.0);
        let (x, j) = (0..64usize)
            .flat_map(|x| (1..64u64).map(move |j| (x, j)))
            .find(|&(x, j)| stack.raw(x, j).is_jump())
            .expect("some jump among 4000 entries");
        match stack.with_mask_entries([(x, j)].into_iter().collect()) {
            Err(ArwError::InvalidMask { site, index }) => Verdict::from_bool(site == x && index == j),
            _ => Verdict::Fail,
        }
    });
    CheckResult::tally("mask_contract", verdicts)
}

fn oracle_equivalence(cfg: &VerifyConfig) -> CheckResult {
    let configs: Vec<_> = all_configurations(3, 2).into_iter().filter(|c| c.active_total() > 0).collect();
    let count = cfg.instances.min(configs.len());
    let verdicts: Vec<Verdict> = (0..count)
        .into_par_iter()
        .map(|i| {
            let config = &configs[i * configs.len() / count];
            let lambda = SLEEP_RATES[i % SLEEP_RATES.len()];
            let Ok(exact) = exact_expected_t(config.n(), config, lambda) else { return Verdict::Fail };
            let samples: Vec<f64> = (0..cfg.oracle_trials)
                .map(|t| {
                    let stack = InstructionStack::new(derive_seed(cfg.seed, 5 + i as u64, t), lambda);
                    stabilize_config(config.clone(), &stack, &Policy::FollowLatest, u64::MAX).t() as f64
                })
                .collect();
            let (m, se) = mean_se(&samples).unwrap();
            Verdict::from_bool((m - exact.as_f64()).abs() <= 4.0 * se)
        })
        .collect();
    CheckResult::tally("oracle_equivalence", verdicts)
}

fn subcritical_invariants(cfg: &VerifyConfig) -> CheckResult {
    let count = (cfg.instances / 10).max(1);
    let verdicts: Vec<Verdict> = (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.seed, 6, i as u64);
            let p = Params::new(1024, 0.2, 1.0, seed).unwrap();
            let layout = make_layout(p.n, 10.0).unwrap();
            let initial = sample_initial(&p);
            let Ok(g) = gather_phase(initial.clone(), &InstructionStack::new(seed, 1.0), &layout, DEFAULT_BUDGET)
            else {
                return Verdict::Indeterminate;
            };
            let sources = layout.is_source();
            let support = (0..p.n).all(|x| sources[x] || g.config.get(x) == SiteState::EMPTY);
            let conserved = g.config.particle_total() == initial.particle_total();
            let stack = InstructionStack::new(seed, 1.0);
            let run = set_traps(60, 12, &StackSegment::fresh(&stack, 240, 0, 60));
            let monotone = run.a.windows(2).all(|w| w[1] >= w[0]) && run.b.windows(2).all(|w| w[1] <= w[0]);
            let one_advance = (0..run.traps.len()).all(|k| (run.a[k + 1] > run.a[k]) != (run.b[k + 1] < run.b[k]));
            let mut sites: Vec<i64> = run.traps.iter().map(|t| t.offset).collect();
            sites.sort_unstable();
            sites.dedup();
            let distinct = sites.len() == run.traps.len() && sites.iter().all(|&t| t != 0 && t.abs() < 30);
            Verdict::from_bool(support && conserved && monotone && one_advance && distinct)
        })
        .collect();
    CheckResult::tally("subcritical_invariants", verdicts)
}

fn supercritical_invariants(cfg: &VerifyConfig) -> CheckResult {
    let verdicts: Vec<Verdict> = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(cfg.seed, 7, i);
            let n = 2 * rng.gen_range(2..=6);
            let lambda = *SLEEP_RATES.choose(&mut rng).unwrap();
            let p = Params::new(n, 0.75, lambda, rng.gen()).unwrap();
            let truth = stabilize(&p, &Policy::FollowLatest, cfg.budget);
            let Ok(rep) = run_loop(&p, DEFAULT_MAX_ROUNDS, cfg.budget) else { return Verdict::Fail };
            if !truth.is_stabilized() {
                return Verdict::Indeterminate;
            }
            let bounded = rep.total_instructions <= truth.t();
            let exact_on_fixation = rep.termination != Termination::AllAsleep || rep.total_instructions == truth.t();
            Verdict::from_bool(bounded && exact_on_fixation && rep.total_instructions >= rep.rounds_completed)
        })
        .collect();
    CheckResult::tally("supercritical_invariants", verdicts)
}

pub fn verify_suite(cfg: &VerifyConfig) -> VerifySummary {
    VerifySummary {
        checks: vec![
            abelian(cfg),
            least_action(cfg),
            sleep_monotonicity(cfg),
            mask_contract(cfg),
            oracle_equivalence(cfg),
            subcritical_invariants(cfg),
            supercritical_invariants(cfg),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let cfg = VerifyConfig { instances: 20, seed: 3, budget: 2_000_000, oracle_trials: 5_000 };
        let s = verify_suite(&cfg);
        assert!(s.all_passed(), "{s}");
        assert_eq!(s.checks.len(), 7);
    }

    #[test]
    fn abelian_on_two_sites() {
        let p = Params::new(2, 0.5, 1.0, 8).unwrap();
        assert_eq!(check_abelian(&p, &Policy::LeftmostUnstable, &Policy::SweepCyclic, u64::MAX), Verdict::Pass);
    }

    #[test]
    fn summary_flags_failures() {
        let s = VerifySummary { checks: vec![CheckResult { name: "x", passed: 3, failed: 1, indeterminate: 0 }] };
        assert!(!s.all_passed());
        assert!(s.to_string().contains("FAILED"));
    }
}
