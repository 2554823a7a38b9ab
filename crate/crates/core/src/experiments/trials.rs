//! Trial orchestration with derived per-trial seeds.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{stabilize, stabilize_config, Policy, DEFAULT_BUDGET};
use crate::error::{ArwError, Result};
use crate::model::{Configuration, Params};
use crate::rng::derive_seed;
use crate::stack::InstructionStack;
use crate::subcritical::{full_scheme, DEFAULT_C0};
use crate::supercritical::{run_loop, Termination, DEFAULT_MAX_ROUNDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Plain stabilization of the Bernoulli start.
    Direct,
    /// Gather-and-trap scheme; T is its own instruction count.
    Subcritical,
    /// Stabilization loop with poles.
    Loop,
    /// All `floor(mu n)` particles start active at site 0.
    PointMass,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Direct => "direct",
            Scheme::Subcritical => "subcritical",
            Scheme::Loop => "loop",
            Scheme::PointMass => "pointmass",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = ArwError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Scheme::Direct),
            "subcritical" => Ok(Scheme::Subcritical),
            "loop" => Ok(Scheme::Loop),
            "pointmass" => Ok(Scheme::PointMass),
            other => Err(ArwError::InvalidParams(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialOutcome {
    /// T is exact.
    Fixed,
    /// T is a lower bound: the run stopped at its budget, or the scheme
    /// did not complete.
    Censored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub mu: f64,
    pub lambda: f64,
    pub seed: u64,
    pub trial: u64,
    pub scheme: Scheme,
    #[serde(rename = "T")]
    pub t: u64,
    pub outcome: TrialOutcome,
    pub sleepers: u64,
    pub rounds: Option<u64>,
    pub wall_ms: u64,
}

impl TrialRecord {
    pub fn is_censored(&self) -> bool {
        self.outcome == TrialOutcome::Censored
    }
}

/// Toppling order for the direct and point-mass schemes. T does not depend
/// on it; only speed does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolicyKind {
    Leftmost,
    /// Uniformly random unstable site, seeded from the trial seed.
    Random,
    Sweep,
    #[default]
    Follow,
}

impl PolicyKind {
    pub fn policy(self, seed: u64) -> Policy {
        match self {
            PolicyKind::Leftmost => Policy::LeftmostUnstable,
            PolicyKind::Random => Policy::RandomUnstable(seed),
            PolicyKind::Sweep => Policy::SweepCyclic,
            PolicyKind::Follow => Policy::FollowLatest,
        }
    }
}

impl FromStr for PolicyKind {
    type Err = ArwError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leftmost" => Ok(PolicyKind::Leftmost),
            "random" => Ok(PolicyKind::Random),
            "sweep" => Ok(PolicyKind::Sweep),
            "follow" => Ok(PolicyKind::Follow),
            other => Err(ArwError::InvalidParams(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOptions {
    pub budget: u64,
    pub policy: PolicyKind,
    pub c0: f64,
    pub max_rounds: u64,
    /// Record wall-clock time. Off keeps output byte-reproducible.
    pub timing: bool,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self { budget: DEFAULT_BUDGET, policy: PolicyKind::Follow, c0: DEFAULT_C0, max_rounds: DEFAULT_MAX_ROUNDS, timing: false }
    }
}

fn run_one(params: &Params, trial: u64, scheme: Scheme, opts: &TrialOptions) -> TrialRecord {
    let start = Instant::now();
    let (t, fixed, sleepers, rounds) = match scheme {
        Scheme::Direct => {
            let out = stabilize(params, &opts.policy.policy(params.seed), opts.budget);
            (out.t(), out.is_stabilized(), out.config().sleepy_total(), None)
        }
        Scheme::PointMass => {
            let count = (params.mu * params.n as f64).floor() as u32;
            let config = Configuration::point_mass(params.n, 0, count);
            let stack = InstructionStack::new(params.seed, params.lambda);
            let out = stabilize_config(config, &stack, &opts.policy.policy(params.seed), opts.budget);
            (out.t(), out.is_stabilized(), out.config().sleepy_total(), None)
        }
        Scheme::Subcritical => match full_scheme(params, opts.c0, opts.budget) {
            Ok(rep) => (rep.total(), rep.overall_success, rep.final_config.sleepy_total(), None),
            Err(_) => (opts.budget, false, 0, None),
        },
        Scheme::Loop => match run_loop(params, opts.max_rounds, opts.budget) {
            Ok(rep) => (
                rep.total_instructions,
                rep.termination == Termination::AllAsleep,
                rep.final_sleepers,
                Some(rep.rounds_completed),
            ),
            Err(_) => (0, false, 0, Some(0)),
        },
    };
    TrialRecord {
        n: params.n,
        mu: params.mu,
        lambda: params.lambda,
        seed: params.seed,
        trial,
        scheme,
        t,
        outcome: if fixed { TrialOutcome::Fixed } else { TrialOutcome::Censored },
        sleepers,
        rounds,
        wall_ms: if opts.timing { start.elapsed().as_millis() as u64 } else { 0 },
    }
}

/// Runs `trials` independent trials of one cell. Trial `i` uses the seed
/// `derive_seed(params.seed, cell, i)`; records come back in trial order.
pub fn run_cell(params: &Params, cell: u64, trials: u64, scheme: Scheme, opts: &TrialOptions) -> Vec<TrialRecord> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let p = Params { seed: derive_seed(params.seed, cell, i), ..*params };
            run_one(&p, i, scheme, opts)
        })
        .collect()
}

pub fn run_trials(params: &Params, trials: u64, scheme: Scheme, budget: u64) -> Vec<TrialRecord> {
    run_cell(params, 0, trials, scheme, &TrialOptions { budget, ..TrialOptions::default() })
}

/// Cartesian product of parameter lists, enumerated n-major, then mu, then
/// lambda.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub n: Vec<usize>,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub trials: u64,
    pub budget: u64,
    pub scheme: Scheme,
    pub seed: u64,
}

impl SweepGrid {
    pub fn cells(&self) -> Result<Vec<Params>> {
        let mut out = Vec::with_capacity(self.n.len() * self.mu.len() * self.lambda.len());
        for &n in &self.n {
            for &mu in &self.mu {
                for &lambda in &self.lambda {
                    out.push(Params::new(n, mu, lambda, self.seed)?);
                }
            }
        }
        Ok(out)
    }
}

pub fn run_grid(grid: &SweepGrid, opts: &TrialOptions) -> Result<Vec<TrialRecord>> {
    let opts = TrialOptions { budget: grid.budget, ..*opts };
    let cells = grid.cells()?;
    let per_cell: Vec<Vec<TrialRecord>> = cells
        .par_iter()
        .enumerate()
        .map(|(c, p)| run_cell(p, c as u64, grid.trials, grid.scheme, &opts))
        .collect();
    Ok(per_cell.concat())
}
