//! Policy-driven toppling over an instruction stack.
//!
//! A [`TopplingState`] owns a configuration, its odometer and a stack. Each
//! topple consumes the next unread instruction at the chosen site. Unstable
//! sites are tracked incrementally so that every policy selects in O(1) or
//! O(n / 64).

use rand::Rng;
use rand_pcg::Pcg64Mcg;

use crate::error::{ArwError, Result};
use crate::model::{sample_initial, Configuration, Effect, Instruction, Params};
use crate::rng::{self, tag};
use crate::stack::InstructionStack;

pub const DEFAULT_BUDGET: u64 = 1_000_000_000;

/// Per-site count of consumed instructions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Odometer {
    h: Vec<u64>,
}

impl Odometer {
    pub fn new(n: usize) -> Self {
        Self { h: vec![0; n] }
    }

    pub fn from_counts(h: Vec<u64>) -> Self {
        Self { h }
    }

    #[inline]
    pub fn get(&self, x: usize) -> u64 {
        self.h[x]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.h
    }

    pub fn total(&self) -> u64 {
        self.h.iter().sum()
    }

    /// True iff `self(x) <= other(x)` for every site.
    pub fn dominated_by(&self, other: &Odometer) -> bool {
        self.h.len() == other.h.len() && self.h.iter().zip(&other.h).all(|(a, b)| a <= b)
    }

    #[inline]
    fn bump(&mut self, x: usize) -> u64 {
        self.h[x] += 1;
        self.h[x]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Policy {
    LeftmostUnstable,
    RandomUnstable(u64),
    /// Passes over the cycle from site 0 upward, toppling each unstable site
    /// once per visit.
    SweepCyclic,
    /// Topples the most recently activated site, which follows a moving
    /// particle until it stops. Cheapest per topple.
    FollowLatest,
    Restricted(Box<Policy>, Vec<usize>),
}

impl Policy {
    pub fn restricted(inner: Policy, allowed_sites: impl IntoIterator<Item = usize>) -> Self {
        Policy::Restricted(Box::new(inner), allowed_sites.into_iter().collect())
    }

    /// Innermost policy and the intersection of all site restrictions.
    fn flatten(&self, n: usize) -> (&Policy, Option<Vec<bool>>) {
        match self {
            Policy::Restricted(inner, sites) => {
                let (base, nested) = inner.flatten(n);
                let mut allowed = vec![false; n];
                for &x in sites {
                    allowed[x % n] = true;
                }
                if let Some(nested) = nested {
                    allowed.iter_mut().zip(nested).for_each(|(a, b)| *a &= b);
                }
                (base, Some(allowed))
            }
            other => (other, None),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Stabilized { t: u64, config: Configuration, odometer: Odometer },
    BudgetExceeded { t: u64, partial: Configuration, odometer: Odometer },
}

impl Outcome {
    pub fn t(&self) -> u64 {
        match self {
            Outcome::Stabilized { t, .. } | Outcome::BudgetExceeded { t, .. } => *t,
        }
    }

    pub fn is_stabilized(&self) -> bool {
        matches!(self, Outcome::Stabilized { .. })
    }

    pub fn config(&self) -> &Configuration {
        match self {
            Outcome::Stabilized { config, .. } => config,
            Outcome::BudgetExceeded { partial, .. } => partial,
        }
    }

    pub fn odometer(&self) -> &Odometer {
        match self {
            Outcome::Stabilized { odometer, .. } | Outcome::BudgetExceeded { odometer, .. } => odometer,
        }
    }
}

/// Three-valued result of an executable property check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// A run hit its budget before the property could be decided.
    Indeterminate,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// Set of toppleable sites: dense list for random choice plus a bitset for
/// ordered scans.
#[derive(Debug, Clone)]
struct ActiveIndex {
    dense: Vec<usize>,
    pos: Vec<u32>,
    bits: Vec<u64>,
}

const ABSENT: u32 = u32::MAX;

impl ActiveIndex {
    fn new(n: usize) -> Self {
        Self { dense: Vec::new(), pos: vec![ABSENT; n], bits: vec![0; n.div_ceil(64)] }
    }

    #[inline]
    fn set(&mut self, x: usize, present: bool) {
        let here = self.pos[x] != ABSENT;
        if present && !here {
            self.pos[x] = self.dense.len() as u32;
            self.dense.push(x);
            self.bits[x >> 6] |= 1 << (x & 63);
        } else if !present && here {
            let p = self.pos[x] as usize;
            let last = self.dense.pop().expect("nonempty");
            if last != x {
                self.dense[p] = last;
                self.pos[last] = p as u32;
            }
            self.pos[x] = ABSENT;
            self.bits[x >> 6] &= !(1 << (x & 63));
        }
    }

    /// Smallest member `>= from`, if any.
    fn next_from(&self, from: usize) -> Option<usize> {
        let mut w = from >> 6;
        if w >= self.bits.len() {
            return None;
        }
        let mut word = self.bits[w] & (!0u64 << (from & 63));
        loop {
            if word != 0 {
                return Some((w << 6) | word.trailing_zeros() as usize);
            }
            w += 1;
            if w == self.bits.len() {
                return None;
            }
            word = self.bits[w];
        }
    }
}

/// Mutable state of one toppling run.
#[derive(Debug, Clone)]
pub struct TopplingState {
    config: Configuration,
    odometer: Odometer,
    stack: InstructionStack,
    total: u64,
    trace: Option<Vec<usize>>,
    allowed: Option<Vec<bool>>,
    index: ActiveIndex,
}

impl TopplingState {
    pub fn new(config: Configuration, stack: InstructionStack) -> Self {
        let n = config.n();
        Self::with_odometer(config, stack, Odometer::new(n))
    }

    /// Resumes from an odometer: the next instruction read at `x` is
    /// `odometer(x) + 1`.
    pub fn with_odometer(config: Configuration, stack: InstructionStack, odometer: Odometer) -> Self {
        let n = config.n();
        let mut state =
            Self { config, odometer, stack, total: 0, trace: None, allowed: None, index: ActiveIndex::new(n) };
        state.total = state.odometer.total();
        state.rebuild_index();
        state
    }

    pub fn record_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn odometer(&self) -> &Odometer {
        &self.odometer
    }

    pub fn stack(&self) -> &InstructionStack {
        &self.stack
    }

    /// Total consumed instructions, always equal to the odometer sum.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn trace(&self) -> Option<&[usize]> {
        self.trace.as_deref()
    }

    pub fn into_parts(self) -> (Configuration, Odometer) {
        (self.config, self.odometer)
    }

    /// Sites currently eligible for toppling under the active restriction.
    pub fn toppleable(&self) -> &[usize] {
        &self.index.dense
    }

    fn rebuild_index(&mut self) {
        let n = self.config.n();
        self.index = ActiveIndex::new(n);
        for x in 0..n {
            self.sync(x);
        }
    }

    #[inline]
    fn sync(&mut self, x: usize) {
        let ok = self.config.get(x).active() >= 1 && self.allowed.as_ref().is_none_or(|a| a[x]);
        self.index.set(x, ok);
    }

    fn set_allowed(&mut self, allowed: Option<Vec<bool>>) {
        self.allowed = allowed;
        self.rebuild_index();
    }

    /// Consumes instruction `h(x) + 1` at `x` and applies it.
    #[inline]
    pub fn topple(&mut self, x: usize) -> Result<Effect> {
        self.topple_as(x, |_, instr| instr).map(|(_, effect)| effect)
    }

    /// Consumes instruction `h(x) + 1` at `x` but applies
    /// `rewrite(index, instruction)` instead, e.g. to ignore a sleep.
    #[inline]
    pub fn topple_as(
        &mut self,
        x: usize,
        rewrite: impl FnOnce(u64, Instruction) -> Instruction,
    ) -> Result<(Instruction, Effect)> {
        if self.config.get(x).active() == 0 {
            return Err(ArwError::IllegalTopple { site: x });
        }
        let j = self.odometer.bump(x);
        self.total += 1;
        let instr = rewrite(j, self.stack.draw(x, j));
        let effect = self.config.apply(x, instr);
        if let Some(trace) = &mut self.trace {
            trace.push(x);
        }
        self.sync(x);
        if let Effect::Moved(dest) = effect {
            self.sync(dest);
        }
        Ok((instr, effect))
    }

    /// Topples policy-selected sites until nothing in the allowed set is
    /// unstable or `budget` further instructions have been consumed.
    /// Returns `true` when the allowed set was fully stabilized.
    pub fn run(&mut self, policy: &Policy, budget: u64) -> bool {
        let (base, allowed) = policy.flatten(self.config.n());
        if allowed.is_some() || self.allowed.is_some() {
            self.set_allowed(allowed);
        }
        let cap = self.total.saturating_add(budget);
        if *base == Policy::FollowLatest {
            return self.run_follow(cap);
        }
        let mut chooser = Chooser::new(base);
        while !self.index.dense.is_empty() {
            if self.total >= cap {
                return false;
            }
            let x = chooser.pick(&self.index);
            self.topple(x).expect("policy selected a toppleable site");
        }
        true
    }

    /// Follows one moving particle until it sleeps or stalls, then resumes
    /// the most recently left unstable site. The index is rebuilt once at
    /// the end instead of per topple.
    fn run_follow(&mut self, cap: u64) -> bool {
        let n = self.config.n();
        let allowed = self.allowed.take();
        let ok = |x: usize| allowed.as_ref().is_none_or(|a| a[x]);
        let mut pending = self.index.dense.clone();
        let mut queued = vec![false; n];
        pending.iter().for_each(|&x| queued[x] = true);
        let next = |pending: &mut Vec<usize>, queued: &mut Vec<bool>, config: &Configuration| {
            while let Some(y) = pending.pop() {
                queued[y] = false;
                if config.get(y).active() > 0 && ok(y) {
                    return Some(y);
                }
            }
            None
        };
        let mut current = next(&mut pending, &mut queued, &self.config);
        'outer: while let Some(mut x) = current {
            loop {
                if self.total >= cap {
                    break 'outer;
                }
                let j = self.odometer.bump(x);
                self.total += 1;
                let effect = self.config.apply(x, self.stack.draw(x, j));
                if let Some(trace) = &mut self.trace {
                    trace.push(x);
                }
                match effect {
                    Effect::Moved(dest) => {
                        if self.config.get(x).active() > 0 && !queued[x] {
                            queued[x] = true;
                            pending.push(x);
                        }
                        if !ok(dest) {
                            break;
                        }
                        x = dest;
                    }
                    Effect::NoOp => {}
                    Effect::Slept => break,
                    Effect::Illegal => unreachable!("followed site holds an active particle"),
                }
            }
            current = next(&mut pending, &mut queued, &self.config);
        }
        self.allowed = allowed;
        self.rebuild_index();
        self.index.dense.is_empty()
    }

    fn outcome(&self, stabilized: bool) -> Outcome {
        if stabilized && self.config.is_stable() {
            Outcome::Stabilized { t: self.total, config: self.config.clone(), odometer: self.odometer.clone() }
        } else {
            Outcome::BudgetExceeded { t: self.total, partial: self.config.clone(), odometer: self.odometer.clone() }
        }
    }
}

enum Chooser {
    Latest,
    Leftmost,
    Random(Pcg64Mcg),
    Sweep(usize),
}

impl Chooser {
    fn new(policy: &Policy) -> Self {
        match policy {
            Policy::LeftmostUnstable => Chooser::Leftmost,
            Policy::RandomUnstable(seed) => Chooser::Random(rng::stream(*seed, tag::POLICY)),
            Policy::SweepCyclic => Chooser::Sweep(0),
            Policy::FollowLatest => Chooser::Latest,
            Policy::Restricted(..) => unreachable!("restrictions are flattened before choosing"),
        }
    }

    #[inline]
    fn pick(&mut self, index: &ActiveIndex) -> usize {
        match self {
            Chooser::Latest => *index.dense.last().expect("nonempty"),
            Chooser::Leftmost => index.next_from(0).expect("nonempty"),
            Chooser::Random(rng) => index.dense[rng.gen_range(0..index.dense.len())],
            Chooser::Sweep(cursor) => {
                let x = index.next_from(*cursor).or_else(|| index.next_from(0)).expect("nonempty");
                *cursor = x + 1;
                x
            }
        }
    }
}

/// Functional form of [`TopplingState::topple`].
pub fn topple(mut state: TopplingState, x: usize) -> Result<TopplingState> {
    state.topple(x)?;
    Ok(state)
}

/// Stabilizes `config` over `stack`.
pub fn stabilize_config(config: Configuration, stack: &InstructionStack, policy: &Policy, budget: u64) -> Outcome {
    let mut state = TopplingState::new(config, stack.clone());
    let done = state.run(policy, budget);
    state.outcome(done)
}

/// Stabilizes the Bernoulli initial configuration of `params` over the
/// stack seeded by `params.seed`.
pub fn stabilize(params: &Params, policy: &Policy, budget: u64) -> Outcome {
    let stack = InstructionStack::new(params.seed, params.lambda);
    stabilize_config(sample_initial(params), &stack, policy, budget)
}

/// Topples only `allowed_sites` until none of them holds an active
/// particle. Particles elsewhere are frozen.
pub fn restricted_stabilize(state: &mut TopplingState, allowed_sites: &[usize], budget: u64) -> Result<()> {
    let policy = Policy::restricted(Policy::FollowLatest, allowed_sites.iter().copied());
    let done = state.run(&policy, budget);
    state.set_allowed(None);
    if done {
        Ok(())
    } else {
        Err(ArwError::BudgetExceeded { budget })
    }
}

/// Runs two policies on the identical stack and compares final
/// configuration, odometer and total.
pub fn check_abelian(params: &Params, policy_a: &Policy, policy_b: &Policy, budget: u64) -> Verdict {
    let stack = InstructionStack::new(params.seed, params.lambda);
    check_abelian_config(&sample_initial(params), &stack, policy_a, policy_b, budget)
}

pub fn check_abelian_config(
    config: &Configuration,
    stack: &InstructionStack,
    policy_a: &Policy,
    policy_b: &Policy,
    budget: u64,
) -> Verdict {
    let a = stabilize_config(config.clone(), stack, policy_a, budget);
    let b = stabilize_config(config.clone(), stack, policy_b, budget);
    if !(a.is_stabilized() && b.is_stabilized()) {
        return Verdict::Indeterminate;
    }
    Verdict::from_bool(a == b)
}

/// Compares a full stabilizing odometer with the odometer of a random legal
/// sequence of `prefix_len` topples on a fresh state over the same stack.
pub fn check_least_action(params: &Params, prefix_len: u64, prefix_seed: u64, budget: u64) -> Verdict {
    let stack = InstructionStack::new(params.seed, params.lambda);
    let config = sample_initial(params);
    let full = stabilize_config(config.clone(), &stack, &Policy::LeftmostUnstable, budget);
    if !full.is_stabilized() {
        return Verdict::Indeterminate;
    }
    let mut prefix = TopplingState::new(config, stack);
    prefix.run(&Policy::RandomUnstable(prefix_seed), prefix_len);
    Verdict::from_bool(prefix.odometer().dominated_by(full.odometer()))
}

/// Stabilizes once over `stack` and once over `masked`, a copy with some
/// sleeps nulled, and checks that the masked odometer dominates.
pub fn check_sleep_monotonicity_with(
    config: &Configuration,
    stack: &InstructionStack,
    masked: &InstructionStack,
    budget: u64,
) -> Verdict {
    let plain = stabilize_config(config.clone(), stack, &Policy::LeftmostUnstable, budget);
    if !plain.is_stabilized() {
        return Verdict::Indeterminate;
    }
    let ignored = stabilize_config(config.clone(), masked, &Policy::LeftmostUnstable, budget);
    let dominates = plain.odometer().dominated_by(ignored.odometer());
    match (ignored.is_stabilized(), dominates) {
        (true, ok) => Verdict::from_bool(ok),
        (false, true) => Verdict::Pass,
        (false, false) => Verdict::Indeterminate,
    }
}

pub fn check_sleep_monotonicity(params: &Params, mask_fraction: f64, mask_seed: u64, budget: u64) -> Verdict {
    let stack = InstructionStack::new(params.seed, params.lambda);
    let masked = stack.with_random_mask(mask_fraction, mask_seed);
    check_sleep_monotonicity_with(&sample_initial(params), &stack, &masked, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SiteState;

    #[test]
    fn topple_counts_noop_sleeps() {
        // Pick a seed whose first instruction at site 0 is a sleep.
        let seed = (0..).find(|&s| InstructionStack::new(s, 1.0).draw(0, 1) == Instruction::Sleep).unwrap();
        let stack = InstructionStack::new(seed, 1.0);
        let mut st = TopplingState::new(Configuration::point_mass(4, 0, 2), stack.clone());
        assert_eq!(st.topple(0).unwrap(), Effect::NoOp);
        assert_eq!(st.odometer().get(0), 1);
        assert_eq!(st.total(), 1);
        assert_eq!(st.config().get(0), SiteState::Active(2));

        let mut lone = TopplingState::new(Configuration::point_mass(4, 0, 1), stack);
        assert_eq!(lone.topple(0).unwrap(), Effect::Slept);
        assert_eq!(lone.config().get(0), SiteState::Sleepy);
        assert_eq!(lone.odometer().get(0), 1);
    }

    #[test]
    fn topple_empty_site_is_illegal() {
        let mut st = TopplingState::new(Configuration::point_mass(4, 0, 1), InstructionStack::new(0, 1.0));
        assert_eq!(st.topple(2), Err(ArwError::IllegalTopple { site: 2 }));
        assert_eq!(st.total(), 0);
    }

    #[test]
    fn empty_config_stabilizes_immediately() {
        let out = stabilize_config(Configuration::empty(10), &InstructionStack::new(1, 1.0), &Policy::SweepCyclic, 10);
        assert_eq!(out.t(), 0);
        assert!(out.is_stabilized());
    }

    #[test]
    fn lone_particle_stops_at_first_sleep() {
        let stack = InstructionStack::new(77, 0.5);
        let out = stabilize_config(Configuration::point_mass(50, 0, 1), &stack, &Policy::LeftmostUnstable, 1000);
        let Outcome::Stabilized { t, config, .. } = out else { panic!() };
        assert_eq!(config.sleepy_total(), 1);
        // Replaying the walk by hand gives the same count.
        let (mut x, mut h, mut steps) = (0usize, [0u64; 50], 0u64);
        loop {
            h[x] += 1;
            steps += 1;
            match stack.draw(x, h[x]) {
                Instruction::Sleep => break,
                Instruction::JumpLeft => x = (x + 49) % 50,
                Instruction::JumpRight => x = (x + 1) % 50,
                Instruction::Null => unreachable!(),
            }
        }
        assert_eq!(t, steps);
    }

    #[test]
    fn policies_agree() {
        let p = Params::new(12, 0.5, 1.0, 5).unwrap();
        let a = stabilize(&p, &Policy::LeftmostUnstable, DEFAULT_BUDGET);
        let b = stabilize(&p, &Policy::RandomUnstable(9), DEFAULT_BUDGET);
        let c = stabilize(&p, &Policy::SweepCyclic, DEFAULT_BUDGET);
        assert!(a.is_stabilized());
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn abelian_on_two_sites() {
        let p = Params::new(2, 0.5, 1.0, 0).unwrap();
        let stack = InstructionStack::new(p.seed, p.lambda);
        let config = Configuration::point_mass(2, 0, 1);
        assert_eq!(
            check_abelian_config(&config, &stack, &Policy::LeftmostUnstable, &Policy::RandomUnstable(1), 1000),
            Verdict::Pass
        );
    }

    #[test]
    fn abelian_sweep_vs_random_dense() {
        // Dense, low sleep rate: T is heavy tailed, so cap each run and only
        // require that no decided instance disagrees.
        let verdicts: Vec<Verdict> = (0..30)
            .map(|seed| {
                let p = Params::new(16, 0.8, 0.2, seed).unwrap();
                check_abelian(&p, &Policy::SweepCyclic, &Policy::RandomUnstable(seed + 100), 2_000_000)
            })
            .collect();
        assert!(!verdicts.contains(&Verdict::Fail));
        assert!(verdicts.iter().filter(|&&v| v == Verdict::Pass).count() >= 5, "{verdicts:?}");
    }

    #[test]
    fn abelian_budget_is_indeterminate() {
        let p = Params::new(16, 0.8, 0.2, 3).unwrap();
        assert_eq!(check_abelian(&p, &Policy::SweepCyclic, &Policy::LeftmostUnstable, 2), Verdict::Indeterminate);
    }

    #[test]
    fn least_action_edges() {
        let p = Params::new(10, 0.5, 1.0, 4).unwrap();
        assert_eq!(check_least_action(&p, 0, 1, DEFAULT_BUDGET), Verdict::Pass);
        // A prefix long enough to stabilize reproduces the odometer exactly.
        let full = stabilize(&p, &Policy::LeftmostUnstable, DEFAULT_BUDGET);
        let mut other = TopplingState::new(sample_initial(&p), InstructionStack::new(p.seed, p.lambda));
        other.run(&Policy::SweepCyclic, u64::MAX);
        assert_eq!(other.odometer(), full.odometer());
        assert_eq!(check_least_action(&p, u64::MAX, 1, DEFAULT_BUDGET), Verdict::Pass);
    }

    #[test]
    fn zero_mask_gives_identical_odometer() {
        let p = Params::new(12, 0.4, 1.0, 8).unwrap();
        let stack = InstructionStack::new(p.seed, p.lambda);
        let config = sample_initial(&p);
        let a = stabilize_config(config.clone(), &stack, &Policy::LeftmostUnstable, DEFAULT_BUDGET);
        let b =
            stabilize_config(config, &stack.with_random_mask(0.0, 3), &Policy::LeftmostUnstable, DEFAULT_BUDGET);
        assert_eq!(a.odometer(), b.odometer());
    }

    #[test]
    fn single_masked_sleep_dominates() {
        let config = Configuration::point_mass(12, 0, 3);
        let stack = InstructionStack::new(21, 1.0);
        let out = stabilize_config(config.clone(), &stack, &Policy::LeftmostUnstable, DEFAULT_BUDGET);
        // Mask the last sleep consumed at some site that consumed one.
        let (x, j) = (0..12)
            .flat_map(|x| (1..=out.odometer().get(x)).map(move |j| (x, j)))
            .filter(|&(x, j)| stack.raw(x, j) == Instruction::Sleep)
            .last()
            .unwrap();
        let masked = stack.with_mask_entries([(x, j)].into_iter().collect()).unwrap();
        assert_eq!(check_sleep_monotonicity_with(&config, &stack, &masked, DEFAULT_BUDGET), Verdict::Pass);
    }

    #[test]
    fn full_mask_is_bounded_by_budget() {
        let p = Params::new(8, 0.5, 1.0, 2).unwrap();
        // Every sleep ignored: the masked run never stabilizes.
        assert_eq!(check_sleep_monotonicity(&p, 1.0, 0, 100_000), Verdict::Pass);
    }

    #[test]
    fn restricted_single_site() {
        let stack = InstructionStack::new(5, 1.0);
        let mut st = TopplingState::new(Configuration::point_mass(10, 4, 1), stack).record_trace();
        restricted_stabilize(&mut st, &[4], 100).unwrap();
        assert!(st.trace().unwrap().iter().all(|&x| x == 4));
        let c = st.config();
        assert!(c.get(4) == SiteState::Sleepy || c.get(3).active() == 1 || c.get(5).active() == 1);
        // The unrestricted index is restored afterwards.
        assert_eq!(st.toppleable().len() as u64, c.sites().iter().filter(|s| s.active() > 0).count() as u64);
    }

    #[test]
    fn restricted_all_sites_matches_stabilize() {
        let p = Params::new(20, 0.5, 1.0, 17).unwrap();
        let stack = InstructionStack::new(p.seed, p.lambda);
        let mut st = TopplingState::new(sample_initial(&p), stack);
        restricted_stabilize(&mut st, &(0..20).collect::<Vec<_>>(), DEFAULT_BUDGET).unwrap();
        let full = stabilize(&p, &Policy::LeftmostUnstable, DEFAULT_BUDGET);
        assert_eq!(st.config(), full.config());
        assert_eq!(st.odometer(), full.odometer());
    }

    #[test]
    fn restricted_excluding_poles_leaves_activity_only_there() {
        let n = 40;
        let stack = InstructionStack::new(2, 0.05);
        let mut st = TopplingState::new(Configuration::from_occupied(n, &(0..n).collect::<Vec<_>>()), stack);
        let allowed: Vec<usize> = (0..n).filter(|&x| x != 0 && x != n / 2).collect();
        restricted_stabilize(&mut st, &allowed, DEFAULT_BUDGET).unwrap();
        for x in allowed {
            assert_eq!(st.config().get(x).active(), 0, "site {x}");
        }
        assert_eq!(st.config().particle_total(), n as u64);
    }

    #[test]
    fn lone_particle_mean_t() {
        // T is geometric with success probability lambda / (1 + lambda): mean 2, variance 2 at lambda = 1.
        let trials = 100_000u64;
        let sum: u64 = (0..trials)
            .map(|s| {
                stabilize_config(
                    Configuration::point_mass(8, 0, 1),
                    &InstructionStack::new(s, 1.0),
                    &Policy::LeftmostUnstable,
                    DEFAULT_BUDGET,
                )
                .t()
            })
            .sum();
        let mean = sum as f64 / trials as f64;
        let se = (2.0f64 / trials as f64).sqrt();
        assert!((mean - 2.0).abs() <= 3.0 * se, "mean {mean}");
    }

    #[test]
    fn sweep_visits_in_order() {
        let mut idx = ActiveIndex::new(130);
        for x in [3, 64, 129] {
            idx.set(x, true);
        }
        assert_eq!(idx.next_from(0), Some(3));
        assert_eq!(idx.next_from(4), Some(64));
        assert_eq!(idx.next_from(65), Some(129));
        assert_eq!(idx.next_from(130), None);
        idx.set(64, false);
        assert_eq!(idx.next_from(4), Some(129));
        assert_eq!(idx.dense.len(), 2);
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use crate::model::SiteState;
    use proptest::prelude::*;

    fn site() -> impl Strategy<Value = SiteState> {
        prop_oneof![4 => (0u32..3).prop_map(SiteState::Active), 1 => Just(SiteState::Sleepy)]
    }

    fn config() -> impl Strategy<Value = Configuration> {
        prop::collection::vec(site(), 2..12).prop_map(Configuration::from_sites)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn stabilization_conserves_particles(c in config(), seed: u64, lambda in 0.1f64..5.0) {
            prop_assume!(c.particle_total() < c.n() as u64);
            let stack = InstructionStack::new(seed, lambda);
            let out = stabilize_config(c.clone(), &stack, &Policy::FollowLatest, 5_000_000);
            prop_assert_eq!(out.config().particle_total(), c.particle_total());
            prop_assert_eq!(out.odometer().total(), out.t());
            if out.is_stabilized() {
                prop_assert!(out.config().is_stable());
                prop_assert_eq!(out.config().sleepy_total(), c.particle_total());
            }
        }

        #[test]
        fn order_does_not_matter(c in config(), seed: u64, lambda in 0.1f64..5.0, policy_seed: u64) {
            prop_assume!(c.particle_total() < c.n() as u64);
            let stack = InstructionStack::new(seed, lambda);
            let v = check_abelian_config(&c, &stack, &Policy::LeftmostUnstable, &Policy::RandomUnstable(policy_seed), 2_000_000);
            prop_assert_ne!(v, Verdict::Fail);
        }
    }
}
