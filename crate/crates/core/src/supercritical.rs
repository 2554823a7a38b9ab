//! High-density lower bound: the stabilization loop with poles 0 and n/2.
//!
//! Each loop runs three restricted stabilizations. Step A moves every
//! particle off the poles until it sleeps or reaches a pole. Step B releases
//! the particles sitting at 0 and lets them run until they sleep or reach
//! n/2; step C does the same from n/2 towards 0. Particles outside the
//! released group (Y) never move but are woken by arriving released (X)
//! particles. Every topple is a legal ARW topple on the shared stack, so the
//! loop's instruction count is a lower bound for the stabilization time and
//! equals it once every particle sleeps.

use serde::{Deserialize, Serialize};

use crate::error::{ArwError, Result};
use crate::model::{sample_initial, Configuration, Instruction, Params, SiteState};
use crate::stack::InstructionStack;

pub const DEFAULT_MAX_ROUNDS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Particle {
    pub position: usize,
    pub label: Label,
    pub sleepy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    AllAsleep,
    BudgetExceeded,
    MaxRounds,
}

/// Per-step summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepStats {
    pub instructions: u64,
    /// X arrivals at the target pole from its left and right neighbour.
    pub arrivals_from_left: u64,
    pub arrivals_from_right: u64,
}

/// Particle-level state over a stack, with the consumed-instruction odometer.
#[derive(Debug, Clone)]
pub struct LabeledConfig {
    particles: Vec<Particle>,
    site_view: Configuration,
    at_site: Vec<Vec<u32>>,
    odometer: Vec<u64>,
    stack: InstructionStack,
    total: u64,
}

/// Expands `config` into particle records, all active and labelled for
/// Step A. Sleepy sites become one sleepy particle.
pub fn init_labels(config: &Configuration) -> Result<LabeledConfig> {
    init_labels_with_stack(config, InstructionStack::new(0, 1.0))
}

pub fn init_labels_with_stack(config: &Configuration, stack: InstructionStack) -> Result<LabeledConfig> {
    let n = config.n();
    if n % 2 == 1 {
        return Err(ArwError::OddCycle(n));
    }
    let mut particles = Vec::with_capacity(config.particle_total() as usize);
    let mut at_site = vec![Vec::new(); n];
    for x in 0..n {
        let (count, sleepy) = match config.get(x) {
            SiteState::Active(k) => (k, false),
            SiteState::Sleepy => (1, true),
        };
        for _ in 0..count {
            at_site[x].push(particles.len() as u32);
            let label = if x == 0 || x == n / 2 { Label::Y } else { Label::X };
            particles.push(Particle { position: x, label, sleepy });
        }
    }
    Ok(LabeledConfig { particles, site_view: config.clone(), at_site, odometer: vec![0; n], stack, total: 0 })
}

impl LabeledConfig {
    pub fn n(&self) -> usize {
        self.site_view.n()
    }

    pub fn poles(&self) -> (usize, usize) {
        (0, self.n() / 2)
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn site_view(&self) -> &Configuration {
        &self.site_view
    }

    pub fn odometer(&self) -> &[u64] {
        &self.odometer
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Rebuilds the site configuration from the particle records.
    pub fn project(&self) -> Configuration {
        let mut sites = vec![SiteState::EMPTY; self.n()];
        for p in &self.particles {
            sites[p.position] = match (sites[p.position], p.sleepy) {
                (SiteState::Active(0), true) => SiteState::Sleepy,
                (SiteState::Active(k), false) => SiteState::Active(k + 1),
                (s, _) => panic!("sleepy particle shares site {} ({s:?})", p.position),
            };
        }
        Configuration::from_sites(sites)
    }

    pub fn active_count(&self) -> u64 {
        self.site_view.active_total()
    }

    fn relabel(&mut self, step: Step) {
        let (zero, r) = self.poles();
        for p in &mut self.particles {
            let x = match step {
                Step::A => p.position != zero && p.position != r,
                Step::B => p.position == zero,
                Step::C => p.position == r,
            };
            p.label = if x { Label::X } else { Label::Y };
        }
    }

    fn active_x_at(&self, x: usize) -> Option<usize> {
        self.at_site[x]
            .iter()
            .map(|&i| i as usize)
            .filter(|&i| self.particles[i].label == Label::X && !self.particles[i].sleepy)
            .min()
    }
}

/// Relabels for `step` and topples sites in the step's allowed set that hold
/// an active X particle until there are none. Fails with `BudgetExceeded`
/// once `budget` instructions have been consumed in this step; the state is
/// left where it stopped.
pub fn stabilization_step(state: &mut LabeledConfig, step: Step, budget: u64) -> Result<StepStats> {
    state.relabel(step);
    let n = state.n();
    let (zero, r) = state.poles();
    let allowed = |x: usize| match step {
        Step::A => x != zero && x != r,
        Step::B => x != r,
        Step::C => x != zero,
    };
    let target = match step {
        Step::A => None,
        Step::B => Some(r),
        Step::C => Some(zero),
    };

    let mut active_x = vec![0u32; n];
    for p in &state.particles {
        if p.label == Label::X && !p.sleepy && allowed(p.position) {
            active_x[p.position] += 1;
        }
    }
    let mut pending: Vec<usize> = (0..n).filter(|&x| active_x[x] > 0).collect();
    let mut queued: Vec<bool> = active_x.iter().map(|&c| c > 0).collect();
    let mut stats = StepStats::default();
    let mut cur: Option<usize> = None;

    loop {
        let x = match cur {
            Some(x) if active_x[x] > 0 => x,
            _ => loop {
                match pending.pop() {
                    None => return Ok(stats),
                    Some(y) => {
                        queued[y] = false;
                        if active_x[y] > 0 {
                            break y;
                        }
                    }
                }
            },
        };
        if stats.instructions >= budget {
            return Err(ArwError::BudgetExceeded { budget });
        }
        let j = state.odometer[x] + 1;
        state.odometer[x] = j;
        state.total += 1;
        stats.instructions += 1;
        let instr = state.stack.draw(x, j);
        match instr {
            Instruction::Sleep | Instruction::Null => {
                if instr == Instruction::Sleep && state.site_view.get(x) == SiteState::Active(1) {
                    let i = state.at_site[x][0] as usize;
                    state.particles[i].sleepy = true;
                    state.site_view.apply(x, instr);
                    active_x[x] -= 1;
                    cur = None;
                } else {
                    cur = Some(x);
                }
            }
            Instruction::JumpLeft | Instruction::JumpRight => {
                let mover = state.active_x_at(x).expect("toppled site holds an active X");
                let dest = if instr == Instruction::JumpLeft { state.site_view.left(x) } else { state.site_view.right(x) };
                let list = &mut state.at_site[x];
                let slot = list.iter().position(|&i| i as usize == mover).unwrap();
                list.swap_remove(slot);
                active_x[x] -= 1;
                if let Some(&sleeper) = state.at_site[dest].first() {
                    let q = &mut state.particles[sleeper as usize];
                    if q.sleepy {
                        q.sleepy = false;
                        if q.label == Label::X && allowed(dest) {
                            active_x[dest] += 1;
                        }
                    }
                }
                state.at_site[dest].push(mover as u32);
                state.particles[mover].position = dest;
                state.site_view.apply(x, instr);
                if Some(dest) == target {
                    if instr == Instruction::JumpRight {
                        stats.arrivals_from_left += 1;
                    } else {
                        stats.arrivals_from_right += 1;
                    }
                }
                if active_x[x] > 0 && !queued[x] {
                    queued[x] = true;
                    pending.push(x);
                }
                if allowed(dest) {
                    active_x[dest] += 1;
                    cur = Some(dest);
                } else {
                    cur = None;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub rounds_completed: u64,
    /// Active particle count after each completed loop.
    pub per_round_active: Vec<u64>,
    pub total_instructions: u64,
    pub termination: Termination,
    pub final_sleepers: u64,
}

/// Runs the loop on the Bernoulli initial configuration of `params` over the
/// stack seeded by `params.seed`.
pub fn run_loop(params: &Params, max_rounds: u64, budget: u64) -> Result<LoopReport> {
    let stack = InstructionStack::new(params.seed, params.lambda);
    let mut state = init_labels_with_stack(&sample_initial(params), stack)?;
    Ok(run_loop_on(&mut state, max_rounds, budget))
}

pub fn run_loop_on(state: &mut LabeledConfig, max_rounds: u64, budget: u64) -> LoopReport {
    let start = state.total();
    let mut per_round_active = Vec::new();
    let termination = loop {
        if state.active_count() == 0 {
            break Termination::AllAsleep;
        }
        if per_round_active.len() as u64 >= max_rounds {
            break Termination::MaxRounds;
        }
        let over = [Step::A, Step::B, Step::C].into_iter().any(|step| {
            let left = budget.saturating_sub(state.total() - start);
            stabilization_step(state, step, left).is_err()
        });
        if over {
            break Termination::BudgetExceeded;
        }
        per_round_active.push(state.active_count());
    };
    LoopReport {
        rounds_completed: per_round_active.len() as u64,
        per_round_active,
        total_instructions: state.total() - start,
        termination,
        final_sleepers: state.site_view().sleepy_total(),
    }
}

/// Sleepy sites strictly between `start` and `end`, walking rightwards from
/// `start`. `start == end` covers the whole cycle except `start`.
pub fn sleepy_interior_count(config: &Configuration, start: usize, end: usize) -> u64 {
    let n = config.n();
    let len = match (end + n - start) % n {
        0 => n,
        d => d,
    };
    (1..len).filter(|&d| config.get((start + d) % n) == SiteState::Sleepy).count() as u64
}
