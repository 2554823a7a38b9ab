//! Low-density stabilization: gather to sources, then settle each source's
//! particles on traps inside its interval.
//!
//! Phase 1 walks every particle to the nearest source with all sleeps
//! ignored. Phase 2 handles each source independently: particles leave the
//! source one at a time along their exploration paths; each path ends at one
//! of two barriers and the nearest site behind that barrier whose
//! second-to-last read instruction was an ignored sleep becomes the
//! particle's trap and the new barrier. Replaying a path up to that sleep
//! puts the particle to rest alone at its trap.
//!
//! Every instruction the scheme consumes comes from the same stack as the
//! plain engine, with ignored sleeps acting as nulls, so the scheme's
//! odometer dominates the true stabilizing odometer whenever it succeeds.

use rayon::prelude::*;

use crate::engine::{restricted_stabilize, Odometer, TopplingState};
use crate::error::{ArwError, Result};
use crate::model::{sample_initial, Configuration, Instruction, Params, SiteState};
use crate::stack::InstructionStack;

pub const DEFAULT_C0: f64 = 10.0;

/// Partition of the cycle into intervals with a source at each midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceLayout {
    pub n: usize,
    pub c0: f64,
    /// `floor(c0 * ln n)`; every interval has this length except possibly
    /// the last, which absorbs the remainder.
    pub interval_len: usize,
    pub starts: Vec<usize>,
    pub lengths: Vec<usize>,
    pub sources: Vec<usize>,
}

impl SourceLayout {
    pub fn k(&self) -> usize {
        self.sources.len()
    }

    pub fn is_source(&self) -> Vec<bool> {
        let mut mark = vec![false; self.n];
        self.sources.iter().for_each(|&z| mark[z] = true);
        mark
    }

    /// Even trap radius used inside every interval.
    pub fn trap_radius(&self) -> usize {
        self.interval_len & !1
    }
}

pub fn make_layout(n: usize, c0: f64) -> Result<SourceLayout> {
    let raw = c0 * (n as f64).ln();
    let interval_len = if raw.is_finite() && raw > 0.0 { raw.floor() as usize } else { 0 };
    if interval_len < 2 || n < 2 * interval_len {
        return Err(ArwError::LayoutTooCoarse { n, interval_len });
    }
    let k = n / interval_len;
    let starts: Vec<usize> = (0..k).map(|i| i * interval_len).collect();
    let lengths: Vec<usize> =
        (0..k).map(|i| if i + 1 == k { n - (k - 1) * interval_len } else { interval_len }).collect();
    let sources = starts.iter().zip(&lengths).map(|(s, l)| s + l / 2).collect();
    Ok(SourceLayout { n, c0, interval_len, starts, lengths, sources })
}

/// Signed offset of `to` from `from` on the ring, in `(-n/2, n/2]`.
fn ring_offset(from: usize, to: usize, n: usize) -> i64 {
    let d = (to + n - from) % n;
    if 2 * d > n {
        d as i64 - n as i64
    } else {
        d as i64
    }
}

/// Probability that a simple random walk from `site` reaches source
/// `source_idx` before either neighbouring source (gambler's ruin). For the
/// regular spacing this is `1 - |site - z| / interval_len`.
pub fn hit_prob(site: usize, layout: &SourceLayout, source_idx: usize) -> Result<f64> {
    let k = layout.k();
    let n = layout.n;
    let z = layout.sources[source_idx];
    let gap = |a: usize, b: usize| (b + n - a) % n;
    let left_gap = gap(layout.sources[(source_idx + k - 1) % k], z) as i64;
    let right_gap = gap(z, layout.sources[(source_idx + 1) % k]) as i64;
    let d = ring_offset(z, site % n, n);
    let p = if (0..=right_gap).contains(&d) {
        1.0 - d as f64 / right_gap as f64
    } else if (-left_gap..0).contains(&d) {
        1.0 + d as f64 / left_gap as f64
    } else {
        return Err(ArwError::OutOfWindow { site, source_site: z });
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Result of the gathering phase.
#[derive(Debug, Clone)]
pub struct Gathered {
    pub config: Configuration,
    pub odometer: Odometer,
    pub t1: u64,
}

/// Topples every non-source site with all sleeps ignored until all
/// particles sit on sources.
pub fn gather_phase(
    config: Configuration,
    stack: &InstructionStack,
    layout: &SourceLayout,
    budget: u64,
) -> Result<Gathered> {
    let is_source = layout.is_source();
    let allowed: Vec<usize> = (0..layout.n).filter(|&x| !is_source[x]).collect();
    let mut state = TopplingState::new(config, stack.ignoring_sleeps());
    restricted_stabilize(&mut state, &allowed, budget)?;
    let t1 = state.total();
    let (config, odometer) = state.into_parts();
    Ok(Gathered { config, odometer, t1 })
}

/// Read-only view of the stack around one source. Offsets run over
/// `[-r/2, r/2]`; the next instruction read at offset `o` is
/// `base[o + r/2] + 1`.
#[derive(Debug, Clone)]
pub struct StackSegment<'a> {
    pub stack: &'a InstructionStack,
    pub n: usize,
    pub center: usize,
    pub r: usize,
    pub base: Vec<u64>,
}

impl<'a> StackSegment<'a> {
    /// A segment at `center` whose read positions start from `odometer`.
    pub fn from_odometer(stack: &'a InstructionStack, odometer: &Odometer, center: usize, r: usize) -> Self {
        let n = odometer.as_slice().len();
        let half = (r / 2) as i64;
        let base = (-half..=half).map(|o| odometer.get(site_at(center, o, n))).collect();
        Self { stack, n, center, r, base }
    }

    /// A segment over an unread stack.
    pub fn fresh(stack: &'a InstructionStack, n: usize, center: usize, r: usize) -> Self {
        assert!(n > r, "segment must not wrap onto itself");
        Self { stack, n, center, r, base: vec![0; r + 1] }
    }

    pub fn site(&self, offset: i64) -> usize {
        site_at(self.center, offset, self.n)
    }

    fn slot(&self, offset: i64) -> usize {
        (offset + (self.r / 2) as i64) as usize
    }
}

fn site_at(center: usize, offset: i64, n: usize) -> usize {
    (center as i64 + offset).rem_euclid(n as i64) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trap {
    /// Offset from the source.
    pub offset: i64,
    /// Absolute stack index of the sleep the particle executes there.
    pub index: u64,
}

/// State and outcome of trap setting for the particles of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapRun {
    pub r: usize,
    pub m: u32,
    /// Left barriers `a_0 = -r/2 < a_1 <= ...`, one entry per settled particle.
    pub a: Vec<i64>,
    /// Right barriers `b_0 = r/2 > b_1 >= ...`.
    pub b: Vec<i64>,
    pub traps: Vec<Trap>,
    pub hit_left: Vec<bool>,
    /// Distance from the barrier hit by each particle to its trap.
    pub advances: Vec<u64>,
    /// Instructions read by the explorations, including those never replayed.
    pub explored: u64,
    pub success: bool,
}

#[derive(Clone, Copy, Default)]
struct LastReads {
    stamp: u32,
    prev: Option<(u64, Instruction)>,
    last: Option<(u64, Instruction)>,
}

/// Explores the segment's stack to find a trap for each of `m` particles
/// starting at offset 0. Stops at the first particle without a trap.
pub fn set_traps(r: usize, m: u32, segment: &StackSegment<'_>) -> TrapRun {
    assert!(r % 2 == 0 && r >= 2, "trap radius must be even and positive");
    assert_eq!(segment.r, r);
    let half = (r / 2) as i64;
    let mut run = TrapRun {
        r,
        m,
        a: vec![-half],
        b: vec![half],
        traps: Vec::with_capacity(m as usize),
        hit_left: Vec::with_capacity(m as usize),
        advances: Vec::with_capacity(m as usize),
        explored: 0,
        success: true,
    };
    let mut next = segment.base.clone();
    let mut reads = vec![LastReads::default(); r + 1];
    for particle in 1..=m {
        let (a, b) = (*run.a.last().unwrap(), *run.b.last().unwrap());
        let mut pos = 0i64;
        while pos != a && pos != b {
            let slot = segment.slot(pos);
            next[slot] += 1;
            let j = next[slot];
            let instr = segment.stack.raw(segment.site(pos), j);
            run.explored += 1;
            let rec = &mut reads[slot];
            if rec.stamp != particle {
                *rec = LastReads { stamp: particle, prev: None, last: None };
            }
            rec.prev = rec.last.replace((j, instr));
            match instr {
                Instruction::JumpLeft => pos -= 1,
                Instruction::JumpRight => pos += 1,
                _ => {}
            }
        }
        let left = pos == a;
        let behind: Box<dyn Iterator<Item = i64>> = if left { Box::new(a + 1..0) } else { Box::new((1..b).rev()) };
        let trap = behind.into_iter().find_map(|v| {
            let rec = &reads[segment.slot(v)];
            match (rec.stamp == particle, rec.prev, rec.last) {
                (true, Some((j, Instruction::Sleep)), Some((_, last))) if last.is_jump() => {
                    Some(Trap { offset: v, index: j })
                }
                _ => None,
            }
        });
        let Some(trap) = trap else {
            run.success = false;
            run.hit_left.push(left);
            return run;
        };
        run.hit_left.push(left);
        run.advances.push((trap.offset - pos).unsigned_abs());
        if left {
            run.a.push(trap.offset);
            run.b.push(b);
        } else {
            run.a.push(a);
            run.b.push(trap.offset);
        }
        run.traps.push(trap);
    }
    run.success = *run.a.last().unwrap() < 0 && 0 < *run.b.last().unwrap();
    run
}

/// Replays each particle's exploration path on `state`, ignoring sleeps
/// until it reaches its trap sleep, and executes that sleep. Returns the
/// number of instructions consumed.
pub fn run_traps(run: &TrapRun, state: &mut TopplingState, center: usize) -> Result<u64> {
    assert!(run.success, "replay requires a successful trap run");
    let n = state.config().n();
    let start = state.total();
    for (i, trap) in run.traps.iter().enumerate() {
        let (a, b) = (run.a[i], run.b[i]);
        let mut pos = 0i64;
        loop {
            let x = site_at(center, pos, n);
            let j = state.odometer().get(x) + 1;
            if pos == trap.offset && j == trap.index {
                if state.config().get(x) != SiteState::Active(1) {
                    return Err(ArwError::TrapCollision { site: x });
                }
                let (instr, _) = state.topple_as(x, |_, instr| instr)?;
                debug_assert_eq!(instr, Instruction::Sleep);
                break;
            }
            let (instr, _) = state.topple_as(x, |_, instr| match instr {
                Instruction::Sleep => Instruction::Null,
                other => other,
            })?;
            match instr {
                Instruction::JumpLeft => pos -= 1,
                Instruction::JumpRight => pos += 1,
                _ => {}
            }
            assert!(a < pos && pos < b, "replay left its exploration window");
        }
    }
    Ok(state.total() - start)
}

/// Outcome of the two-phase scheme on one instance.
#[derive(Debug, Clone)]
pub struct PhaseReport {
    pub t1: u64,
    pub t2: u64,
    pub per_interval_success: Vec<bool>,
    pub source_counts: Vec<u32>,
    pub overall_success: bool,
    /// Barrier-hit sides of every particle, per interval.
    pub hit_left: Vec<Vec<bool>>,
    pub advances: Vec<u64>,
    pub final_config: Configuration,
    /// Instructions the scheme consumed, per site.
    pub odometer: Odometer,
}

impl PhaseReport {
    pub fn total(&self) -> u64 {
        self.t1 + self.t2
    }
}

pub fn full_scheme(params: &Params, c0: f64, budget: u64) -> Result<PhaseReport> {
    let layout = make_layout(params.n, c0)?;
    let stack = InstructionStack::new(params.seed, params.lambda);
    full_scheme_config(sample_initial(params), &stack, &layout, budget)
}

pub fn full_scheme_config(
    config: Configuration,
    stack: &InstructionStack,
    layout: &SourceLayout,
    budget: u64,
) -> Result<PhaseReport> {
    let gathered = gather_phase(config, stack, layout, budget)?;
    let r = layout.trap_radius();
    let source_counts: Vec<u32> = layout.sources.iter().map(|&z| gathered.config.get(z).active()).collect();
    let runs: Vec<TrapRun> = layout
        .sources
        .par_iter()
        .zip(&source_counts)
        .map(|(&z, &m)| set_traps(r, m, &StackSegment::from_odometer(stack, &gathered.odometer, z, r)))
        .collect();

    let mut state = TopplingState::with_odometer(gathered.config, stack.clone(), gathered.odometer);
    for (run, &z) in runs.iter().zip(&layout.sources) {
        if run.success {
            run_traps(run, &mut state, z)?;
        }
    }
    let per_interval_success: Vec<bool> = runs.iter().map(|r| r.success).collect();
    let t2 = state.total() - gathered.t1;
    let (final_config, odometer) = state.into_parts();
    Ok(PhaseReport {
        t1: gathered.t1,
        t2,
        overall_success: per_interval_success.iter().all(|&s| s),
        per_interval_success,
        source_counts,
        hit_left: runs.iter().map(|r| r.hit_left.clone()).collect(),
        advances: runs.iter().flat_map(|r| r.advances.iter().copied()).collect(),
        final_config,
        odometer,
    })
}
