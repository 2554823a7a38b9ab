//! Exact expected stabilization time for small systems.
//!
//! The discrete-time chain picks an active particle uniformly at random and
//! applies a fresh instruction at its site. Every step consumes exactly one
//! instruction, so the expected absorption time of this chain is the
//! expected stabilization time. The chain is enumerated from the initial
//! state and `E[T]` solved with exact rational arithmetic. Transitions are
//! written out here rather than reusing the engine so that the two can be
//! compared.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{ArwError, Result};
use crate::model::{Configuration, SiteState};

pub const DEFAULT_STATE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub expected_t: BigRational,
    pub state_count: usize,
}

impl OracleResult {
    pub fn as_f64(&self) -> f64 {
        self.expected_t.to_f64().unwrap_or(f64::NAN)
    }
}

type State = Vec<SiteState>;

fn active(s: &State) -> u32 {
    s.iter().map(|x| if let SiteState::Active(k) = x { *k } else { 0 }).sum()
}

/// Successor states of a transient state with their probabilities.
fn successors(s: &State, p_jump: &BigRational, p_sleep: &BigRational) -> Vec<(State, BigRational)> {
    let n = s.len();
    let total = BigRational::from_integer(BigInt::from(active(s)));
    let mut out = Vec::new();
    for (x, &site) in s.iter().enumerate() {
        let SiteState::Active(k) = site else { continue };
        if k == 0 {
            continue;
        }
        let pick = BigRational::from_integer(BigInt::from(k)) / &total;
        for dest in [(x + n - 1) % n, (x + 1) % n] {
            let mut t = s.clone();
            t[x] = SiteState::Active(k - 1);
            t[dest] = match t[dest] {
                SiteState::Sleepy => SiteState::Active(2),
                SiteState::Active(j) => SiteState::Active(j + 1),
            };
            out.push((t, &pick * p_jump));
        }
        let mut t = s.clone();
        if k == 1 {
            t[x] = SiteState::Sleepy;
        }
        out.push((t, &pick * p_sleep));
    }
    out
}

pub fn exact_expected_t(n: usize, initial: &Configuration, lambda: f64) -> Result<OracleResult> {
    exact_expected_t_with_limit(n, initial, lambda, DEFAULT_STATE_LIMIT)
}

pub fn exact_expected_t_with_limit(
    n: usize,
    initial: &Configuration,
    lambda: f64,
    limit: usize,
) -> Result<OracleResult> {
    if initial.n() != n {
        return Err(ArwError::InvalidParams(format!("configuration has {} sites, expected {n}", initial.n())));
    }
    let lambda = BigRational::from_float(lambda)
        .filter(|l| l > &BigRational::zero())
        .ok_or_else(|| ArwError::InvalidParams(format!("lambda must be positive, got {lambda}")))?;
    let particles = initial.particle_total();
    if particles > n as u64 {
        return Err(ArwError::NoAbsorption { particles, n });
    }
    let one = BigRational::one();
    let p_sleep = &lambda / (&one + &lambda);
    let p_jump = (&one - &p_sleep) / BigRational::from_integer(BigInt::from(2));

    // Enumerate transient states reachable from the start.
    let start: State = initial.sites().to_vec();
    if active(&start) == 0 {
        return Ok(OracleResult { expected_t: BigRational::zero(), state_count: 1 });
    }
    let mut index: HashMap<State, usize> = HashMap::new();
    let mut states: Vec<State> = Vec::new();
    let mut queue = VecDeque::new();
    let mut absorbing = 0usize;
    index.insert(start.clone(), 0);
    states.push(start.clone());
    queue.push_back(start);
    let mut rows: Vec<BTreeMap<usize, BigRational>> = Vec::new();
    while let Some(s) = queue.pop_front() {
        let mut row: BTreeMap<usize, BigRational> = BTreeMap::new();
        let i = rows.len();
        row.insert(i, one.clone());
        for (t, p) in successors(&s, &p_jump, &p_sleep) {
            if active(&t) == 0 {
                if !index.contains_key(&t) {
                    index.insert(t, usize::MAX);
                    absorbing += 1;
                }
                continue;
            }
            let j = match index.get(&t) {
                Some(&j) => j,
                None => {
                    let j = states.len();
                    if j + absorbing >= limit {
                        return Err(ArwError::StateSpaceTooLarge { limit });
                    }
                    index.insert(t.clone(), j);
                    states.push(t.clone());
                    queue.push_back(t);
                    j
                }
            };
            *row.entry(j).or_insert_with(BigRational::zero) -= p;
        }
        row.retain(|_, v| !v.is_zero());
        rows.push(row);
    }
    let solution = solve(rows)?;
    Ok(OracleResult { expected_t: solution[0].clone(), state_count: states.len() + absorbing })
}

/// Solves `M x = 1` for the sparse rows of `M = I - P`. `M` is a
/// nonsingular M-matrix here, so elimination in natural order never meets a
/// zero pivot.
fn solve(mut rows: Vec<BTreeMap<usize, BigRational>>) -> Result<Vec<BigRational>> {
    let size = rows.len();
    let mut rhs = vec![BigRational::one(); size];
    let mut col_rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); size];
    for (i, row) in rows.iter().enumerate() {
        for &c in row.keys() {
            if c < i {
                col_rows[c].insert(i);
            }
        }
    }
    for i in 0..size {
        let pivot_row = rows[i].clone();
        let pivot = pivot_row
            .get(&i)
            .cloned()
            .ok_or_else(|| ArwError::InvalidParams("singular absorption system".into()))?;
        let targets: Vec<usize> = col_rows[i].iter().copied().filter(|&j| j > i).collect();
        for j in targets {
            let Some(factor) = rows[j].remove(&i).map(|v| v / &pivot) else { continue };
            for (&c, v) in pivot_row.range(i + 1..) {
                let entry = rows[j].entry(c).or_insert_with(BigRational::zero);
                *entry -= &factor * v;
                if entry.is_zero() {
                    rows[j].remove(&c);
                } else if c < j {
                    col_rows[c].insert(j);
                }
            }
            let delta = &factor * &rhs[i];
            rhs[j] -= delta;
        }
    }
    let mut x = vec![BigRational::zero(); size];
    for i in (0..size).rev() {
        let mut acc = rhs[i].clone();
        for (&c, v) in rows[i].range(i + 1..) {
            acc -= v * &x[c];
        }
        x[i] = acc / &rows[i][&i];
    }
    Ok(x)
}

/// Every configuration on `n` sites with at most `max_particles` particles,
/// sleepy sites included.
pub fn all_configurations(n: usize, max_particles: u32) -> Vec<Configuration> {
    fn extend(prefix: &mut Vec<SiteState>, n: usize, left: u32, out: &mut Vec<Configuration>) {
        if prefix.len() == n {
            out.push(Configuration::from_sites(prefix.clone()));
            return;
        }
        for k in 0..=left {
            prefix.push(SiteState::Active(k));
            extend(prefix, n, left - k, out);
            prefix.pop();
        }
        if left >= 1 {
            prefix.push(SiteState::Sleepy);
            extend(prefix, n, left - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(n), n, max_particles, &mut out);
    out
}
