//! Site-level ARW state and the primitive transition rules.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ArwError, Result};
use crate::rng::{self, tag};

/// Model parameters: cycle length, initial density, sleep rate and master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: usize,
    pub mu: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Params {
    pub fn new(n: usize, mu: f64, lambda: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(ArwError::InvalidParams(format!("n must be at least 2, got {n}")));
        }
        // mu = 0 is admitted as the empty-system edge case.
        if !(0.0..1.0).contains(&mu) {
            return Err(ArwError::InvalidParams(format!("mu must lie in [0, 1), got {mu}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ArwError::InvalidParams(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { n, mu, lambda, seed })
    }

    /// Probability that a single instruction is a sleep.
    pub fn sleep_probability(&self) -> f64 {
        self.lambda / (1.0 + self.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instruction {
    JumpLeft,
    JumpRight,
    Sleep,
    /// A sleep that the current toppling scheme ignores.
    Null,
}

impl Instruction {
    pub fn is_jump(self) -> bool {
        matches!(self, Instruction::JumpLeft | Instruction::JumpRight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SiteState {
    Active(u32),
    Sleepy,
}

impl SiteState {
    pub const EMPTY: SiteState = SiteState::Active(0);

    #[inline]
    pub fn active(self) -> u32 {
        match self {
            SiteState::Active(k) => k,
            SiteState::Sleepy => 0,
        }
    }

    #[inline]
    pub fn particles(self) -> u64 {
        match self {
            SiteState::Active(k) => k as u64,
            SiteState::Sleepy => 1,
        }
    }
}

/// Result of applying one instruction at one site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    Moved(usize),
    Slept,
    NoOp,
    Illegal,
}

/// Ring-indexed particle configuration with a cached particle total.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    sites: Vec<SiteState>,
    particle_total: u64,
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, s) in self.sites.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            match s {
                SiteState::Active(k) => write!(f, "{k}")?,
                SiteState::Sleepy => write!(f, "s")?,
            }
        }
        write!(f, "]")
    }
}

impl Configuration {
    pub fn empty(n: usize) -> Self {
        Self { sites: vec![SiteState::EMPTY; n], particle_total: 0 }
    }

    pub fn from_sites(sites: Vec<SiteState>) -> Self {
        let particle_total = sites.iter().map(|s| s.particles()).sum();
        Self { sites, particle_total }
    }

    /// All `count` particles active at site `at`.
    pub fn point_mass(n: usize, at: usize, count: u32) -> Self {
        let mut sites = vec![SiteState::EMPTY; n];
        sites[at % n] = SiteState::Active(count);
        Self { sites, particle_total: count as u64 }
    }

    /// One active particle at each listed site; repeated sites stack up.
    pub fn from_occupied(n: usize, occupied: &[usize]) -> Self {
        let mut sites = vec![SiteState::EMPTY; n];
        for &x in occupied {
            let x = x % n;
            sites[x] = SiteState::Active(sites[x].active() + 1);
        }
        Self::from_sites(sites)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.sites.len()
    }

    #[inline]
    pub fn get(&self, x: usize) -> SiteState {
        self.sites[x]
    }

    pub fn sites(&self) -> &[SiteState] {
        &self.sites
    }

    pub fn particle_total(&self) -> u64 {
        self.particle_total
    }

    #[inline]
    pub fn left(&self, x: usize) -> usize {
        if x == 0 {
            self.sites.len() - 1
        } else {
            x - 1
        }
    }

    #[inline]
    pub fn right(&self, x: usize) -> usize {
        if x + 1 == self.sites.len() {
            0
        } else {
            x + 1
        }
    }

    pub fn is_stable(&self) -> bool {
        self.sites.iter().all(|s| s.active() == 0)
    }

    pub fn active_total(&self) -> u64 {
        self.sites.iter().map(|s| s.active() as u64).sum()
    }

    pub fn sleepy_total(&self) -> u64 {
        self.sites.iter().filter(|s| **s == SiteState::Sleepy).count() as u64
    }

    /// Applies `instr` at site `x` in place.
    #[inline]
    pub fn apply(&mut self, x: usize, instr: Instruction) -> Effect {
        let k = match self.sites[x] {
            SiteState::Active(k) if k >= 1 => k,
            _ => return Effect::Illegal,
        };
        match instr {
            Instruction::JumpLeft | Instruction::JumpRight => {
                let dest = if instr == Instruction::JumpLeft { self.left(x) } else { self.right(x) };
                self.sites[x] = SiteState::Active(k - 1);
                self.sites[dest] = match self.sites[dest] {
                    SiteState::Sleepy => SiteState::Active(2),
                    SiteState::Active(j) => SiteState::Active(j + 1),
                };
                Effect::Moved(dest)
            }
            Instruction::Sleep if k == 1 => {
                self.sites[x] = SiteState::Sleepy;
                Effect::Slept
            }
            Instruction::Sleep | Instruction::Null => Effect::NoOp,
        }
    }
}

/// Functional form of [`Configuration::apply`].
pub fn apply_instruction(config: &Configuration, x: usize, instr: Instruction) -> (Configuration, Effect) {
    let mut next = config.clone();
    let effect = next.apply(x % config.n(), instr);
    (next, effect)
}

pub fn is_stable(config: &Configuration) -> bool {
    config.is_stable()
}

/// Product Bernoulli(mu) initial configuration, drawn from the initial-state
/// stream of `params.seed`.
pub fn sample_initial(params: &Params) -> Configuration {
    let mut rng = rng::stream(params.seed, tag::INITIAL);
    let sites = (0..params.n)
        .map(|_| if rng.gen::<f64>() < params.mu { SiteState::Active(1) } else { SiteState::EMPTY })
        .collect();
    Configuration::from_sites(sites)
}
