//! Deterministic instruction stacks.
//!
//! The instruction at `(site, index)` is a keyed hash of the stack seed and
//! the pair, so a stack is an immutable value that any number of toppling
//! procedures can read in any order and always see the same entries.

use std::collections::HashSet;
use std::sync::Arc;

use crate::error::{ArwError, Result};
use crate::model::Instruction;
use crate::rng::{self, tag};

/// Which sleep entries read back as [`Instruction::Null`].
#[derive(Debug, Clone, Default)]
pub enum Mask {
    #[default]
    None,
    /// Explicit `(site, index)` entries, each covering a sleep.
    Entries(Arc<HashSet<(usize, u64)>>),
    /// Each sleep entry masked independently with probability `fraction`.
    Fraction { key: u64, fraction: f64 },
    /// Every sleep is ignored.
    AllSleeps,
}

#[derive(Debug, Clone)]
pub struct InstructionStack {
    seed: u64,
    lambda: f64,
    key: u64,
    sleep_threshold: u64,
    mask: Mask,
}

impl InstructionStack {
    pub fn new(seed: u64, lambda: f64) -> Self {
        let p = lambda / (1.0 + lambda);
        // p * 2^64, saturating for p -> 1.
        let sleep_threshold = (p * 18_446_744_073_709_551_616.0) as u64;
        Self { seed, lambda, key: rng::stream_key(seed, tag::STACK), sleep_threshold, mask: Mask::None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    /// Same stack with an explicit set of sleep entries nulled. Fails with
    /// `InvalidMask` if any entry covers a jump.
    pub fn with_mask_entries(&self, entries: HashSet<(usize, u64)>) -> Result<Self> {
        if let Some(&(site, index)) = entries.iter().find(|&&(x, j)| self.raw(x, j) != Instruction::Sleep) {
            return Err(ArwError::InvalidMask { site, index });
        }
        Ok(Self { mask: Mask::Entries(Arc::new(entries)), ..self.clone() })
    }

    /// Same stack with each sleep nulled independently with probability
    /// `fraction`, decided by `mask_seed`.
    pub fn with_random_mask(&self, fraction: f64, mask_seed: u64) -> Self {
        let mask = Mask::Fraction { key: rng::stream_key(mask_seed, tag::MASK), fraction: fraction.clamp(0.0, 1.0) };
        Self { mask, ..self.clone() }
    }

    /// Same stack with every sleep nulled.
    pub fn ignoring_sleeps(&self) -> Self {
        Self { mask: Mask::AllSleeps, ..self.clone() }
    }

    /// Unmasked instruction at `(x, j)`; indices start at 1.
    #[inline(always)]
    pub fn raw(&self, x: usize, j: u64) -> Instruction {
        let h = rng::hash2(self.key, x as u64, j);
        if h < self.sleep_threshold {
            Instruction::Sleep
        } else if h & 1 == 0 {
            Instruction::JumpLeft
        } else {
            Instruction::JumpRight
        }
    }

    #[inline(always)]
    pub fn draw(&self, x: usize, j: u64) -> Instruction {
        let instr = self.raw(x, j);
        if instr != Instruction::Sleep {
            return instr;
        }
        let masked = match &self.mask {
            Mask::None => false,
            Mask::AllSleeps => true,
            Mask::Entries(set) => set.contains(&(x, j)),
            Mask::Fraction { key, fraction } => rng::unit_f64(rng::hash2(*key, x as u64, j)) < *fraction,
        };
        if masked {
            Instruction::Null
        } else {
            Instruction::Sleep
        }
    }
}

pub fn draw_instruction(stack: &InstructionStack, x: usize, j: u64) -> Instruction {
    stack.draw(x, j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(stack: &InstructionStack, draws: u64) -> [u64; 3] {
        let mut c = [0u64; 3];
        for t in 0..draws {
            let (x, j) = ((t % 1000) as usize, t / 1000 + 1);
            match stack.draw(x, j) {
                Instruction::JumpLeft => c[0] += 1,
                Instruction::JumpRight => c[1] += 1,
                Instruction::Sleep => c[2] += 1,
                Instruction::Null => panic!("null in unmasked stack"),
            }
        }
        c
    }

    /// Pearson statistic against (1/(2(1+l)), 1/(2(1+l)), l/(1+l)).
    fn chi_square(c: [u64; 3], lambda: f64) -> f64 {
        let total = c.iter().sum::<u64>() as f64;
        let jump = 1.0 / (2.0 * (1.0 + lambda));
        let probs = [jump, jump, lambda / (1.0 + lambda)];
        c.iter().zip(probs).map(|(&o, p)| (o as f64 - total * p).powi(2) / (total * p)).sum()
    }

    #[test]
    fn law_at_lambda_one() {
        let c = counts(&InstructionStack::new(5, 1.0), 1_000_000);
        let total = 1e6;
        for (obs, p) in c.iter().zip([0.25, 0.25, 0.5]) {
            let sd = (total * p * (1.0 - p) as f64).sqrt();
            assert!((*obs as f64 - total * p).abs() <= 3.0 * sd, "{c:?}");
        }
    }

    #[test]
    fn chi_square_goodness_of_fit() {
        // Two degrees of freedom: the 1e-3 upper quantile is -2 ln(1e-3).
        let critical = -2.0 * 1e-3f64.ln();
        for lambda in [0.01, 1.0, 10.0] {
            let stat = chi_square(counts(&InstructionStack::new(99, lambda), 1_000_000), lambda);
            assert!(stat < critical, "lambda {lambda}: chi2 {stat}");
        }
    }

    #[test]
    fn order_independent() {
        let s = InstructionStack::new(42, 0.7);
        let forward: Vec<_> = (0..50).flat_map(|x| (1..50).map(move |j| (x, j))).map(|(x, j)| s.draw(x, j)).collect();
        let mut backward: Vec<_> =
            (0..50).rev().flat_map(|x| (1..50).rev().map(move |j| (x, j))).map(|(x, j)| s.draw(x, j)).collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn explicit_mask_replaces_one_sleep() {
        let s = InstructionStack::new(3, 1.0);
        let (x, j) = (0..100usize)
            .flat_map(|x| (1..10u64).map(move |j| (x, j)))
            .find(|&(x, j)| s.raw(x, j) == Instruction::Sleep)
            .unwrap();
        let masked = s.with_mask_entries([(x, j)].into_iter().collect()).unwrap();
        assert_eq!(masked.draw(x, j), Instruction::Null);
        for y in 0..100 {
            for k in 1..10 {
                if (y, k) != (x, j) {
                    assert_eq!(masked.draw(y, k), s.draw(y, k));
                }
            }
        }
    }

    #[test]
    fn masking_a_jump_is_rejected() {
        let s = InstructionStack::new(3, 1.0);
        let (x, j) = (0..100usize)
            .flat_map(|x| (1..10u64).map(move |j| (x, j)))
            .find(|&(x, j)| s.raw(x, j).is_jump())
            .unwrap();
        assert_eq!(s.with_mask_entries([(x, j)].into_iter().collect()).unwrap_err(), ArwError::InvalidMask {
            site: x,
            index: j
        });
    }

    #[test]
    fn full_masks() {
        let s = InstructionStack::new(8, 2.0);
        let all = s.ignoring_sleeps();
        let frac = s.with_random_mask(1.0, 1);
        let none = s.with_random_mask(0.0, 1);
        for x in 0..20 {
            for j in 1..20 {
                let raw = s.raw(x, j);
                let expect = if raw == Instruction::Sleep { Instruction::Null } else { raw };
                assert_eq!(all.draw(x, j), expect);
                assert_eq!(frac.draw(x, j), expect);
                assert_eq!(none.draw(x, j), raw);
            }
        }
    }
}
