//! Activated random walk on the cycle Z/nZ.
//!
//! Instruction stacks are deterministic functions of a seed, so every
//! toppling procedure in the crate (the plain engine, the low-density
//! source/trap scheme and the pole-to-pole loop) reads the same stack and
//! their odometers can be compared exactly.

pub mod engine;
pub mod error;
pub mod experiments;
pub mod model;
pub mod rng;
pub mod stack;
pub mod subcritical;
pub mod supercritical;

pub use engine::{Odometer, Outcome, Policy, TopplingState, Verdict, DEFAULT_BUDGET};
pub use error::{ArwError, Result};
pub use model::{Configuration, Effect, Instruction, Params, SiteState};
pub use stack::InstructionStack;
