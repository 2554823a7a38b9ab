use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArwError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("illegal topple at site {site}: no active particle")]
    IllegalTopple { site: usize },
    #[error("mask entry ({site}, {index}) does not cover a sleep instruction")]
    InvalidMask { site: usize, index: u64 },
    #[error("instruction budget of {budget} exhausted")]
    BudgetExceeded { budget: u64 },
    #[error("layout too coarse: interval length {interval_len} for n = {n}")]
    LayoutTooCoarse { n: usize, interval_len: usize },
    #[error("site {site} lies outside the window of source {source_site}")]
    OutOfWindow { site: usize, source_site: usize },
    #[error("particle settling at site {site} is not alone")]
    TrapCollision { site: usize },
    #[error("cycle length {0} is odd; antipodal poles need an even cycle")]
    OddCycle(usize),
    #[error("state space has more than {limit} states")]
    StateSpaceTooLarge { limit: usize },
    #[error("{particles} particles cannot all sleep on {n} sites")]
    NoAbsorption { particles: u64, n: usize },
}

pub type Result<T> = std::result::Result<T, ArwError>;
