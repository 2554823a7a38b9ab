//! Trial orchestration, the exact small-system oracle, scaling reports and
//! the verification suite.

pub mod oracle;
pub mod report;
pub mod stats;
pub mod trials;
pub mod verify;

pub use oracle::{exact_expected_t, OracleResult};
pub use report::{summarize_growth, summarize_scaling, subcritical_scaling_report, supercritical_growth_report, GrowthReport, ScalingReport};
pub use trials::{run_cell, run_grid, run_trials, PolicyKind, Scheme, SweepGrid, TrialOptions, TrialOutcome, TrialRecord};
pub use verify::{verify_suite, VerifyConfig, VerifySummary};
