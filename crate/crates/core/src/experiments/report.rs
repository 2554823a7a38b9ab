//! Scaling summaries over a grid of system sizes.

use std::fmt;

use serde::Serialize;

use super::stats::{censored_median, least_squares, quantile, CensoredMedian};
use super::trials::{run_grid, Scheme, SweepGrid, TrialOptions, TrialRecord};
use crate::error::{ArwError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub trials: usize,
    pub median_t: f64,
    pub p95_t: f64,
    /// `median_t / (n ln(n)^2)`.
    pub normalized_median: f64,
    pub censored_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub scheme: Scheme,
    pub mu: f64,
    pub lambda: f64,
    pub rows: Vec<ScalingRow>,
    /// Ratio of consecutive normalized medians.
    pub normalized_ratios: Vec<f64>,
    /// Ratio of consecutive raw medians.
    pub median_ratios: Vec<f64>,
    /// Normalized median more than doubles across the largest octave.
    pub trend_violation: bool,
    /// Density at or above the sleep probability.
    pub regime_warning: bool,
}

fn single_cell(grid: &SweepGrid) -> Result<(f64, f64)> {
    match (grid.mu.as_slice(), grid.lambda.as_slice()) {
        ([mu], [lambda]) => Ok((*mu, *lambda)),
        _ => Err(ArwError::InvalidParams("scaling reports take exactly one mu and one lambda".into())),
    }
}

fn sorted_sizes(records: &[TrialRecord]) -> Vec<usize> {
    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns
}

fn ratios(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] / w[0]).collect()
}

pub fn scaling_report(grid: &SweepGrid, opts: &TrialOptions) -> Result<ScalingReport> {
    let (mu, lambda) = single_cell(grid)?;
    let records = run_grid(grid, opts)?;
    Ok(summarize_scaling(grid.scheme, mu, lambda, &records))
}

/// Runs a direct-stabilization grid and summarizes T against `n ln(n)^2`.
pub fn subcritical_scaling_report(grid: &SweepGrid) -> Result<ScalingReport> {
    scaling_report(grid, &TrialOptions::default())
}

pub fn summarize_scaling(scheme: Scheme, mu: f64, lambda: f64, records: &[TrialRecord]) -> ScalingReport {
    let rows: Vec<ScalingRow> = sorted_sizes(records)
        .into_iter()
        .map(|n| {
            let cell: Vec<&TrialRecord> = records.iter().filter(|r| r.n == n).collect();
            let values: Vec<(f64, bool)> = cell.iter().map(|r| (r.t as f64, r.is_censored())).collect();
            let plain: Vec<f64> = values.iter().map(|v| v.0).collect();
            let m = censored_median(&values).expect("nonempty cell");
            let ln = (n as f64).ln();
            ScalingRow {
                n,
                trials: cell.len(),
                median_t: m.value,
                p95_t: quantile(&plain, 0.95).unwrap_or(f64::NAN),
                normalized_median: m.value / (n as f64 * ln * ln),
                censored_fraction: m.censored_fraction,
            }
        })
        .collect();
    let normalized: Vec<f64> = rows.iter().map(|r| r.normalized_median).collect();
    let medians: Vec<f64> = rows.iter().map(|r| r.median_t).collect();
    let trend_violation = match rows.as_slice() {
        [.., lo, hi] => {
            // Compare the largest size with the largest one at most half of it.
            let base = rows.iter().rev().find(|r| 2 * r.n <= hi.n).unwrap_or(lo);
            hi.normalized_median > 2.0 * base.normalized_median
        }
        _ => false,
    };
    ScalingReport {
        scheme,
        mu,
        lambda,
        normalized_ratios: ratios(&normalized),
        median_ratios: ratios(&medians),
        rows,
        trend_violation,
        regime_warning: mu >= lambda / (1.0 + lambda),
    }
}

impl fmt::Display for ScalingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scheme={} mu={} lambda={}", self.scheme, self.mu, self.lambda)?;
        if self.regime_warning {
            writeln!(f, "warning: mu >= lambda/(1+lambda), outside the low-density regime")?;
        }
        writeln!(f, "{:>8} {:>7} {:>14} {:>14} {:>12} {:>9}", "n", "trials", "median_T", "p95_T", "T/(n ln^2 n)", "censored")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>8} {:>7} {:>14.1} {:>14.1} {:>12.4} {:>9.3}",
                r.n, r.trials, r.median_t, r.p95_t, r.normalized_median, r.censored_fraction
            )?;
        }
        writeln!(f, "normalized ratios: {:?}", self.normalized_ratios)?;
        writeln!(f, "median ratios: {:?}", self.median_ratios)?;
        write!(f, "trend violation: {}", self.trend_violation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthRow {
    pub n: usize,
    pub trials: usize,
    pub median: CensoredMedian,
    /// Median completed loops, for loop runs.
    pub median_rounds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub mu: f64,
    pub lambda: f64,
    pub rows: Vec<GrowthRow>,
    /// Least-squares slope of ln(median T) against n over sizes that are
    /// not too censored; `None` with fewer than two such sizes.
    pub slope: Option<f64>,
    /// Medians strictly increase with n and no size is too censored.
    pub strictly_increasing: bool,
}

impl GrowthReport {
    /// `median T(hi) / median T(lo)`, if both sizes are usable.
    pub fn median_ratio(&self, hi: usize, lo: usize) -> Option<f64> {
        let get = |n| self.rows.iter().find(|r| r.n == n && !r.median.too_censored).map(|r| r.median.value);
        Some(get(hi)? / get(lo)?)
    }
}

pub fn supercritical_growth_report(grid: &SweepGrid, opts: &TrialOptions) -> Result<GrowthReport> {
    let (mu, lambda) = single_cell(grid)?;
    let records = run_grid(grid, opts)?;
    Ok(summarize_growth(mu, lambda, &records))
}

pub fn summarize_growth(mu: f64, lambda: f64, records: &[TrialRecord]) -> GrowthReport {
    let rows: Vec<GrowthRow> = sorted_sizes(records)
        .into_iter()
        .map(|n| {
            let cell: Vec<&TrialRecord> = records.iter().filter(|r| r.n == n).collect();
            let values: Vec<(f64, bool)> = cell.iter().map(|r| (r.t as f64, r.is_censored())).collect();
            let rounds: Vec<f64> = cell.iter().filter_map(|r| r.rounds.map(|x| x as f64)).collect();
            GrowthRow {
                n,
                trials: cell.len(),
                median: censored_median(&values).expect("nonempty cell"),
                median_rounds: super::stats::median(&rounds),
            }
        })
        .collect();
    let usable: Vec<&GrowthRow> = rows.iter().filter(|r| !r.median.too_censored && r.median.value > 0.0).collect();
    let xs: Vec<f64> = usable.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = usable.iter().map(|r| r.median.value.ln()).collect();
    let slope = least_squares(&xs, &ys).map(|(s, _)| s);
    let strictly_increasing = rows.iter().all(|r| !r.median.too_censored)
        && rows.windows(2).all(|w| w[1].median.value > w[0].median.value);
    GrowthReport { mu, lambda, rows, slope, strictly_increasing }
}

impl fmt::Display for GrowthReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mu={} lambda={}", self.mu, self.lambda)?;
        writeln!(f, "{:>6} {:>7} {:>14} {:>9} {:>12} {:>6}", "n", "trials", "median_T", "censored", "rounds", "flag")?;
        for r in &self.rows {
            let rounds = r.median_rounds.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into());
            let flag = if r.median.too_censored { "TooCensored" } else { "" };
            writeln!(
                f,
                "{:>6} {:>7} {:>14.1} {:>9.3} {:>12} {:>6}",
                r.n, r.trials, r.median.value, r.median.censored_fraction, rounds, flag
            )?;
        }
        let slope = self.slope.map(|s| format!("{s:.5}")).unwrap_or_else(|| "none".into());
        write!(f, "slope of ln(median T) vs n: {slope}; strictly increasing: {}", self.strictly_increasing)
    }
}
