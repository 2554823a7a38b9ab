//! Command-line front end for the activated random walk simulator.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use arw_core::experiments::{
    exact_expected_t, run_cell, run_grid, summarize_growth, summarize_scaling, verify_suite, PolicyKind, Scheme,
    SweepGrid, TrialOptions, TrialRecord, VerifyConfig,
};
use arw_core::subcritical::{full_scheme, DEFAULT_C0};
use arw_core::supercritical::{run_loop, DEFAULT_MAX_ROUNDS};
use arw_core::{Configuration, Params, DEFAULT_BUDGET};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

/// Column order of the CSV output.
pub const CSV_HEADER: [&str; 11] =
    ["n", "mu", "lambda", "seed", "trial", "scheme", "T", "outcome", "sleepers", "rounds", "wall_ms"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Scaling,
    Growth,
}

#[derive(Debug, Parser)]
#[command(name = "arw", version, about = "Activated random walk on the cycle Z/nZ")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run independent trials of one parameter cell.
    Run(RunArgs),
    /// Run trials over a grid of cells.
    Sweep(SweepArgs),
    /// Run the invariant checks and exit 2 if any fails.
    Verify(VerifyArgs),
    /// Run the gather-and-trap scheme once and summarize it.
    Scheme(SchemeArgs),
    /// Run the pole stabilization loop once and summarize it.
    Loop(LoopArgs),
    /// Exact expected T for a small cycle.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Write records here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record wall-clock milliseconds per trial. Off keeps output reproducible.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct TrialArgs {
    #[arg(long, default_value_t = 10)]
    pub trials: u64,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    #[arg(long, default_value = "direct")]
    pub scheme: Scheme,
    /// leftmost, random, sweep or follow. T does not depend on it.
    #[arg(long, default_value = "follow")]
    pub policy: PolicyKind,
    #[arg(long, default_value_t = DEFAULT_C0)]
    pub c0: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ROUNDS)]
    pub max_rounds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrialArgs {
    fn options(&self, timing: bool) -> TrialOptions {
        TrialOptions { budget: self.budget, policy: self.policy, c0: self.c0, max_rounds: self.max_rounds, timing }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub mu: f64,
    #[arg(long)]
    pub lambda: f64,
    #[command(flatten)]
    pub trial: TrialArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated sizes.
    #[arg(long, value_delimiter = ',', required_unless_present = "grid_file")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', required_unless_present = "grid_file")]
    pub mu: Vec<f64>,
    #[arg(long, value_delimiter = ',', required_unless_present = "grid_file")]
    pub lambda: Vec<f64>,
    /// JSON lines, one cell each: n, mu, lambda and optional trials,
    /// scheme, budget, seed. Replaces the list flags.
    #[arg(long, conflicts_with_all = ["n", "mu", "lambda"])]
    pub grid_file: Option<PathBuf>,
    /// Print a summary to stderr after the records.
    #[arg(long, value_enum)]
    pub report: Option<ReportKind>,
    #[command(flatten)]
    pub trial: TrialArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2_000_000)]
    pub budget: u64,
    #[arg(long, default_value_t = 20_000)]
    pub oracle_trials: u64,
}

#[derive(Debug, Args)]
pub struct SchemeArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub mu: f64,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_C0)]
    pub c0: f64,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
}

#[derive(Debug, Args)]
pub struct LoopArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub mu: f64,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_ROUNDS)]
    pub max_rounds: u64,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub n: usize,
    /// Comma-separated sites of the active particles; repeats stack.
    #[arg(long, value_delimiter = ',')]
    pub occupied: Vec<usize>,
    #[arg(long)]
    pub lambda: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridLine {
    n: usize,
    mu: f64,
    lambda: f64,
    trials: Option<u64>,
    scheme: Option<Scheme>,
    budget: Option<u64>,
    seed: Option<u64>,
}

/// Writes records as CSV (header always present) or JSON lines.
pub fn write_records<W: Write>(records: &[TrialRecord], format: Format, mut sink: W) -> anyhow::Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut sink);
            w.write_record(CSV_HEADER)?;
            for r in records {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            for r in records {
                serde_json::to_writer(&mut sink, r)?;
                sink.write_all(b"\n")?;
            }
        }
    }
    sink.flush()?;
    Ok(())
}

fn emit(records: &[TrialRecord], output: &OutputArgs) -> anyhow::Result<()> {
    match &output.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_records(records, output.format, BufWriter::new(file))
        }
        None => write_records(records, output.format, io::stdout().lock()),
    }
}

fn read_grid_file(path: &PathBuf, defaults: &TrialArgs, opts: &TrialOptions) -> anyhow::Result<Vec<TrialRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut records = Vec::new();
    let mut cell = 0u64;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let g: GridLine =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: bad grid line", path.display(), i + 1))?;
        let params = Params::new(g.n, g.mu, g.lambda, g.seed.unwrap_or(defaults.seed))?;
        let opts = TrialOptions { budget: g.budget.unwrap_or(opts.budget), ..*opts };
        let scheme = g.scheme.unwrap_or(defaults.scheme);
        records.extend(run_cell(&params, cell, g.trials.unwrap_or(defaults.trials), scheme, &opts));
        cell += 1;
    }
    Ok(records)
}

fn sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let opts = args.trial.options(args.output.timing);
    let records = match &args.grid_file {
        Some(path) => read_grid_file(path, &args.trial, &opts)?,
        None => {
            let grid = SweepGrid {
                n: args.n.clone(),
                mu: args.mu.clone(),
                lambda: args.lambda.clone(),
                trials: args.trial.trials,
                budget: args.trial.budget,
                scheme: args.trial.scheme,
                seed: args.trial.seed,
            };
            run_grid(&grid, &opts)?
        }
    };
    emit(&records, &args.output)?;
    if let Some(kind) = args.report {
        let (mu, lambda) = match records.first() {
            Some(r) if records.iter().all(|s| s.mu == r.mu && s.lambda == r.lambda) => (r.mu, r.lambda),
            Some(_) => bail!("--report needs a single mu and lambda"),
            None => bail!("--report needs at least one record"),
        };
        match kind {
            ReportKind::Scaling => eprint!("{}", summarize_scaling(args.trial.scheme, mu, lambda, &records)),
            ReportKind::Growth => eprint!("{}", summarize_growth(mu, lambda, &records)),
        }
    }
    Ok(())
}

fn scheme(args: &SchemeArgs) -> anyhow::Result<()> {
    let params = Params::new(args.n, args.mu, args.lambda, args.seed)?;
    let rep = full_scheme(&params, args.c0, args.budget)?;
    let failed = rep.per_interval_success.iter().filter(|s| !**s).count();
    println!("intervals={} failed_intervals={}", rep.per_interval_success.len(), failed);
    println!("t1={} t2={} T={}", rep.t1, rep.t2, rep.total());
    println!("sleepers={}", rep.final_config.sleepy_total());
    println!("success={}", rep.overall_success);
    Ok(())
}

fn run_loop_cmd(args: &LoopArgs) -> anyhow::Result<()> {
    let params = Params::new(args.n, args.mu, args.lambda, args.seed)?;
    let rep = run_loop(&params, args.max_rounds, args.budget)?;
    println!("rounds={} T={}", rep.rounds_completed, rep.total_instructions);
    println!("termination={:?} sleepers={}", rep.termination, rep.final_sleepers);
    if let Some(last) = rep.per_round_active.last() {
        println!("active_after_last_round={last}");
    }
    Ok(())
}

fn oracle(args: &OracleArgs) -> anyhow::Result<()> {
    if let Some(&x) = args.occupied.iter().find(|&&x| x >= args.n) {
        bail!("site {x} is outside 0..{}", args.n);
    }
    let config = Configuration::from_occupied(args.n, &args.occupied);
    let res = exact_expected_t(args.n, &config, args.lambda)?;
    println!("E[T]={} ~ {} states={}", res.expected_t, res.as_f64(), res.state_count);
    Ok(())
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("ARW_THREADS") {
        let threads: usize = v.trim().parse().with_context(|| format!("ARW_THREADS={v:?} is not a count"))?;
        if threads == 0 {
            bail!("ARW_THREADS must be positive");
        }
        // A second call in the same process fails harmlessly.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Ok(())
}

fn execute(cli: &Cli) -> anyhow::Result<i32> {
    configure_threads()?;
    match &cli.command {
        Command::Run(a) => {
            let params = Params::new(a.n, a.mu, a.lambda, a.trial.seed)?;
            let records = run_cell(&params, 0, a.trial.trials, a.trial.scheme, &a.trial.options(a.output.timing));
            emit(&records, &a.output)?;
        }
        Command::Sweep(a) => sweep(a)?,
        Command::Verify(a) => {
            let cfg =
                VerifyConfig { instances: a.instances, seed: a.seed, budget: a.budget, oracle_trials: a.oracle_trials };
            let summary = verify_suite(&cfg);
            print!("{summary}");
            if !summary.all_passed() {
                return Ok(2);
            }
        }
        Command::Scheme(a) => scheme(a)?,
        Command::Loop(a) => run_loop_cmd(a)?,
        Command::Oracle(a) => oracle(a)?,
    }
    Ok(0)
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code: 0 on success, 1 on usage or I/O errors, 2 when verification
/// fails.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
