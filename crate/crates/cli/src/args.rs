//! Command-line surface. Every option is also accepted as a `key = value`
//! line in a config file (`--config`); explicit flags win on conflict, so
//! all value options are `Option`s resolved in a second pass.

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "splitcheck",
    version,
    about = "Tests whether the arms of an A/B/n split share one multi-dimensional \
             categorical distribution",
    after_help = "Exit codes: 0 = no rejection, 1 = imbalance detected, 2 = usage or data error."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the selected tests on a CSV dataset and write a report.
    Check(CheckArgs),
    /// Estimate test power on synthetic scenarios (CSV rows out).
    Simulate(SimulateArgs),
    /// Emit a synthetic dataset as CSV.
    Gen(GenArgs),
}

#[derive(Args, Debug, Default)]
pub struct CheckArgs {
    /// Input CSV file.
    #[arg(long)]
    pub input: Option<String>,

    /// Group column, by header name or 0-based index [default: group].
    #[arg(long = "group-col")]
    pub group_col: Option<String>,

    /// The CSV has no header row.
    #[arg(long = "no-header")]
    pub no_header: bool,

    /// Comma-separated subset of baseline,disco,propensity,randchi (or "all").
    #[arg(long)]
    pub methods: Option<String>,

    /// Significance level [default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Permutation replicates; at alpha 0.05 at least 19 are needed for any
    /// rejection [default: 200].
    #[arg(long)]
    pub b: Option<usize>,

    /// Master seed; all randomness derives from it [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,

    /// DISCO distance index in (0, 2] [default: 1.0].
    #[arg(long = "disco-alpha")]
    pub disco_alpha: Option<f64>,

    /// DISCO categorical embedding: one-hot | codes [default: one-hot].
    #[arg(long = "disco-encoding")]
    pub disco_encoding: Option<String>,

    /// Propensity training fraction in (0, 1) [default: 0.8].
    #[arg(long = "train-frac")]
    pub train_frac: Option<f64>,

    /// Propensity ridge penalty [default: 1e-4].
    #[arg(long)]
    pub l2: Option<f64>,

    /// Propensity fit iteration cap [default: 500].
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,

    /// Columns per randomized chi-square draw, or "auto" for round(m/7)
    /// [default: auto].
    #[arg(long = "randchi-c")]
    pub randchi_c: Option<String>,

    /// Randomized chi-square draws [default: 10].
    #[arg(long = "randchi-d")]
    pub randchi_d: Option<usize>,

    /// Randomized chi-square draw size: uniform (1..=C per draw) | fixed
    /// (exactly C) [default: uniform].
    #[arg(long = "randchi-size")]
    pub randchi_size: Option<String>,

    /// Baseline multiplicity adjustment: none | holm | by | minp
    /// [default: minp].
    #[arg(long)]
    pub adjust: Option<String>,

    /// Worker threads for permutation replicates; output is identical for
    /// any value [default: 1].
    #[arg(long)]
    pub threads: Option<usize>,

    /// Write the JSON report here (a text summary still goes to stdout).
    #[arg(long)]
    pub report: Option<String>,

    /// Stdout format when no report path is given: text | json
    /// [default: text].
    #[arg(long)]
    pub format: Option<String>,

    /// Key = value config file; flags win on conflict.
    #[arg(long)]
    pub config: Option<String>,

    /// Include wall-time fields in the report (breaks byte-for-byte
    /// reproducibility of the output).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug, Default)]
pub struct SimulateArgs {
    /// marginal | interaction | combined | realworld.
    #[arg(long)]
    pub scenario: Option<String>,

    /// weak | medium | strong [default: medium].
    #[arg(long)]
    pub signal: Option<String>,

    /// Heterogeneous columns in the last group [default: cols/5, min 1
    /// (marginal) or 2 (interaction/combined)].
    #[arg(long = "hetero-cols")]
    pub hetero_cols: Option<usize>,

    /// Rows per group [default: 100].
    #[arg(long)]
    pub rows: Option<usize>,

    /// Columns [default: 10; realworld is fixed at 8].
    #[arg(long)]
    pub cols: Option<usize>,

    /// Groups [default: 4; realworld is fixed at 2].
    #[arg(long)]
    pub groups: Option<usize>,

    /// Monte-Carlo replicates per power estimate [default: 100].
    #[arg(long)]
    pub reps: Option<usize>,

    /// Comma-separated methods or "all" [default: all].
    #[arg(long)]
    pub methods: Option<String>,

    /// Significance level [default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Permutation replicates per test [default: 99].
    #[arg(long)]
    pub b: Option<usize>,

    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long = "disco-alpha")]
    pub disco_alpha: Option<f64>,

    #[arg(long = "disco-encoding")]
    pub disco_encoding: Option<String>,

    #[arg(long = "train-frac")]
    pub train_frac: Option<f64>,

    #[arg(long)]
    pub l2: Option<f64>,

    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,

    #[arg(long = "randchi-c")]
    pub randchi_c: Option<String>,

    #[arg(long = "randchi-d")]
    pub randchi_d: Option<usize>,

    #[arg(long = "randchi-size")]
    pub randchi_size: Option<String>,

    #[arg(long)]
    pub adjust: Option<String>,

    /// Sweep the heterogeneous-column count: "a..b" or "a..b:step"; one
    /// power row per method per value.
    #[arg(long = "sweep-hetero")]
    pub sweep_hetero: Option<String>,

    /// Sweep the dimension m with hetero-cols = m/5: "a..b" or "a..b:step".
    #[arg(long = "sweep-dim")]
    pub sweep_dim: Option<String>,

    /// Also evaluate the randomized chi-square draws under Holm's procedure
    /// and emit paired "randchi_holm" power rows.
    #[arg(long = "compare-holm")]
    pub compare_holm: bool,

    /// Write the accumulated randchi column-flag counts here as CSV.
    #[arg(long = "flag-table")]
    pub flag_table: Option<String>,

    /// Output CSV path [default: stdout].
    #[arg(long)]
    pub out: Option<String>,

    #[arg(long)]
    pub threads: Option<usize>,

    #[arg(long)]
    pub config: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct GenArgs {
    /// marginal | interaction | combined | realworld.
    #[arg(long)]
    pub scenario: Option<String>,

    /// weak | medium | strong [default: medium].
    #[arg(long)]
    pub signal: Option<String>,

    #[arg(long = "hetero-cols")]
    pub hetero_cols: Option<usize>,

    /// Rows per group [default: 100].
    #[arg(long)]
    pub rows: Option<usize>,

    #[arg(long)]
    pub cols: Option<usize>,

    #[arg(long)]
    pub groups: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Output CSV path [default: stdout].
    #[arg(long)]
    pub out: Option<String>,

    #[arg(long)]
    pub config: Option<String>,
}
