use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "dpfair", version, about = "Differentially private fair division of items on a line")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Master seed for every random draw.
    #[arg(long, global = true, env = "DPFAIR_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Privacy budget.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Failure probability of the accuracy guarantees.
    #[arg(long, global = true, default_value_t = 0.1)]
    pub beta: f64,
    /// Constant in the sparse-vector accuracy bound used by the knife.
    #[arg(long, global = true, default_value_t = dpfair::params::DEFAULT_SVT_CONSTANT)]
    pub svt_constant: f64,
    /// Runs, samples or trials for randomized experiments.
    #[arg(long, global = true, default_value_t = 1000)]
    pub trials: u64,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format; defaults to csv for `sweep` and json otherwise.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Largest number of connected allocations the enumerating routines accept.
    #[arg(long, global = true, default_value_t = dpfair::ef_em::DEFAULT_ENUMERATION_CAP)]
    pub enum_cap: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    /// Exponential mechanism over connected allocations.
    Ef,
    /// Recursive moving knife.
    Prop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Criterion {
    Ef,
    Prop,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an instance file.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Run the private EF allocator on an instance.
    AllocateEf { instance: PathBuf },
    /// Run the private moving knife on an additive instance.
    AllocateProp { instance: PathBuf },
    /// Exact best-achievable fairness over connected allocations.
    Oracle { instance: PathBuf },
    /// Privacy, sensitivity, fairness and anti-concentration audits.
    #[command(subcommand)]
    Audit(AuditCommand),
    /// Grid of runs over n, m, epsilon and beta on random binary instances.
    Sweep(SweepArgs),
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Independent fair-coin utilities.
    Bernoulli(Shape),
    /// All utilities zero.
    AllZero(Shape),
    /// Packing family for connected envy-freeness.
    EfPacking(PackingArgs),
    /// Packing family for connected proportionality.
    PropPacking(PackingArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Shape {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PackingArgs {
    #[command(flatten)]
    pub shape: Shape,
    /// Removal count; defaults to the lower-bound formula at `--epsilon`.
    #[arg(long)]
    pub c: Option<usize>,
    /// Number of members; defaults to the largest that fits.
    #[arg(long)]
    pub t: Option<usize>,
    /// 0 for the base profile, `t` for the `t`-th member.
    #[arg(long, default_value_t = 0)]
    pub member: usize,
}

#[derive(Debug, Subcommand)]
pub enum AuditCommand {
    /// Per-outcome probability ratios on two inputs against exp(epsilon).
    PrivacyRatio(PairArgs),
    /// Ratios against exp(k epsilon), k the agent x item distance of the inputs.
    Group(PairArgs),
    /// Exhaustive sensitivity audit over all binary profiles.
    Sensitivity(SensitivityArgs),
    /// Fraction of runs whose output is not fair at a given removal count.
    FairnessRate(FairnessRateArgs),
    /// Tail probabilities of a sum of fair coins.
    AntiConcentration(AntiConcentrationArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PairArgs {
    #[arg(long, value_enum, default_value_t = Algorithm::Ef)]
    pub algorithm: Algorithm,
    /// Sample the EF allocator instead of comparing exact distributions.
    #[arg(long)]
    pub sampled: bool,
    pub first: PathBuf,
    pub second: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AuditedFunction {
    /// Allocation score of the EF allocator.
    Score,
    /// Knife-position score.
    F,
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityArgs {
    #[arg(long, value_enum)]
    pub function: AuditedFunction,
    #[command(flatten)]
    pub shape: Shape,
    /// Truncation budget (g for the score, g_b for the knife).
    #[arg(long)]
    pub g: u64,
}

#[derive(Debug, Clone, Args)]
pub struct FairnessRateArgs {
    #[arg(long, value_enum)]
    pub algorithm: Algorithm,
    /// Defaults to the notion the algorithm targets.
    #[arg(long, value_enum)]
    pub criterion: Option<Criterion>,
    /// Defaults to the algorithm's guaranteed removal count.
    #[arg(long)]
    pub c: Option<usize>,
    pub instance: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Lemma {
    /// Lower tail below k/2 - 0.1 sqrt(k).
    #[value(name = "2.10", alias = "lower")]
    Lower,
    /// Upper tail above k/2 + 0.1 sqrt(k ln gamma).
    #[value(name = "2.11", alias = "upper")]
    Upper,
}

#[derive(Debug, Clone, Args)]
pub struct AntiConcentrationArgs {
    #[arg(long, value_enum)]
    pub lemma: Lemma,
    #[arg(long, default_value_t = 100)]
    pub k: u64,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub m: Vec<usize>,
    /// Budgets to sweep; defaults to `--epsilon`.
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Vec<f64>,
    /// Failure probabilities to sweep; defaults to `--beta`.
    #[arg(long, value_delimiter = ',')]
    pub betas: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Algorithm::Ef, Algorithm::Prop])]
    pub algorithms: Vec<Algorithm>,
}
