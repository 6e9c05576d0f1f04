use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "gem", version, about = "Infer blind spots and execution noise from demonstrations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate demonstrations and write them as a log.
    Generate(GenerateArgs),
    /// Compute the joint posterior over blind spots and noise.
    Infer(InferArgs),
    /// Sweep data budgets and write a curve table.
    EvalBudget(EvalArgs),
    /// Implicit-state distribution for one datapoint, or a feature marginal.
    QueryImplicit(QueryArgs),
    /// Run the session service for the kitchen task.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainName {
    Gridworld,
    Kitchen,
}

impl DomainName {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainName::Gridworld => "gridworld",
            DomainName::Kitchen => "kitchen",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodName {
    Exact,
    Gibbs,
    FixedEta,
}

#[derive(Debug, Clone, Args)]
pub struct GibbsArgs {
    /// Sweeps per chain, burn-in included.
    #[arg(long, default_value_t = 1100)]
    pub iterations: usize,
    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub domain: DomainName,
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tuples (gridworld) or tuples per participant (kitchen).
    #[arg(long)]
    pub n: Option<usize>,
    /// Kitchen participants.
    #[arg(long)]
    pub participants: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    /// Demonstration log.
    #[arg(long)]
    pub data: PathBuf,
    /// TOML priors; defaults depend on the domain.
    #[arg(long)]
    pub priors: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exact")]
    pub method: MethodName,
    /// Noise level for `--method fixed-eta`.
    #[arg(long)]
    pub eta_fixed: Option<f64>,
    /// Sampler seed; drawn at random and recorded when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Only use records of this participant.
    #[arg(long)]
    pub participant: Option<String>,
    #[command(flatten)]
    pub gibbs: GibbsArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub domain: DomainName,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ascending data budgets, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub budgets: Vec<usize>,
    /// Runs per budget (gridworld) or participants (kitchen).
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    /// Methods to compare, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "exact")]
    pub method: Vec<MethodName>,
    /// Noise levels for the fixed-eta baseline, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    pub eta_fixed: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub gibbs: GibbsArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
#[command(group(clap::ArgGroup::new("target").required(true).args(["index", "feature"])))]
pub struct QueryArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Posterior document computed from the same data.
    #[arg(long)]
    pub posterior: PathBuf,
    /// Datapoint whose implicit state to report.
    #[arg(long)]
    pub index: Option<usize>,
    /// Feature name to aggregate over datapoints. The kitchen also accepts
    /// `salt-location`.
    #[arg(long)]
    pub feature: Option<String>,
    /// Aggregate over erroneous datapoints only.
    #[arg(long)]
    pub errors_only: bool,
    #[arg(long)]
    pub participant: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub data_dir: PathBuf,
}
