use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use plg_core::distributions::GaussianMethod;
use plg_core::gibbs::Mutation;
use plg_core::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "plg", version, about = "Gibbs samplers for Bayesian fused, group and sparse group lasso")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one or more chains and write samples, a summary and the drift report.
    Fit(FitArgs),
    /// Summarize stored samples files.
    Diagnose(DiagnoseArgs),
    /// Run verification suites; exits 1 if any check fails.
    Verify(VerifyArgs),
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    ModelKind::from_str(s).map_err(|e| e.to_string())
}

fn parse_mutation(s: &str) -> Result<Mutation, String> {
    Mutation::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitArg {
    Default,
    Zero,
    File(PathBuf),
}

impl FromStr for InitArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "default" => Ok(InitArg::Default),
            "zero" => Ok(InitArg::Zero),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(InitArg::File(PathBuf::from(p))),
                _ => Err(format!("expected default, zero or file:PATH, got '{s}'")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Cholesky,
    FastNp,
}

impl From<MethodArg> for GaussianMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Cholesky => GaussianMethod::Cholesky,
            MethodArg::FastNp => GaussianMethod::FastNp,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// bfl, bgl or bsgl.
    #[arg(long, value_parser = parse_model)]
    pub model: ModelKind,
    /// CSV with a header; column "y" first, then the predictors.
    #[arg(long)]
    pub data: PathBuf,
    /// Group sizes for bgl and bsgl, e.g. 2,3,1.
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub xi: f64,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub iters: u64,
    /// Defaults to 10% of the iterations.
    #[arg(long)]
    pub burnin: Option<u64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub thin: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Independent chains, run concurrently on stream ids 0..N-1.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub chains: u64,
    /// default, zero or file:PATH (a JSON state).
    #[arg(long, default_value = "default")]
    pub init: InitArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Cholesky)]
    pub method: MethodArg,
    /// Small-set radius as a multiple of 2L/(1-phi).
    #[arg(long, default_value_t = 1.0)]
    pub radius_multiplier: f64,
    #[arg(long, short, default_value = "plg_out")]
    pub out: PathBuf,
    #[arg(long, hide = true, value_parser = parse_mutation)]
    pub mutation: Option<Mutation>,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    /// samples_*.csv files written by `fit`.
    #[arg(required = true)]
    pub chains: Vec<PathBuf>,
    #[arg(long, short, default_value = "summary.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Geweke,
    Prior,
    Drift,
    Oracle,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Geweke => "geweke",
            Suite::Prior => "prior",
            Suite::Drift => "drift",
            Suite::Oracle => "oracle",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Draws from each simulator of the joint-distribution test.
    #[arg(long, default_value_t = 10_000)]
    pub replicates: usize,
    /// Monte Carlo samples for the prior checks.
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    /// Iterations of each chain compared with the quadrature oracle.
    #[arg(long, default_value_t = 100_000)]
    pub oracle_iters: usize,
    #[arg(long, short, default_value = "report.json")]
    pub out: PathBuf,
    #[arg(long, hide = true, value_parser = parse_mutation)]
    pub mutation: Option<Mutation>,
}
