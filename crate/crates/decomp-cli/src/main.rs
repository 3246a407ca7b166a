use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use decomp_cli::{
    apply_overrides, cmd_calibrate, cmd_decompose, cmd_filter, cmd_sensitivity, cmd_simulate,
    Overrides,
};
use decomp_core::config::AnalysisConfig;

/// Weighted causal decomposition analysis with a calibrated sensitivity
/// analysis under the marginal sensitivity model.
#[derive(Parser)]
#[command(name = "decomp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Analysis configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the seed (bootstrap and simulation).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the bootstrap replicate count.
    #[arg(long = "bootstrap-b", value_name = "B")]
    bootstrap_b: Option<usize>,
    /// Override the significance level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Override the upper end of the critical-lambda search.
    #[arg(long = "lambda-max")]
    lambda_max: Option<f64>,
    /// Override the equivalence-test fractions (comma-separated, each in (0, 1]).
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    /// Fit the e0 model on all covariates instead of allowable-only.
    #[arg(long = "no-allowability")]
    no_allowability: bool,
    /// Drop rows matching this expression (column==v, !=, <, >) before analysis.
    #[arg(long, value_name = "EXPR")]
    exclude: Option<String>,
    /// Also write the per-unit weights to weights.csv.
    #[arg(long = "emit-weights")]
    emit_weights: bool,
    /// Override the output directory.
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Keep only rows matching this expression.
    #[arg(long, value_name = "EXPR")]
    keep: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Observed disparity, disparity reduction, and residual disparity with
    /// bootstrap standard deviations and percentile confidence intervals.
    Decompose(CommonArgs),
    /// Partial-identification bounds over a lambda grid, critical sensitivity
    /// parameters (point estimate and confidence interval), and equivalence
    /// tests.
    Sensitivity(CommonArgs),
    /// Per-covariate calibration of the two-parameter amplification and the
    /// killer-confounder contour plot.
    Calibrate(CommonArgs),
    /// Generate a synthetic dataset with a known-truth sidecar.
    Simulate(CommonArgs),
    /// Apply a row filter and write the filtered dataset for chaining.
    Filter(FilterArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Decompose(c)
            | Command::Sensitivity(c)
            | Command::Calibrate(c)
            | Command::Simulate(c) => c,
            Command::Filter(f) => &f.common,
        }
    }
}

fn overrides_from(args: &CommonArgs) -> Overrides {
    Overrides {
        seed: args.seed,
        bootstrap_b: args.bootstrap_b,
        alpha: args.alpha,
        lambda_max: args.lambda_max,
        eta: args.eta.clone(),
        no_allowability: args.no_allowability,
        exclude: args.exclude.clone(),
        emit_weights: args.emit_weights,
        out_dir: args.out_dir.clone(),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let args = cli.command.common();
    let mut cfg = AnalysisConfig::load(&args.config)?;
    apply_overrides(&mut cfg, &overrides_from(args))?;

    let artifacts = match &cli.command {
        Command::Decompose(_) => cmd_decompose(&cfg)?,
        Command::Sensitivity(_) => cmd_sensitivity(&cfg)?,
        Command::Calibrate(_) => cmd_calibrate(&cfg)?,
        Command::Simulate(_) => cmd_simulate(&cfg)?,
        Command::Filter(f) => cmd_filter(&cfg, f.keep.as_deref())?,
    };

    for path in artifacts.write_to(&cfg.output.dir)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
