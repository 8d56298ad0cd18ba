mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flowdmd::{BalanceRule, CostKind, ModeScaling, ProblemKind, RankPolicy, Reservoir};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "flowdmd", version, about = "Flow fields from density snapshots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a DMD model to a raster set.
    Fit {
        rasters: PathBuf,
        #[command(flatten)]
        rank: RankArgs,
        #[arg(long, value_parser = parse_scaling, default_value = "projected")]
        scaling: ModeScaling,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model on a uniform time grid and write the frames.
    Reconstruct {
        model: PathBuf,
        #[arg(long)]
        dt_fine: f64,
        /// Time span `T0:T1`; defaults to the fitted span.
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
        /// Write the payload as little-endian f64 instead of text.
        #[arg(long)]
        binary: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Infer flows from a raster set or a fitted model.
    Flows(FlowArgs),
    /// Compute an error metric.
    Errors {
        #[arg(long, value_enum)]
        kind: ErrorKind,
        /// plan: two run directories (reference, DMD). presence: one raster
        /// set. dmd: reference rasters and a model.
        #[arg(required = true, num_args = 1..=2)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        rank: RankArgs,
        /// presence: fit one model per window of this many frames.
        #[arg(long)]
        window_frames: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun a reference experiment and print its tables.
    Bench {
        #[arg(long, value_enum)]
        experiment: Experiment,
        /// Grid sizes of the advection experiments.
        #[arg(long, value_delimiter = ',', default_values_t = [20, 30, 40])]
        sizes: Vec<usize>,
        /// Skip the global formulation.
        #[arg(long)]
        local_only: bool,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, Args)]
#[group(multiple = false)]
struct RankArgs {
    /// Fixed truncation rank.
    #[arg(long)]
    rank: Option<usize>,
    /// Smallest retained fraction of the squared singular values.
    #[arg(long)]
    energy: Option<f64>,
}

impl RankArgs {
    fn policy(&self) -> Result<RankPolicy, CliError> {
        match (self.rank, self.energy) {
            (Some(0), _) => Err(CliError::Usage("--rank must be positive".into())),
            (Some(r), _) => Ok(RankPolicy::Fixed(r)),
            (None, Some(e)) if e > 0.0 && e <= 1.0 => Ok(RankPolicy::Energy(e)),
            (None, Some(e)) => Err(CliError::Usage(format!("--energy {e} outside (0, 1]"))),
            (None, None) => Ok(RankPolicy::default()),
        }
    }
}

#[derive(Debug, Args)]
struct FlowArgs {
    /// Raster manifest or model file.
    input: PathBuf,
    /// Speed bound in length units per time unit.
    #[arg(long)]
    vmax: f64,
    #[arg(long, value_parser = parse_cost, default_value = "euclidean")]
    cost: CostKind,
    #[arg(long, value_parser = parse_mode, default_value = "local")]
    mode: ProblemKind,
    /// Fine steps per reporting window.
    #[arg(long, default_value_t = 1)]
    aggregate: usize,
    #[command(flatten)]
    rank: RankArgs,
    #[arg(long, value_parser = parse_scaling, default_value = "projected")]
    scaling: ModeScaling,
    #[arg(long, value_parser = parse_balance, default_value = "uniform")]
    balance: BalanceRule,
    /// off, auto or a positive penalty per unit of unrouted mass.
    #[arg(long, default_value = "off")]
    reservoir: Reservoir,
    #[arg(long, default_value_t = 1)]
    min_refinement: usize,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Fraction of arrows per window flagged as significant.
    #[arg(long, default_value_t = flowdmd::pipeline::DEFAULT_SIGNIFICANT_FRACTION)]
    significant: f64,
    /// Cap on global problem variables.
    #[arg(long, default_value_t = flowdmd::transport::DEFAULT_GLOBAL_BUDGET)]
    budget: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ErrorKind {
    Plan,
    Presence,
    Dmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Experiment {
    AdvectionTable1,
    AdvectionTable2,
    BurgersFig8,
}

fn parse_cost(s: &str) -> Result<CostKind, String> {
    CostKind::parse(s).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<ProblemKind, String> {
    ProblemKind::parse(s).ok_or_else(|| format!("expected local or global, got {s:?}"))
}

fn parse_scaling(s: &str) -> Result<ModeScaling, String> {
    ModeScaling::parse(s).ok_or_else(|| format!("expected projected or inverse_eigenvalue, got {s:?}"))
}

fn parse_balance(s: &str) -> Result<BalanceRule, String> {
    BalanceRule::parse(s).ok_or_else(|| format!("unknown balancing rule {s:?}"))
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected T0:T1")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad start {a:?}"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad end {b:?}"))?;
    if !(b > a) {
        return Err(format!("empty window {s}"));
    }
    Ok((a, b))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit {
            rasters,
            rank,
            scaling,
            out,
        } => rank
            .policy()
            .and_then(|p| commands::fit(&rasters, p, scaling, &out)),
        Command::Reconstruct {
            model,
            dt_fine,
            window,
            binary,
            out,
        } => commands::reconstruct(&model, dt_fine, window, binary, &out),
        Command::Flows(args) => commands::flows(&args),
        Command::Errors {
            kind,
            inputs,
            rank,
            window_frames,
            out,
        } => rank
            .policy()
            .and_then(|p| commands::errors(kind, &inputs, p, window_frames, out.as_deref())),
        Command::Bench {
            experiment,
            sizes,
            local_only,
            workers,
            out,
        } => commands::bench(experiment, &sizes, local_only, workers, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code().clamp(1, 255) as u8)
        }
    }
}
