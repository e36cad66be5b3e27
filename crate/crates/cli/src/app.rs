use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use cogeffort::Exec;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::plot::{emit_plot_data, PlotKind};
use crate::stages::{run_pipeline, run_stage, Ctx, PredictionSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Predictions {
    Model,
    Oracle,
}

#[derive(Debug, Parser)]
#[command(name = "cogeffort", version, about = "fNIRS cognitive-effort pipeline")]
struct Args {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Artifact directory; overrides `out_dir` in the config. Default: ./out
    #[arg(long, global = true, value_name = "PATH")]
    out_dir: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Labels fed to the effort stage.
    #[arg(long, global = true, value_enum, default_value = "model")]
    predictions: Predictions,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic cohort (trials.csv).
    Synth,
    /// Impute, aggregate, standardize, project and balance (features.csv, train_balanced.csv).
    Prep,
    /// Train the configured network (model.ckpt, history.csv, predictions.csv, metrics.json).
    Train,
    /// Train every grid configuration and keep the best.
    Gridsearch,
    /// Random forest and boosted-tree baselines plus the latent-feature comparison.
    Baselines,
    /// Region contributions, latent/component correlations and Shapley values.
    Explain,
    /// Relative neural efficiency and involvement, actual against predicted.
    Effort,
    /// Every stage in order, then summary.json.
    Pipeline,
    /// Plot-ready CSV for one figure.
    Plotdata {
        /// history, heatmap, shapley or scatter.
        #[arg(long)]
        kind: String,
    },
}

fn context(args: &Args) -> CliResult<Ctx> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let cfg = cfg.resolve()?;
    let dir = args.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let predictions = match args.predictions {
        Predictions::Model => PredictionSource::Model,
        Predictions::Oracle => PredictionSource::Oracle,
    };
    Ok(Ctx { cfg, dir, exec: Exec::default(), predictions })
}

fn dispatch(args: Args) -> CliResult<()> {
    if let Command::Plotdata { kind } = &args.command {
        let kind = PlotKind::parse(kind)?;
        let from_config = match (&args.out_dir, &args.config) {
            (None, Some(p)) => RunConfig::load(p)?.out_dir,
            _ => None,
        };
        let dir = args.out_dir.clone().or(from_config).unwrap_or_else(|| PathBuf::from("out"));
        let path = emit_plot_data(&dir, kind)?;
        println!("{}", path.display());
        return Ok(());
    }
    let ctx = context(&args)?;
    let stage = match args.command {
        Command::Synth => "synth",
        Command::Prep => "prep",
        Command::Train => "train",
        Command::Gridsearch => "gridsearch",
        Command::Baselines => "baselines",
        Command::Explain => "explain",
        Command::Effort => "effort",
        Command::Pipeline => return run_pipeline(&ctx),
        Command::Plotdata { .. } => unreachable!("handled above"),
    };
    run_stage(&ctx, stage)
}

/// Parses `argv`, runs the command and returns the process exit code.
///
/// Failures print one `error stage=… kind=… message=…` line to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::validation("cli", first));
            return 1;
        }
    };
    match dispatch(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
