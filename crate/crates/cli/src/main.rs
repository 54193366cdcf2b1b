use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crivet_cli::{
    cmd_cif, cmd_fit, cmd_preprocess, cmd_sensitivity, cmd_simulate, CliError, Overrides, Preset,
    RunConfig,
};

#[derive(Parser)]
#[command(
    name = "crivet",
    version,
    about = "Competing-risks analysis of hospital admission cohorts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; flags below take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cohort CSV, analysis CSV or cohort spec JSON, depending on the command.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bootstrap replicates for median length-of-stay intervals.
    #[arg(long, global = true)]
    bootstrap: Option<usize>,
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Validate a cohort file and derive the analysis table.
    Preprocess,
    /// Grouped cumulative incidence, fatality risk and median length of stay.
    Cif,
    /// Stratified Fine-Gray regression.
    Fit,
    /// Refits with the onset of fatal cases shifted backwards.
    Sensitivity,
    /// Generate a synthetic cohort from a spec file.
    Simulate,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("CRIVET_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("CRIVET_THREADS must be a count, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = base.apply(Overrides {
        input: cli.input,
        out: cli.out,
        seed: cli.seed,
        bootstrap: cli.bootstrap,
        preset: cli.preset,
    });
    cfg.validate()?;
    match cli.command {
        Command::Preprocess => println!("{}", cmd_preprocess(&cfg)?),
        Command::Cif => {
            let groups = cmd_cif(&cfg)?;
            let empty = groups.iter().filter(|g| g.estimate.is_none()).count();
            println!("{} groups written ({empty} without subjects)", groups.len());
        }
        Command::Fit => {
            let fit = cmd_fit(&cfg)?;
            let d = &fit.model.diagnostics;
            println!(
                "{} records, {} coefficients, {} strata; converged in {} iterations",
                fit.records_used,
                fit.model.beta.len(),
                fit.model.strata.len(),
                d.iterations
            );
        }
        Command::Sensitivity => {
            let s = cmd_sensitivity(&cfg)?;
            println!(
                "shifts {:?} fitted; {} admissions without onset date excluded",
                s.shifts, s.excluded
            );
        }
        Command::Simulate => println!("{}", cmd_simulate(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(crivet::Error::NonConvergence(d)) = &e {
                eprintln!("diagnostics: {d:?}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
