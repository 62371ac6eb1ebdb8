use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ioncavity::config::{ExperimentConfig, Mode, PAPER_SCALE_TRIALS};
use ioncavity::experiment::{self, RunOptions};

/// Simulate and analyze a trapped-ion cavity single-photon source.
#[derive(Parser)]
#[command(name = "ioncavity", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Analyze a time-tag file (`time_ps,detector[,origin]`).
    Analyze {
        /// Time-tag CSV to analyze.
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write gnuplot scripts for the CSVs in an output directory.
    Figures {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a config file and print it in canonical form.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Config file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Use the trial count of the full measurement campaign.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides run.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the mode in the config (master_equation, trajectory,
    /// analyze_only, dark_level_study).
    #[arg(long)]
    mode: Option<String>,
    /// Keep the simulation-only origin column in clicks.csv.
    #[arg(long)]
    debug_origins: bool,
}

fn load(common: &Common) -> ioncavity::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if common.paper_scale {
        cfg.run.n_trials = PAPER_SCALE_TRIALS;
        if cfg.run.write_emissions {
            log::info!("full campaign scale: raw emission dump disabled");
            cfg.run.write_emissions = false;
        }
    }
    Ok(cfg)
}

fn report(bundle: &experiment::Bundle) {
    for f in &bundle.files {
        log::info!("wrote {}", f.display());
    }
    print!("{}", ioncavity::stats::format_summary(&bundle.summary));
}

fn figures(out: &Path) -> ioncavity::Result<()> {
    let r = experiment::emit_figures(out)?;
    for m in &r.missing {
        log::warn!("skipped {m}");
    }
    for w in &r.written {
        println!("{}", w.display());
    }
    Ok(())
}

fn main_inner(cli: Cli) -> ioncavity::Result<()> {
    match cli.command {
        Command::Run(a) => {
            let mut cfg = load(&a.common)?;
            if let Some(s) = a.seed {
                cfg.run.master_seed = s;
            }
            if let Some(m) = &a.mode {
                cfg.mode = Mode::parse(m)?;
            }
            let opts = RunOptions {
                debug_origins: a.debug_origins,
            };
            report(&experiment::run(&cfg, &a.common.out, &opts)?);
        }
        Command::Analyze { input, common } => {
            let mut cfg = load(&common)?;
            cfg.mode = Mode::AnalyzeOnly;
            cfg.run.input_clicks = Some(std::path::absolute(&input)?);
            report(&experiment::run(&cfg, &common.out, &RunOptions::default())?);
        }
        Command::Figures { out } => figures(&out)?,
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", cfg.to_toml()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
