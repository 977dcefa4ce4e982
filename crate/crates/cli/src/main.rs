use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imc_mimo::device::DeviceSpec;
use imc_mimo::harness::{run_pipeline, ExperimentConfig, Mode};
use imc_mimo::Error;

#[derive(Parser)]
#[command(name = "imc-mimo", version, about = "Crossbar-based deep MIMO detector simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train DetNet parameters and write a checkpoint.
    Train(Common),
    /// Monte Carlo BER sweep over SNR and C2C variation.
    EvalBer(Common),
    /// Evaluate the detection-error bound.
    Bounds(Common),
    /// Simulated vs bounded channel programming latency.
    Latency(Common),
    /// Hardware component counts and cycle-count comparison.
    Complexity(Common),
    /// FLOPs per symbol and throughput.
    Flops(Common),
    /// Pulse-level programming error statistics.
    ProgramSim(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 1 runs serially.
    #[arg(long)]
    threads: Option<usize>,
    /// Device preset (overrides the config).
    #[arg(long)]
    preset: Option<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::UnknownDetector(_)
        | Error::MissingParams(_)
        | Error::Checkpoint(_)
        | Error::Dimension { .. }
        | Error::SearchSpace { .. } => 2,
        Error::Singular(_) | Error::Diverged { .. } | Error::RankDeficient | Error::TargetOutOfRange { .. } => 3,
        _ => 1,
    }
}

fn build_config(mode: Mode, args: &Common) -> imc_mimo::Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    config.mode = mode;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(name) = &args.preset {
        let spec = DeviceSpec::preset(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown preset '{name}' (expected one of {})",
                DeviceSpec::PRESET_NAMES.join(", ")
            ))
        })?;
        config.preset = name.clone();
        config.device = spec;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Train(a) => (Mode::Train, a),
        Command::EvalBer(a) => (Mode::EvalBer, a),
        Command::Bounds(a) => (Mode::Bounds, a),
        Command::Latency(a) => (Mode::Latency, a),
        Command::Complexity(a) => (Mode::Complexity, a),
        Command::Flops(a) => (Mode::Flops, a),
        Command::ProgramSim(a) => (Mode::Program, a),
    };
    let result = build_config(mode, args).and_then(|c| run_pipeline(&c, &args.out, args.threads));
    match result {
        Ok(artifacts) => {
            for f in &artifacts.files {
                println!("{}", f.display());
            }
            println!("{}", artifacts.manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
