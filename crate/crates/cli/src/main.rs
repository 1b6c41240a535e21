use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracheat_cli::config::{parse_config, Experiment, ExperimentConfig};
use fracheat_cli::report::{self, EXIT_CRASHED};
use fracheat_cli::run_experiment;

#[derive(Parser)]
#[command(name = "fracheat", version, about = "Experiment runner for the fractional-noise heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML experiment config; without it the built-in preset is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overrides the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overrides the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "FRACHEAT_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    NoiseCov(RunArgs),
    SigmaAsymptotics(RunArgs),
    WickGrowth(RunArgs),
    CauchyDecay(RunArgs),
    SolveRegular(RunArgs),
    SolveRough(RunArgs),
    ConvergeU(RunArgs),
    KernelChecks(RunArgs),
    /// Print a summary CSV written by the acceptance suite and exit with its status.
    Report {
        path: PathBuf,
    },
}

fn fail(kind: &str, message: String) -> ExitCode {
    let rec = serde_json::json!({ "kind": kind, "message": message });
    eprintln!("{rec}");
    ExitCode::from(EXIT_CRASHED as u8)
}

fn load(exp: Experiment, args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let cfg = parse_config(&text)?;
            if cfg.experiment != exp {
                anyhow::bail!("experiment: config is for `{}`, subcommand is `{exp}`", cfg.experiment);
            }
            cfg
        }
        None => ExperimentConfig::preset(exp)?,
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output = out.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (exp, args) = match cli.command {
        Command::NoiseCov(a) => (Experiment::NoiseCov, a),
        Command::SigmaAsymptotics(a) => (Experiment::SigmaAsymptotics, a),
        Command::WickGrowth(a) => (Experiment::WickGrowth, a),
        Command::CauchyDecay(a) => (Experiment::CauchyDecay, a),
        Command::SolveRegular(a) => (Experiment::SolveRegular, a),
        Command::SolveRough(a) => (Experiment::SolveRough, a),
        Command::ConvergeU(a) => (Experiment::ConvergeU, a),
        Command::KernelChecks(a) => (Experiment::KernelChecks, a),
        Command::Report { path } => {
            return match report::load_report(&path) {
                Ok(rows) => {
                    let code = report::emit_report(&rows, &mut std::io::stdout(), None).unwrap_or(EXIT_CRASHED);
                    ExitCode::from(code as u8)
                }
                Err(e) => fail("report", e.to_string()),
            };
        }
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail("threads", e.to_string());
        }
    }
    let cfg = match load(exp, &args) {
        Ok(c) => c,
        Err(e) => return fail("config", e.to_string()),
    };
    match run_experiment(&cfg, std::path::Path::new(&cfg.output)) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail("run", e.to_string()),
    }
}
