use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use std::process::ExitCode;
use symcoal_cli::config::RunConfig;
use symcoal_cli::runner::run;

/// Simulators, exact rate computations and path metrics for coalescents
/// of Wright-Fisher populations with bottlenecks.
#[derive(Parser)]
#[command(name = "symcoal", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON configuration file (see docs/config.schema.json)
    #[arg(long)]
    config: Option<String>,
    /// Inline JSON with the command's params object (alternative to --config)
    #[arg(long)]
    params: Option<String>,
    /// Master seed; replicate r draws from the ChaCha stream (seed, r)
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte-Carlo replicates
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads (results are identical for any worker count)
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: $SYMCOAL_OUT or ./out)
    #[arg(long)]
    out_dir: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run any command from a full configuration file
    Run(CommonArgs),
    /// Collision rates, generator entries and total rates
    Rates(CommonArgs),
    /// Backward-in-time coalescent simulation
    SimulateCoalescent(CommonArgs),
    /// Forward Wright-Fisher simulation under a bottleneck demography
    SimulateForward(CommonArgs),
    /// Jump-diffusion simulation and moment estimates
    SimulateSde(CommonArgs),
    /// Moment-duality comparison (exits nonzero if any z-check fails)
    Duality(CommonArgs),
    /// Path distances between two step-path CSV files
    Metric(CommonArgs),
    /// Total-rate asymptotics for the power-law family
    Asymptotics(CommonArgs),
    /// Time-rescaled-Kingman criterion coefficients
    Mohle(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Run(c)
            | Command::Rates(c)
            | Command::SimulateCoalescent(c)
            | Command::SimulateForward(c)
            | Command::SimulateSde(c)
            | Command::Duality(c)
            | Command::Metric(c)
            | Command::Asymptotics(c)
            | Command::Mohle(c) => c,
        }
    }

    fn expected_command(&self) -> Option<&'static str> {
        match self {
            Command::Run(_) => None,
            Command::Rates(_) => Some("rates"),
            Command::SimulateCoalescent(_) => Some("simulate-coalescent"),
            Command::SimulateForward(_) => Some("simulate-forward"),
            Command::SimulateSde(_) => Some("simulate-sde"),
            Command::Duality(_) => Some("duality"),
            Command::Metric(_) => Some("metric"),
            Command::Asymptotics(_) => Some("asymptotics"),
            Command::Mohle(_) => Some("mohle"),
        }
    }
}

fn load_config(cmd: &Command) -> anyhow::Result<RunConfig> {
    let common = cmd.common();
    let mut cfg = match (&common.config, &common.params) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {path}"))?;
            RunConfig::from_json(&text)?
        }
        (None, Some(params)) => {
            let name = cmd
                .expected_command()
                .ok_or_else(|| anyhow::anyhow!("`run` needs --config with a command key"))?;
            let wrapped = format!(r#"{{"command": "{name}", "params": {params}}}"#);
            RunConfig::from_json(&wrapped)?
        }
        (Some(_), Some(_)) => anyhow::bail!("use either --config or --params, not both"),
        (None, None) => anyhow::bail!("one of --config or --params is required"),
    };
    if let Some(expected) = cmd.expected_command() {
        let got = cfg.command.name();
        if got != expected {
            anyhow::bail!("config is for command '{got}', expected '{expected}'");
        }
    }
    // flags override config keys
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = common.replicates {
        cfg.replicates = reps;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli.command) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("config error: {err:#}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            for (name, hash) in &outcome.written.files {
                println!("{}  {}", hash, outcome.written.out_dir.join(name).display());
            }
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("embedded checks failed; see results.json");
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
