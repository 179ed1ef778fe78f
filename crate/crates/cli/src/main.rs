use std::path::PathBuf;
use std::process::ExitCode;

use cbw_cli::scenario::parse_override;
use cbw_cli::{resolve, run, CliError, Kind};
use clap::{Args, Parser, Subcommand};
use toml::Value;

/// Coupled-MZI chain simulator.
#[derive(Parser)]
#[command(name = "cbw", version)]
struct Cli {
    /// Seed for every random stream; overrides the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the scenario.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fringe scan over φ ∈ [0, 2π).
    Sweep(ScenarioArgs),
    /// Time trace under AOM offsets and an event schedule.
    Time(ScenarioArgs),
    /// Monte-Carlo MLE spread against the Cramér-Rao bound.
    Fisher(ScenarioArgs),
    /// Fourier harmonics of a fringe scan.
    Harmonics(ScenarioArgs),
    /// Chain-geometry calibration.
    Calibrate(ScenarioArgs),
    /// Chain fringes against N-photon reference curves.
    ComparePbw(ScenarioArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override a scenario key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Extra overrides, e.g. `N=3 psi=0`.
    #[arg(value_name = "KEY=VALUE")]
    pairs: Vec<String>,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (kind, args) = match cli.command {
        Command::Sweep(a) => (Kind::Sweep, a),
        Command::Time(a) => (Kind::Time, a),
        Command::Fisher(a) => (Kind::Fisher, a),
        Command::Harmonics(a) => (Kind::Harmonics, a),
        Command::Calibrate(a) => (Kind::Calibrate, a),
        Command::ComparePbw(a) => (Kind::ComparePbw, a),
    };
    let text = match &args.scenario {
        Some(path) => std::fs::read_to_string(path).map_err(|source| CliError::Input { path: path.clone(), source })?,
        None => String::new(),
    };
    let mut overrides = args
        .set
        .iter()
        .chain(&args.pairs)
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = cli.seed {
        let seed = i64::try_from(seed).map_err(|_| CliError::semantic("seed", "must fit in a signed 64-bit integer"))?;
        overrides.push(("seed".into(), Value::Integer(seed)));
    }
    if let Some(out) = cli.out {
        overrides.push(("output_dir".into(), Value::String(out.to_string_lossy().into_owned())));
    }
    let scenario = resolve(&text, &overrides, Some(kind))?;
    log::info!("running {} scenario into {}", kind.as_str(), scenario.output_dir.display());
    let outcome = run(&scenario)?;
    for a in &outcome.artifacts {
        println!("{}", outcome.output_dir.join(&a.name).display());
    }
    println!("{}", outcome.output_dir.join("manifest.json").display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
