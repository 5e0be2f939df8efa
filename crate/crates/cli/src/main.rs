use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use xpdmimo::{load_config, run_experiment, ScenarioConfig};

#[derive(Parser)]
#[command(name = "xpdmimo", version, about = "Dual-polarized XL-MIMO boundaries, capacity bounds and covariance optimisation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario TOML (`-` for stdin); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for `<experiment>.csv|json`; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form and numeric near/far-field distances for the configured user.
    Boundary,
    /// Aperture threshold for the configured user.
    Aperture,
    /// Monte Carlo capacity of the scalar covariance and its upper bound.
    Capacity,
    /// Transmit covariance for the configured user.
    Optimize,
    /// Multiplication counts for the configured S, M0 and N.
    Complexity,
    /// One figure sweep: fig2 … fig7.
    Experiment { id: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => match load_config(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        None => ScenarioConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.fading.seed = s;
    }
    if let Some(t) = cli.trials {
        if t == 0 {
            eprintln!("config error: --trials must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        cfg.fading.trials = t;
    }

    let id = match &cli.command {
        Command::Boundary => "boundary",
        Command::Aperture => "aperture",
        Command::Capacity => "capacity",
        Command::Optimize => "optimize",
        Command::Complexity => "complexity",
        Command::Experiment { id } => id.as_str(),
    };
    let run = match run_experiment(id, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let (text, ext) = match cli.format {
        Format::Csv => (run.table.to_csv(), "csv"),
        Format::Json => (run.table.to_json(), "json"),
    };
    match &cli.out {
        Some(dir) => {
            let path = dir.join(format!("{id}.{ext}"));
            if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, &text)) {
                eprintln!("cannot write {}: {e}", path.display());
                return ExitCode::from(EXIT_IO);
            }
        }
        None => print!("{text}"),
    }
    match run.failure {
        Some(xpdmimo_core::Error::InvalidParameter(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Some(e) => {
            eprintln!("numerical failure: {e}");
            ExitCode::from(EXIT_NUMERIC)
        }
        None => ExitCode::SUCCESS,
    }
}
