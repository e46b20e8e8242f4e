mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(
    name = "shockhopf",
    version,
    about = "Viscous shock profiles, Evans-function stability and dynamics experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized test data.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Solve for the viscous shock profile.
    Profile,
    /// Evans-function winding counts and stability verdict.
    Evans,
    /// Scan a one-parameter family for an imaginary-axis crossing.
    Hopf,
    /// Periodic-source kernel sums against the resolvent route.
    Kernelsum,
    /// Lagrangian linearization-error experiment.
    Energy,
    /// Eulerian counterexample with rough density data.
    Eulerian,
    /// Time-periodic probe on the synthetic normal-form backend.
    Probe,
    /// Structural-assumption report for a model and its endstates.
    Check,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Profile => "profile",
            Command::Evans => "evans",
            Command::Hopf => "hopf",
            Command::Kernelsum => "kernelsum",
            Command::Energy => "energy",
            Command::Eulerian => "eulerian",
            Command::Probe => "probe",
            Command::Check => "check",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(shockhopf::Error),
}

impl From<shockhopf::Error> for CliError {
    fn from(e: shockhopf::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use shockhopf::Error::*;
        match self {
            CliError::Config(_) => 1,
            CliError::Core(e) => match e {
                InvalidParameter(_) | Parse(_) | Io(_) | Domain(_) => 1,
                ZeroStrength | NonAdmissible(_) | NoConnection(_) | Resolution(_) => 2,
                EssentialSpectrum(_) | BranchAmbiguity(_) | ContourResolution(_) | Continuation(_) => 3,
                StepRejected(_) | Blowup { .. } | WeightedOverflow(_) => 4,
                Budget(_) => 5,
            },
        }
    }
}

/// Successful run: files written and the exit code (nonzero when a run
/// finished but hit a blowup or budget limit).
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub code: u8,
}

pub struct Ctx {
    pub out: PathBuf,
    pub seed: u64,
    /// Directory relative paths inside the config refer to.
    pub config_dir: PathBuf,
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    config_hash: String,
    seed: u64,
    outputs: Vec<PathBuf>,
    wall_time: f64,
    exit_code: u8,
    error: Option<String>,
    threads: usize,
    config: serde_json::Value,
}

fn run<T, F>(cli: &Cli, command: Command, body: F) -> u8
where
    T: DeserializeOwned + Serialize + Default,
    F: FnOnce(&Ctx, &T) -> Result<Outcome, CliError>,
{
    let start = Instant::now();
    let cfg: T = match config::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let resolved = serde_json::to_value(&cfg).expect("configs serialize");
    let config_hash = output::sha256_hex(resolved.to_string().as_bytes());
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create {}: {e}", cli.out.display());
        return 1;
    }
    let config_dir =
        cli.config.as_ref().and_then(|p| p.parent().map(|d| d.to_path_buf())).unwrap_or_else(|| PathBuf::from("."));
    let ctx = Ctx { out: cli.out.clone(), seed: cli.seed, config_dir };
    let (outputs, code, error) = match body(&ctx, &cfg) {
        Ok(o) => (o.outputs, o.code, None),
        Err(e) => {
            eprintln!("error: {e}");
            (Vec::new(), e.exit_code(), Some(e.to_string()))
        }
    };
    let manifest = RunManifest {
        command: command.name(),
        config_hash,
        seed: cli.seed,
        outputs,
        wall_time: start.elapsed().as_secs_f64(),
        exit_code: code,
        error,
        threads: rayon::current_num_threads(),
        config: resolved,
    };
    let path = cli.out.join(format!("{}_manifest.json", command.name()));
    if let Err(e) = output::write_json(&path, &manifest) {
        eprintln!("error: cannot write {}: {e}", path.display());
        return 1;
    }
    code
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("global pool is set once");
    }
    let code = match cli.command {
        c @ Command::Profile => run(&cli, c, commands::profile),
        c @ Command::Evans => run(&cli, c, commands::evans),
        c @ Command::Hopf => run(&cli, c, commands::hopf),
        c @ Command::Kernelsum => run(&cli, c, commands::kernelsum),
        c @ Command::Energy => run(&cli, c, commands::energy),
        c @ Command::Eulerian => run(&cli, c, commands::eulerian),
        c @ Command::Probe => run(&cli, c, commands::probe),
        c @ Command::Check => run(&cli, c, commands::check),
    };
    ExitCode::from(code)
}
