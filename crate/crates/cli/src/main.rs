use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use loop_morse_cli::config::RunConfig;
use loop_morse_cli::pipeline::{self, error_kind, RunError, Stage};
use loop_morse_cli::report::{self, ErrorRecord};

const CONFIG_ERROR: u8 = 2;
const NUMERICAL_FAILURE: u8 = 4;

#[derive(Parser)]
#[command(name = "loop-morse", version, about = "Morse complexes of action functionals on loop and path spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides `seeds.seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Find the nondegenerate critical points.
    Orbits(Common),
    /// Critical points plus Morse and Maslov indices.
    Indices(Common),
    /// Everything up to the boundary matrices.
    Complex(Common),
    /// Everything up to homology and its comparison with the catalog.
    Homology(Common),
    /// The Fredholm index suite.
    Fredholm(Common),
    /// Every stage and every enabled check.
    VerifyAll(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, args) = match cli.command {
        Command::Orbits(a) => (Stage::Orbits, a),
        Command::Indices(a) => (Stage::Indices, a),
        Command::Complex(a) => (Stage::Complex, a),
        Command::Homology(a) => (Stage::Homology, a),
        Command::Fredholm(a) => (Stage::Fredholm, a),
        Command::VerifyAll(a) => (Stage::VerifyAll, a),
    };
    let mut cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", args.config.display());
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seeds.seed = seed;
    }
    let out = args.out.or_else(|| cfg.output.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("loop-morse-out"));
    if let Some(k) = args.threads {
        if k == 0 || rayon::ThreadPoolBuilder::new().num_threads(k).build_global().is_err() {
            eprintln!("cannot start a pool of {k} threads");
            return ExitCode::from(CONFIG_ERROR);
        }
    }
    match pipeline::run(&cfg, stage) {
        Ok(outcome) => {
            if let Err(e) = report::emit_report(&out, &outcome.report, &outcome.attachments) {
                eprintln!("cannot write the report to {}: {e}", out.display());
                return ExitCode::from(NUMERICAL_FAILURE);
            }
            for c in &outcome.report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            for w in &outcome.report.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(RunError::Config(e)) => {
            eprintln!("{}: {e}", args.config.display());
            ExitCode::from(CONFIG_ERROR)
        }
        Err(RunError::Numerical(e)) => {
            eprintln!("error: {e}");
            let record = ErrorRecord { stage: stage.name().into(), kind: error_kind(&e).into(), message: e.to_string() };
            if let Err(io) = report::emit_error(&out, &record) {
                eprintln!("cannot write the error record: {io}");
            }
            ExitCode::from(NUMERICAL_FAILURE)
        }
    }
}
