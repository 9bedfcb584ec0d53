use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use robust_barrier::cli::{execute, Command, Overrides};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Simulate,
    Reach,
    CheckSafety,
    CheckAssumption,
    CheckRuas,
    SynthesizeLyapunov,
    SynthesizeBarrier,
    CertifyBarrier,
    Steer,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Command {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Reach => Command::Reach,
            Cmd::CheckSafety => Command::CheckSafety,
            Cmd::CheckAssumption => Command::CheckAssumption,
            Cmd::CheckRuas => Command::CheckRuas,
            Cmd::SynthesizeLyapunov => Command::SynthesizeLyapunov,
            Cmd::SynthesizeBarrier => Command::SynthesizeBarrier,
            Cmd::CertifyBarrier => Command::CertifyBarrier,
            Cmd::Steer => Command::Steer,
        }
    }
}

/// Robust reachability, Lyapunov and barrier certification for perturbed systems.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    command: Cmd,
    /// Scenario file (TOML).
    #[arg(value_name = "SCENARIO", required_unless_present = "scenario")]
    file: Option<PathBuf>,
    #[arg(long, conflicts_with = "file")]
    scenario: Option<PathBuf>,
    /// Output directory for report.json and CSV artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resolution: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let path = args.scenario.or(args.file).expect("clap enforces a scenario");
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(1);
        }
    };
    let ov = Overrides { seed: args.seed, resolution: args.resolution };
    let outcome = execute(args.command.into(), &text, ov).and_then(|o| o.write(&args.out).map(|_| o));
    match outcome {
        Ok(o) => {
            println!("status: {:?}, report: {}", o.status, args.out.join("report.json").display());
            ExitCode::from(o.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
