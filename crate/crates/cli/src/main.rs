//! `iml` — batch runner for Fuchsian-system experiments.
//!
//! Exit codes: 0 pass, 2 validation failure, 3 numerical failure,
//! 4 check failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use iml_cli::commands;
use iml_cli::instance::InstanceFile;
use iml_cli::report;

#[derive(Parser)]
#[command(name = "iml", version, about = "Fuchsian systems: monodromy, stability, transforms, isomonodromic flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monodromy representation, local Riemann-Hilbert comparison,
    /// singular-locus verdict.
    Monodromy(RunArgs),
    /// α-stability with exact rational slope comparisons.
    Stability(RunArgs),
    /// Apply the instance's transform script; emits the transformed instance.
    Transform(RunArgs),
    /// Schlesinger flow along the instance's deformation path, with
    /// isomonodromy certification.
    Flow(RunArgs),
    /// Full property suite on one instance.
    Verify(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Instance file (UTF-8 JSON).
    instance: PathBuf,
    /// Override the command's decision tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Also write the report to this file (atomically).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the instance's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    // IML_THREADS caps internal parallelism.
    if let Ok(threads) = std::env::var("IML_THREADS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
        }
    }
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Monodromy(a) => ("monodromy", a),
        Command::Stability(a) => ("stability", a),
        Command::Transform(a) => ("transform", a),
        Command::Flow(a) => ("flow", a),
        Command::Verify(a) => ("verify", a),
    };

    let mut inst = match InstanceFile::load(&args.instance) {
        Ok(i) => i,
        Err(e) => return fail(2, &e.to_string()),
    };
    if let Some(seed) = args.seed {
        inst.seed = Some(seed);
    }

    let outcome = match name {
        "monodromy" => commands::cmd_monodromy(&inst, args.tol),
        "stability" => commands::cmd_stability(&inst, args.tol),
        "transform" => commands::cmd_transform(&inst, args.tol),
        "flow" => commands::cmd_flow(&inst, args.tol),
        "verify" => commands::cmd_verify(&inst, args.tol),
        _ => unreachable!(),
    };
    match outcome {
        Ok(output) => {
            let text = report::to_string(&output.report);
            print!("{text}");
            if let Some(path) = &args.out {
                if let Err(e) = report::write_atomic(path, &text) {
                    return fail(3, &format!("cannot write report: {e}"));
                }
            }
            if output.check_failed {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => fail(e.exit_code() as u8, &e.to_string()),
    }
}

fn fail(code: u8, message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}
