//! Call-cost benchmark client. Points at a running `node` daemon that
//! exposes `Bench` and `BenchControl` (see the manifest format) and
//! prints one machine-readable line per timed configuration, then a
//! human summary.

use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use rrt_apps::bench::{run_bench, BenchMode, BenchSpec};

#[derive(Parser)]
#[command(name = "bench", about = "Measure per-call cost against a serving node")]
struct Args {
    /// Workload to run.
    #[arg(long, value_enum)]
    mode: ModeArg,

    /// The serving node, as host:port.
    #[arg(long)]
    target: String,

    /// Timed batches per configuration.
    #[arg(long, default_value_t = 100)]
    batches: u32,

    /// Sequential calls per batch.
    #[arg(long, default_value_t = 4000)]
    calls: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Void method, no arguments: the transport floor.
    #[value(name = "noarg")]
    NoArg,
    /// Ten structured arguments copied per call.
    #[value(name = "tenargs")]
    TenArgs,
    /// One workload timed twice: with rules installed, and with the
    /// rule engine bypassed.
    #[value(name = "policy")]
    Policy,
}

fn run(args: &Args) -> Result<(), Box<dyn std::error::Error>> {
    let (host, port) = args
        .target
        .rsplit_once(':')
        .ok_or("target must be host:port")?;
    let port: u16 = port.parse()?;
    let mode = match args.mode {
        ModeArg::NoArg => BenchMode::NoArg,
        ModeArg::TenArgs => BenchMode::TenArgs,
        ModeArg::Policy => BenchMode::PolicyOverhead,
    };
    let mut spec = BenchSpec::new(mode, host, port);
    spec.batches = args.batches;
    spec.calls_per_batch = args.calls;

    let report = run_bench(&spec)?;
    for line in report.machine_lines() {
        println!("{line}");
    }
    println!();
    print!("{}", report.human_text());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bench: {e}");
            ExitCode::FAILURE
        }
    }
}
