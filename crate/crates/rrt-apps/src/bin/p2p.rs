//! Ring-routing demo. Builds two peered nodes, routes a scripted set of
//! messages through them, and prints the combined trace. The trace for a
//! given seed is identical whether the ring shares one process or talks
//! over real sockets.

use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use rrt_apps::p2p::{run, P2pMode};

#[derive(Parser)]
#[command(name = "p2p", about = "Route scripted messages around a two-node ring")]
struct Args {
    /// Whether the ring talks over sockets or stays in one process.
    #[arg(long, value_enum)]
    mode: ModeArg,

    /// Seed for keys, destinations and payload sizes.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Two serving runtimes, every call over HTTP.
    TwoNode,
    /// Plain instances in one address space, no sockets.
    SingleProcess,
}

fn main() -> ExitCode {
    env_logger::init();
    let args = Args::parse();
    let mode = match args.mode {
        ModeArg::TwoNode => P2pMode::TwoNode,
        ModeArg::SingleProcess => P2pMode::SingleProcess,
    };
    match run(mode, args.seed) {
        Ok(trace) => {
            for line in trace {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("p2p: {e}");
            ExitCode::FAILURE
        }
    }
}
