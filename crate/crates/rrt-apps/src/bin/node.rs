//! Standalone service daemon: reads a manifest, exposes its services,
//! and answers calls until killed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use rrt::node::{FailureMode, Node, NodeConfig};
use rrt_apps::bench::register_bench_classes;
use rrt_apps::demo::register_demo_classes;
use rrt_apps::manifest;

#[derive(Parser)]
#[command(name = "node", about = "Serve the objects named in a manifest file")]
struct Args {
    /// Address to bind and to advertise in outgoing references.
    #[arg(long, default_value = "127.0.0.1")]
    host: String,

    /// Port to bind; 0 picks a free one.
    #[arg(long, default_value_t = 0)]
    port: u16,

    /// Manifest of services to expose (constructor / remote type / name).
    #[arg(long)]
    manifest: PathBuf,

    /// Policy file to load into this node's rule store.
    #[arg(long)]
    policy: Option<PathBuf>,

    /// What a caller of this node sees when a downstream call fails.
    #[arg(long, value_enum, default_value_t = FailureModeArg::Propagate)]
    failure_mode: FailureModeArg,

    /// Let browser pages show full interfaces and live field values.
    #[arg(long)]
    browse_details: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FailureModeArg {
    /// Failed calls return the declared type's default value.
    Suppress,
    /// Failed calls raise a distribution fault.
    Propagate,
}

fn run(args: &Args) -> Result<(), Box<dyn std::error::Error>> {
    let node = Node::new(NodeConfig {
        host: args.host.clone(),
        port: args.port,
        failure_mode: match args.failure_mode {
            FailureModeArg::Suppress => FailureMode::SuppressWithDefaults,
            FailureModeArg::Propagate => FailureMode::Propagate,
        },
        browse_details: args.browse_details,
    });
    register_demo_classes(&node);
    register_bench_classes(&node);

    let text = std::fs::read_to_string(&args.manifest)?;
    let records = manifest::apply(&node, &manifest::parse(&text)?)?;
    if let Some(path) = &args.policy {
        node.policy().load(&std::fs::read(path)?)?;
    }

    let port = node.serve()?;
    for record in &records {
        println!("service {} ({})", record.service_key(), record.remote_type.type_name());
    }
    println!("ready on {}:{} ({} services)", node.host(), port, records.len());
    use std::io::Write;
    std::io::stdout().flush()?;

    loop {
        std::thread::park();
    }
}


fn main() -> ExitCode {
    env_logger::init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("node: {e}");
            ExitCode::FAILURE
        }
    }
}
