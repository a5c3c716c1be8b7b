use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use divmon::config::load_config;
use divmon::events::{write_event_csv, DEFAULT_ERROR_BUDGET};
use divmon::replay::{run_replay, EXIT_CRITICAL};
use divmon::report::{ALERTS_FILE, READINGS_FILE};
use divmon::serve::{serve, ServeOptions};
use divmon::synthetic::{generate, paper_shaped_scenario, ScenarioSpec};

#[derive(Parser)]
#[command(
    name = "divmon",
    version,
    about = "Ground-truth-free drift monitoring for classification models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a CSV event file and write readings, alerts and reports.
    Replay(ReplayArgs),
    /// Write a synthetic event stream as CSV.
    Generate(GenerateArgs),
    /// Run the HTTP ingestion service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Bad CSV rows tolerated before the replay aborts.
    #[arg(long, default_value_t = DEFAULT_ERROR_BUDGET)]
    max_row_errors: usize,
}

#[derive(Args)]
struct GenerateArgs {
    /// Scenario spec (JSON).
    #[arg(
        long,
        conflicts_with = "paper_shaped",
        required_unless_present = "paper_shaped"
    )]
    spec: Option<PathBuf>,
    /// Six windows sized like the case-study cohorts, with a final global shift.
    #[arg(long)]
    paper_shaped: bool,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Restored on start (when compatible) and written on shutdown.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Ignore an existing snapshot.
    #[arg(long)]
    fresh: bool,
    /// Directory for the append-only alert log.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Replay(args) => cmd_replay(args),
        Command::Generate(args) => cmd_generate(args).map(|()| 0),
        Command::Serve(args) => cmd_serve(args).map(|()| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn cmd_replay(args: ReplayArgs) -> anyhow::Result<i32> {
    let config = load_config(&args.config)?;
    let bundle = run_replay(&args.input, config, &args.out, args.max_row_errors)?;
    let alerts = bundle.alerts().count();
    eprintln!(
        "{} windows, {} alerts; wrote {} and {} to {}",
        bundle.window_count(),
        alerts,
        READINGS_FILE,
        ALERTS_FILE,
        args.out.display()
    );
    Ok(if bundle.has_critical() {
        EXIT_CRITICAL
    } else {
        0
    })
}

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<()> {
    let mut spec = if args.paper_shaped {
        paper_shaped_scenario(args.seed.unwrap_or(42))
    } else if let Some(path) = &args.spec {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        ScenarioSpec::from_json(&text)?
    } else {
        bail!("either --spec or --paper-shaped is required");
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let events = generate(&spec)?;
    let file =
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_event_csv(BufWriter::new(file), &events)?;
    eprintln!("wrote {} events to {}", events.len(), args.out.display());
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> anyhow::Result<()> {
    let config = load_config(&args.config)?;
    let alert_log = match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            Some(dir.join(ALERTS_FILE))
        }
        None => None,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(serve(
        config,
        ServeOptions {
            listen: args.listen,
            snapshot: args.snapshot,
            fresh: args.fresh,
            alert_log,
        },
    ))?;
    Ok(())
}
