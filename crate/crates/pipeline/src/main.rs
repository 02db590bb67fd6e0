use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coopclass_pipeline::{run_ablation, run_pipeline, Knob, PipelineConfig, PipelineError, Result, RunOptions, Stage};
use coopclass_service::{load_deployment, serve, AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "coopclass", version, about = "Train, onboard and evaluate cooperative classifiers")]
struct Cli {
    /// Pipeline config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or load the annotated dataset.
    Simulate,
    /// Estimate consensus labels.
    Consensus,
    /// Discover annotator profiles.
    Profiles,
    /// Estimate profile matrices and draw augmented labels.
    Augment,
    /// Train the base and per-profile models.
    Train,
    /// Profile and screen the test users.
    Onboard,
    /// Cooperate on the test stream and write reports.
    Evaluate,
    /// Every stage plus the serving bundle.
    Run,
    /// Sweep one knob: components, G, K, lambda, svm_error, noise_rate or assignment.
    Ablate { knob: String },
    /// Serve the session API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Serving bundle; without it every session route answers 503.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long, default_value = "sessions")]
        export_dir: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_until(cfg: &PipelineConfig, until: Option<Stage>, write_bundle: bool) -> Result<()> {
    let opts = RunOptions {
        out: cfg.out.clone(),
        cache: None,
        until,
        write_bundle,
    };
    let outcome = run_pipeline(cfg, &opts)?;
    outcome.manifest.verify(&cfg.out)?;
    println!(
        "{} stages run, {} from cache; outputs in {}",
        outcome.executed.len(),
        outcome.cached.len(),
        cfg.out.display()
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    if let Command::Serve { addr, bundle, export_dir } = &cli.command {
        let deployment = bundle.as_ref().map(load_deployment).transpose().map_err(|e| PipelineError::Service(e.to_string()))?;
        let seed = cli.seed.unwrap_or(0);
        let state = AppState::new(deployment, ServiceConfig { export_dir: Some(export_dir.clone()), seed });
        let runtime = tokio::runtime::Runtime::new()?;
        return runtime.block_on(serve(*addr, state)).map_err(|e| PipelineError::Service(e.to_string()));
    }
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simulate => run_until(&cfg, Some(Stage::Data), false),
        Command::Consensus => run_until(&cfg, Some(Stage::Consensus), false),
        Command::Profiles => run_until(&cfg, Some(Stage::Profiles), false),
        Command::Augment => run_until(&cfg, Some(Stage::Augment), false),
        Command::Train => run_until(&cfg, Some(Stage::Models), false),
        Command::Onboard => run_until(&cfg, Some(Stage::Onboard), false),
        Command::Evaluate => run_until(&cfg, None, false),
        Command::Run => run_until(&cfg, None, true),
        Command::Ablate { knob } => {
            let knob: Knob = knob.parse()?;
            let rows = run_ablation(&cfg, knob, &cfg.out)?;
            println!("{} settings written to {}", rows.len(), cfg.out.join("ablations").display());
            Ok(())
        }
        Command::Serve { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
