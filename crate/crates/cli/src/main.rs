use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use boa_cli::commands;
use boa_cli::config::{ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "boa",
    version,
    about = "Frequency-domain resampling pipelines: round-trips, attacks, spectra, alias audits and gradient checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed mixed into the attack RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline depth (number of down/up stages).
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Operator preset: pixel | flc | fp | fp_drop | fp_drop_first | boa | split.
    #[arg(long, global = true)]
    operator: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run images through a sampler sandwich and score the restorations.
    Roundtrip,
    /// PGD-attack the corpus at every budget and tabulate PSNR/SSIM.
    Attack,
    /// Export log-magnitude spectra of every pipeline stage.
    Spectrum,
    /// Sweep above-band probes and tabulate surviving energy per operator.
    AliasAudit,
    /// Verify every registered operator gradient against finite differences.
    Gradcheck,
}

fn run(cli: &Cli) -> Result<()> {
    let overrides = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        depth: cli.depth,
        operator: cli.operator.clone(),
    };
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Roundtrip => commands::cmd_roundtrip(&cfg),
        Command::Attack => commands::cmd_attack(&cfg),
        Command::Spectrum => commands::cmd_spectrum(&cfg),
        Command::AliasAudit => commands::cmd_alias_audit(&cfg),
        Command::Gradcheck => commands::cmd_gradcheck(&cfg),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let pool = match std::env::var("BOA_THREADS") {
        Ok(raw) => {
            let threads: usize = raw
                .parse()
                .with_context(|| format!("BOA_THREADS must be a positive integer, got '{raw}'"))?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .context("building thread pool")?
        }
        Err(_) => rayon::ThreadPoolBuilder::new()
            .build()
            .context("building thread pool")?,
    };
    pool.install(|| run(&cli))
}
