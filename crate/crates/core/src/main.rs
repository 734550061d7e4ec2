use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use fsvae::cli::{self, DataSplit, EvalKind, Factor};
use fsvae::eval::EvalConfig;
use fsvae::kv::KvMap;
use fsvae::verify::{McOptions, VerifyOptions};

#[derive(Parser)]
#[command(name = "fsvae", version, about = "Factored static/temporal sequence VAE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// factored | slow | vae
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    /// paper | desk
    #[arg(long)]
    preset: Option<String>,
    /// Extra config override, repeatable (e.g. --set prior.f_s=3)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<fsvae::trainer::TrainConfig> {
        let mut over = KvMap::new();
        for s in &self.set {
            let (k, v) = s.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {s:?}"))?;
            over.insert(k.trim().to_string(), v.trim().to_string());
        }
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("variant", self.variant.clone()),
            ("beta", self.beta.map(|v| v.to_string())),
            ("preset", self.preset.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                over.insert(k.into(), v);
            }
        }
        Ok(cli::resolve_config(self.config.as_deref(), &over)?)
    }
}

#[derive(Args)]
struct CheckpointArgs {
    /// Trained checkpoint (.fsvae)
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate video shards
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 64)]
        videos: usize,
        #[arg(long, default_value_t = 64)]
        per_shard: usize,
        /// train | eval
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Train a model
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Run the numerical self-checks
    Verify {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fewer Monte-Carlo posteriors and samples
        #[arg(long)]
        quick: bool,
    },
    /// Disentanglement score of a checkpoint
    EvalDscore {
        #[command(flatten)]
        ck: CheckpointArgs,
        #[arg(long, default_value_t = 200)]
        videos: usize,
    },
    /// Static-label transfer accuracy of a checkpoint
    EvalTransfer {
        #[command(flatten)]
        ck: CheckpointArgs,
        #[arg(long, default_value_t = 200)]
        videos: usize,
    },
    /// Swap static and temporal factors of two videos
    Swap {
        #[command(flatten)]
        ck: CheckpointArgs,
    },
    /// Interpolate one factor between two videos
    Interpolate {
        #[command(flatten)]
        ck: CheckpointArgs,
        #[arg(long, default_value_t = 8)]
        steps: usize,
        /// static | temporal
        #[arg(long, default_value = "static")]
        factor: String,
    },
    /// Export sampled per-frame latents as CSV
    PlotLatents {
        #[command(flatten)]
        ck: CheckpointArgs,
        #[arg(long, default_value_t = 10)]
        videos: usize,
    },
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("FSVAE_THREADS") {
        let n: usize = v.parse().with_context(|| format!("FSVAE_THREADS={v}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(cli: Cli) -> Result<bool> {
    init_threads()?;
    match cli.command {
        Command::GenData { cfg, videos, per_shard, split } => {
            let c = cfg.resolve()?;
            let split: DataSplit = split.parse()?;
            print_paths(&cli::gen_data(&c, split, videos, per_shard, &cfg.out)?);
        }
        Command::Train { cfg, iterations, batch } => {
            let mut c = cfg.resolve()?;
            if let Some(i) = iterations {
                c.iterations = i;
            }
            if let Some(b) = batch {
                c.batch_videos = b;
            }
            c.validate()?;
            print_paths(&cli::train(&c, &cfg.out)?);
        }
        Command::Verify { out, seed, quick } => {
            let mut opts = VerifyOptions { seed, ..VerifyOptions::default() };
            if quick {
                opts.mc = McOptions { posteriors: 10, samples: 20_000, seed, ..McOptions::default() };
            }
            let report = cli::verify(&opts, out.as_deref())?;
            print!("{}", report.render());
            return Ok(report.passed());
        }
        Command::EvalDscore { ck, videos } => {
            let ec = EvalConfig { videos, seed: ck.seed, ..EvalConfig::default() };
            let (e, paths) = cli::evaluate(&ck.checkpoint, &ec, EvalKind::DScore, &ck.out)?;
            println!("dscore {} (accuracies {:?})", e.dscore.score, e.dscore.accuracies);
            print_paths(&paths);
        }
        Command::EvalTransfer { ck, videos } => {
            let ec = EvalConfig { videos, seed: ck.seed, ..EvalConfig::default() };
            let (e, paths) = cli::evaluate(&ck.checkpoint, &ec, EvalKind::Transfer, &ck.out)?;
            println!("transfer {} (majority baseline {})", e.transfer, e.transfer_baseline);
            print_paths(&paths);
        }
        Command::Swap { ck } => print_paths(&cli::swap(&ck.checkpoint, ck.seed, &ck.out)?),
        Command::Interpolate { ck, steps, factor } => {
            let f: Factor = factor.parse()?;
            print_paths(&cli::interpolate(&ck.checkpoint, ck.seed, steps, f, &ck.out)?);
        }
        Command::PlotLatents { ck, videos } => print_paths(&cli::plot_latents(&ck.checkpoint, videos, ck.seed, &ck.out)?),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
