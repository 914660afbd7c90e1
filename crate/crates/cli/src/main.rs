use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use sphconv_cli::commands::{self, Ctx};

#[derive(Parser)]
#[command(name = "sphconv", version, about = "Spherical convolution distilled from planar CNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Plan row kernel shapes and pooling.
    Plan,
    /// Compute exact targets for the training and test frames.
    Oracle,
    /// Analytic first layer plus kernel-wise pretraining.
    Pretrain,
    /// Joint fine-tuning of the pretrained network.
    Finetune,
    /// Compare every method against the exact targets.
    Eval,
    /// Multiply-accumulate counts of every method.
    Cost,
    /// Place perspective object images on the sphere.
    PrepPascal,
    /// Draw row kernels next to the target kernel.
    VizKernels,
    /// Write synthetic equirect frames.
    SynthImages {
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
    },
    /// Write a target network manifest with random weights.
    RandomNet {
        /// toy or vgg16
        #[arg(long, default_value = "toy")]
        kind: String,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Ok(n) = std::env::var("SPHCONV_THREADS") {
        let n: usize = n.parse().context("SPHCONV_THREADS must be a number")?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let seed = cli.seed.unwrap_or(0);
    let cmd = match cli.command {
        Command::SynthImages { count, height } => return commands::cmd_synth_images(&cli.out, count, height, seed),
        Command::RandomNet { kind } => return commands::cmd_random_net(&cli.out, &kind, seed),
        c => c,
    };
    let config = cli.config.context("--config is required for this command")?;
    let ctx = Ctx::new(&config, &cli.out, cli.seed)?;
    match cmd {
        Command::Plan => commands::cmd_plan(&ctx),
        Command::Oracle => commands::cmd_oracle(&ctx),
        Command::Pretrain => commands::cmd_pretrain(&ctx),
        Command::Finetune => commands::cmd_finetune(&ctx),
        Command::Eval => commands::cmd_eval(&ctx),
        Command::Cost => commands::cmd_cost(&ctx),
        Command::PrepPascal => commands::cmd_prep_pascal(&ctx),
        Command::VizKernels => commands::cmd_viz_kernels(&ctx),
        Command::SynthImages { .. } | Command::RandomNet { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
