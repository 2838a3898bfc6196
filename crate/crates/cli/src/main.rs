//! `vqmimo`: generate channel datasets, train predictors, and run SNR
//! sweeps, out-of-distribution evaluations and benchmarks.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vqmimo_core::Error;

#[derive(Parser)]
#[command(
    name = "vqmimo",
    version,
    about = "Cross-antenna mMIMO channel prediction with AE, VAE and VQ-VAE models"
)]
#[command(after_help = config::keys_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct Common {
    /// JSON configuration file with flat dotted keys.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a channel dataset.
    #[command(after_help = config::keys_help())]
    Gen {
        /// Channel profile: cdl-a, cdl-b, cdl-c or cdl-d.
        #[arg(long, default_value = "cdl-c")]
        profile: String,
        /// Number of samples [default: gen.samples = 2048].
        #[arg(long)]
        samples: Option<usize>,
        /// Dataset seed [default: seed = 0].
        #[arg(long)]
        seed: Option<u64>,
        /// Output MCHD file.
        #[arg(long)]
        out: PathBuf,
        /// Use the 16-antenna 624 x 140 grid.
        #[arg(long, default_value_t = false)]
        full_scale: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on a dataset.
    #[command(after_help = config::keys_help())]
    Train {
        /// Model kind: ae, vae or vqvae.
        #[arg(long)]
        model: String,
        /// Training MCHD dataset.
        #[arg(long)]
        data: PathBuf,
        /// Output MMDL checkpoint; the loss trace is written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Epochs [default: train.epochs = 30].
        #[arg(long)]
        epochs: Option<usize>,
        /// Learning rate [default: train.lr = 0.001].
        #[arg(long)]
        lr: Option<f64>,
        /// Mini-batch size [default: train.batch_size = 32].
        #[arg(long)]
        batch_size: Option<usize>,
        /// Training seed [default: train.seed = 0].
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// NMSE versus link SNR on a dataset.
    #[command(after_help = config::keys_help())]
    Sweep {
        /// MMDL checkpoint.
        #[arg(long)]
        ckpt: PathBuf,
        /// Test MCHD dataset.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated SNR list in dB, `off` for a noiseless link [default: eval.snr = -10,-5,0,5,10,20,30,off].
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<String>,
        /// Link-noise seed [default: seed = 0].
        #[arg(long)]
        seed: Option<u64>,
        /// Output metrics CSV.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate on fresh test sets of other channel profiles.
    #[command(after_help = config::keys_help())]
    Ood {
        /// MMDL checkpoint.
        #[arg(long)]
        ckpt: PathBuf,
        /// Comma-separated profiles.
        #[arg(long, default_value = "a,b,d")]
        profiles: String,
        /// Samples per profile [default: eval.ood_samples = 200].
        #[arg(long)]
        samples: Option<usize>,
        /// Test-set and link-noise seed [default: seed = 0].
        #[arg(long)]
        seed: Option<u64>,
        /// Output metrics CSV.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Inference latency, training time, parameter count and memory.
    #[command(after_help = config::keys_help())]
    Bench {
        /// One or more MMDL checkpoints.
        #[arg(long, num_args = 1.., required = true)]
        ckpt: Vec<PathBuf>,
        /// Timed iterations [default: bench.iters = 100].
        #[arg(long)]
        iters: Option<usize>,
        /// Output benchmark CSV.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownProfile(_) => 2,
        Error::Io(_) | Error::Format { .. } => 3,
        Error::Diverged { .. }
        | Error::NonFiniteGradient { .. }
        | Error::Degenerate(_)
        | Error::State(_) => 4,
        Error::InvalidShape(_) | Error::Contract(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen {
            profile,
            samples,
            seed,
            out,
            full_scale,
            common,
        } => commands::gen(&common, &profile, samples, seed, &out, full_scale),
        Command::Train {
            model,
            data,
            out,
            epochs,
            lr,
            batch_size,
            seed,
            common,
        } => commands::train(&common, &model, &data, &out, epochs, lr, batch_size, seed),
        Command::Sweep {
            ckpt,
            data,
            snr,
            seed,
            out,
            common,
        } => commands::sweep(&common, &ckpt, &data, snr.as_deref(), seed, &out),
        Command::Ood {
            ckpt,
            profiles,
            samples,
            seed,
            out,
            common,
        } => commands::ood(&common, &ckpt, &profiles, samples, seed, &out),
        Command::Bench {
            ckpt,
            iters,
            out,
            common,
        } => commands::bench(&common, &ckpt, iters, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
