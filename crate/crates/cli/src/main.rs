//! startdet: reproducible batch commands for the detection pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use startdet_cli::commands;
use startdet_cli::config::PipelineConfig;

#[derive(Parser)]
#[command(name = "startdet", version)]
#[command(about = "Starting-motion detection from silhouette scenes", long_about = None)]
struct Cli {
    /// Pipeline configuration (JSON); built-in defaults when omitted
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for scene-parallel work (0 = one per core)
    #[arg(short, long, global = true, default_value_t = 0, value_name = "N")]
    jobs: usize,

    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate a synthetic dataset with train/val/test splits
    Synth {
        /// Dataset output directory
        #[arg(short, long)]
        out: PathBuf,
        /// Override the number of scenes
        #[arg(long)]
        scenes: Option<usize>,
        /// Override the master seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write motion history images for every scene
    Mhi {
        /// Dataset directory written by `synth`
        #[arg(short, long)]
        dataset: PathBuf,
        /// Output directory
        #[arg(short, long)]
        out: PathBuf,
        /// Also export each image as an 8-bit PNG
        #[arg(long)]
        png: bool,
        /// Override the history depth N
        #[arg(long)]
        depth: Option<u32>,
        /// Restrict to one split (train, val or test)
        #[arg(long)]
        split: Option<String>,
    },
    /// Extract labelled descriptor samples per split
    Features {
        #[arg(short, long)]
        dataset: PathBuf,
        /// Output directory for the per-split sample files
        #[arg(short, long)]
        out: PathBuf,
        /// Keep every k-th training frame
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Train the linear detector and calibrate it on the validation split
    TrainSvm {
        /// Sample directory written by `features`
        #[arg(short, long)]
        features: PathBuf,
        /// Output model file (JSON)
        #[arg(short, long)]
        out: PathBuf,
        /// Override the misclassification cost C
        #[arg(long)]
        c: Option<f64>,
    },
    /// Grid-search descriptor geometry and C on the validation split
    SweepMchog {
        #[arg(short, long)]
        dataset: PathBuf,
        /// Output CSV table, best row first
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train the network detector, keeping the best validation checkpoint
    TrainResnet {
        #[arg(short, long)]
        dataset: PathBuf,
        /// Output directory for checkpoint, training log and config echo
        #[arg(short, long)]
        out: PathBuf,
        /// Override the iteration count
        #[arg(long)]
        iterations: Option<usize>,
        /// Override the training seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep detection thresholds for a trained model over one split
    Evaluate {
        #[arg(short, long)]
        dataset: PathBuf,
        /// Model file: .json (linear) or .ckpt (network)
        #[arg(short, long)]
        model: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Output curve CSV
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write one scene's per-frame probability trace as CSV
    Trace {
        #[arg(short, long)]
        dataset: PathBuf,
        /// Model file: .json (linear) or .ckpt (network)
        #[arg(short, long)]
        model: PathBuf,
        /// Scene directory relative to the dataset root, e.g. test/scene_000
        #[arg(long)]
        scene: String,
        /// Output trace CSV
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };

    match cli.command {
        Commands::Synth { out, scenes, seed } => {
            if let Some(n) = scenes {
                config.dataset.n_scenes = n;
            }
            if let Some(s) = seed {
                config.dataset.seed = s;
            }
            config.validate()?;
            commands::cmd_synth(&config, &out)
        }
        Commands::Mhi {
            dataset,
            out,
            png,
            depth,
            split,
        } => {
            if let Some(n) = depth {
                config.mhi.depth = n;
            }
            config.validate()?;
            commands::cmd_mhi(&config, &dataset, &out, png, split.as_deref())
        }
        Commands::Features {
            dataset,
            out,
            stride,
        } => {
            if let Some(k) = stride {
                config.eval.frame_stride = k;
            }
            config.validate()?;
            commands::cmd_features(&config, &dataset, &out)
        }
        Commands::TrainSvm { features, out, c } => {
            if let Some(c) = c {
                config.svm.c = c;
            }
            config.validate()?;
            commands::cmd_train_svm(&config, &features, &out)
        }
        Commands::SweepMchog { dataset, out } => {
            config.validate()?;
            commands::cmd_sweep_mchog(&config, &dataset, &out)
        }
        Commands::TrainResnet {
            dataset,
            out,
            iterations,
            seed,
        } => {
            if let Some(n) = iterations {
                config.train.iterations = n;
            }
            if let Some(s) = seed {
                config.train.seed = s;
            }
            config.validate()?;
            commands::cmd_train_resnet(&config, &dataset, &out)
        }
        Commands::Evaluate {
            dataset,
            model,
            split,
            out,
        } => {
            config.validate()?;
            commands::cmd_evaluate(&config, &dataset, &model, &split, &out)
        }
        Commands::Trace {
            dataset,
            model,
            scene,
            out,
        } => {
            config.validate()?;
            commands::cmd_trace(&config, &dataset, &model, &scene, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
