use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zsdn::commands;
use zsdn::experiment::{AblationAxis, Runner};
use zsdn::{AppResult, ExperimentConfig};
use zsdn_core::{NoiseParams, Strategy, Upsampling};

/// Zero-shot image denoising with random sub-sampling and a super-resolving
/// network.
#[derive(Parser, Debug)]
#[command(name = "zsdn", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (JSON); defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; re-derives every component seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Poisson gain a.
    #[arg(long, global = true)]
    a: Option<f64>,
    /// Gaussian read-noise standard deviation b.
    #[arg(long, global = true)]
    b: Option<f64>,
    /// Sub-sampling stride s (adapts patch size and feature channels).
    #[arg(long, global = true)]
    stride: Option<usize>,
    /// Number of sub-sampling draws averaged at inference.
    #[arg(long, global = true)]
    m: Option<usize>,
    #[arg(long, global = true, value_parser = parse_upsampling)]
    upsampling: Option<Upsampling>,
    #[arg(long, global = true, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    data_range: Option<f64>,
    /// Ground-truth image (.f32 or .png).
    #[arg(long, global = true)]
    clean: Option<PathBuf>,
    /// Noisy input image (.f32 or .png).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Progress line every N epochs on stderr (0: silent).
    #[arg(long, global = true, default_value_t = 25)]
    progress: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a clean phantom, noisy copies at every noise level and an SNR table.
    Simulate,
    /// Train on one noisy image; writes a checkpoint and an epoch log.
    Train,
    /// Denoise with a checkpoint; writes the estimate and, with ground truth, a report.
    Denoise,
    /// Compare two images.
    Eval {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Run an ablation sweep and write its results table.
    Ablate {
        #[arg(long, value_enum)]
        axis: AblationAxis,
    },
}

fn parse_upsampling(s: &str) -> Result<Upsampling, String> {
    Upsampling::ALL
        .into_iter()
        .find(|u| u.name() == s)
        .ok_or_else(|| format!("expected pixel_shuffle, transposed_conv or bilinear, got {s}"))
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    match s {
        "random" => Ok(Strategy::Random),
        "fixed" => Ok(Strategy::Fixed),
        _ => Err(format!("expected random or fixed, got {s}")),
    }
}

fn resolve(c: &Common) -> AppResult<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.apply_seed(seed);
    }
    if let Some(u) = c.upsampling {
        cfg.set_upsampling(u);
    }
    if let Some(s) = c.stride {
        cfg.set_stride(s);
    }
    if let Some(st) = c.strategy {
        cfg.set_strategy(st);
    }
    if c.a.is_some() || c.b.is_some() {
        cfg.noise = NoiseParams::new(c.a.unwrap_or(cfg.noise.a), c.b.unwrap_or(cfg.noise.b))?;
    }
    if let Some(m) = c.m {
        cfg.mmse.draws = m;
    }
    if let Some(e) = c.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = c.lr {
        cfg.train.lr = lr;
    }
    if let Some(r) = c.data_range {
        cfg.data_range = r;
    }
    if let Some(p) = &c.clean {
        cfg.paths.clean = Some(p.clone());
    }
    if let Some(p) = &c.input {
        cfg.paths.input = Some(p.clone());
    }
    if let Some(p) = &c.checkpoint {
        cfg.paths.checkpoint = Some(p.clone());
    }
    if let Some(p) = &c.out {
        cfg.paths.out = p.clone();
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serializable output"));
}

fn run(cli: Cli) -> AppResult<()> {
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Simulate => {
            for r in commands::simulate(&cfg)? {
                print_json(&r);
            }
        }
        Command::Train => {
            let path = commands::train(&cfg, cli.common.progress)?;
            println!("{}", path.display());
        }
        Command::Denoise => {
            let outcome = commands::denoise(&cfg)?;
            if let Some(r) = outcome.report {
                print_json(&r);
            }
        }
        Command::Eval { reference, test } => print_json(&commands::eval(&cfg, &reference, &test)?),
        Command::Ablate { axis } => {
            let mut runner = Runner::new(cli.common.progress);
            commands::ablate(&cfg, axis, &mut runner, &mut |row| print_json(row))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

