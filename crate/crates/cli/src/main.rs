mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Exit;
use crate::config::{Preset, RunConfig};

#[derive(Parser)]
#[command(name = "samplernn", version, about = "Two-tier SampleRNN: chunk a corpus, train, generate and diagnose")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every command, applied in order: preset, file, `--set`, then the command's flags.
#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// Base configuration.
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    preset: Preset,
    /// `key = value` file with model.*, train.*, gen.* and paths.* keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Cut every WAV in a directory into chunks and split them into train/test/validation.
    Chunk {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        chunk_seconds: Option<f64>,
        /// Split shuffle seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reassign the splits of an existing manifest.
    Split {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Where to write the new manifest; defaults to overwriting the input.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train with truncated BPTT, writing checkpoints and a metrics log.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Continue from a checkpoint; its model and training settings take over,
        /// except `--iterations`.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        hidden_dim: Option<usize>,
        #[arg(long)]
        embed_size: Option<usize>,
        #[arg(long)]
        frame_size: Option<usize>,
        /// lstm or gru.
        #[arg(long)]
        cell: Option<String>,
        /// learned or randomized.
        #[arg(long)]
        h0_mode: Option<String>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        tbptt_len: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        checkpoint_every: Option<u64>,
        #[arg(long)]
        validate_every: Option<u64>,
        /// Seeds both the initialization and the batch order.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate clips from one checkpoint or from every checkpoint in a directory.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        n_seq: Option<usize>,
        #[arg(long)]
        seconds: Option<f64>,
        #[arg(long)]
        temperature: Option<f64>,
        /// Take the most likely code instead of sampling.
        #[arg(long)]
        argmax: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Spectral flatness and loop-trap report for WAV files (directories are searched for *.wav).
    Diagnose {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Finite-difference gradient check of every layer.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn flag<T: ToString>(key: &'static str, v: &Option<T>) -> Option<(&'static str, String)> {
    v.as_ref().map(|v| (key, v.to_string()))
}

fn flag_path(key: &'static str, v: &Option<PathBuf>) -> Option<(&'static str, String)> {
    v.as_ref().map(|v| (key, v.display().to_string()))
}

fn build(args: &ConfigArgs, flags: Vec<Option<(&'static str, String)>>) -> Result<RunConfig, Exit> {
    let mut cfg = RunConfig::preset(args.preset);
    if let Some(path) = &args.config {
        cfg.apply_file(path).map_err(Exit::Input)?;
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Exit::Input(anyhow::anyhow!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim()).map_err(Exit::Input)?;
    }
    for (k, v) in flags.into_iter().flatten() {
        cfg.set(k, &v).map_err(Exit::Input)?;
    }
    cfg.validate().map_err(Exit::Input)?;
    Ok(cfg)
}

/// Builds the configuration, or prints it when `--print-config` is given.
fn configure(args: &ConfigArgs, flags: Vec<Option<(&'static str, String)>>) -> Result<Option<RunConfig>, Exit> {
    let cfg = build(args, flags)?;
    if args.print_config {
        print!("{}", cfg.echo());
        return Ok(None);
    }
    Ok(Some(cfg))
}

fn run(cli: Cli) -> Result<(), Exit> {
    match cli.command {
        Command::Chunk {
            cfg,
            corpus_dir,
            manifest,
            chunk_seconds,
            seed,
        } => {
            let Some(cfg) = configure(
                &cfg,
                vec![
                    flag_path("paths.corpus_dir", &corpus_dir),
                    flag_path("paths.manifest", &manifest),
                    flag("train.chunk_seconds", &chunk_seconds),
                    flag("train.split_seed", &seed),
                ],
            )?
            else {
                return Ok(());
            };
            commands::chunk(&cfg)
        }
        Command::Split {
            cfg,
            manifest,
            out,
            seed,
        } => {
            let Some(cfg) = configure(
                &cfg,
                vec![flag_path("paths.manifest", &manifest), flag("train.split_seed", &seed)],
            )?
            else {
                return Ok(());
            };
            commands::split(&cfg, out.as_deref())
        }
        Command::Train {
            cfg,
            manifest,
            checkpoint_dir,
            metrics,
            resume,
            layers,
            hidden_dim,
            embed_size,
            frame_size,
            cell,
            h0_mode,
            batch_size,
            tbptt_len,
            lr,
            iterations,
            checkpoint_every,
            validate_every,
            seed,
        } => {
            let Some(cfg) = configure(
                &cfg,
                vec![
                    flag_path("paths.manifest", &manifest),
                    flag_path("paths.checkpoint_dir", &checkpoint_dir),
                    flag_path("paths.metrics", &metrics),
                    flag("model.n_layers", &layers),
                    flag("model.hidden_dim", &hidden_dim),
                    flag("model.embed_size", &embed_size),
                    flag("model.frame_size", &frame_size),
                    flag("model.cell", &cell),
                    flag("model.h0_mode", &h0_mode),
                    flag("train.batch_size", &batch_size),
                    flag("train.tbptt_len", &tbptt_len),
                    flag("train.lr", &lr),
                    flag("train.max_iterations", &iterations),
                    flag("train.checkpoint_every", &checkpoint_every),
                    flag("train.validate_every", &validate_every),
                    flag("train.seed", &seed),
                    flag("model.seed", &seed),
                ],
            )?
            else {
                return Ok(());
            };
            commands::train(cfg, resume.as_deref(), iterations)
        }
        Command::Generate {
            cfg,
            ckpt,
            checkpoint_dir,
            out_dir,
            n_seq,
            seconds,
            temperature,
            argmax,
            seed,
        } => {
            let Some(cfg) = configure(
                &cfg,
                vec![
                    flag_path("paths.checkpoint_dir", &checkpoint_dir),
                    flag_path("paths.output_dir", &out_dir),
                    flag("gen.n_seq", &n_seq),
                    flag("gen.clip_seconds", &seconds),
                    flag("gen.temperature", &temperature),
                    argmax.then(|| ("gen.mode", "argmax".to_string())),
                    flag("gen.seed", &seed),
                ],
            )?
            else {
                return Ok(());
            };
            commands::generate(&cfg, ckpt.as_deref())
        }
        Command::Diagnose { cfg, inputs } => {
            let Some(cfg) = configure(&cfg, vec![])? else {
                return Ok(());
            };
            commands::diagnose(&cfg, &inputs)
        }
        Command::Gradcheck {
            tolerance,
            seed,
            inject_fault,
        } => commands::gradcheck(tolerance, seed, inject_fault),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error());
            ExitCode::from(e.code())
        }
    }
}
