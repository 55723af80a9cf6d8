//! `biaxial`: train a bi-axial model on MIDI files, sample from it, tune it
//! as a melody policy with theory rewards, and score melodies.
//!
//! Every flag has a key in the JSON run config; a flag given on the command
//! line wins over the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use biaxial_core::biaxial::{generate, silent_seed, train, BiaxialParams, TrainRecord};
use biaxial_core::checkpoint::{Checkpoint, Metadata};
use biaxial_core::config::RunConfig;
use biaxial_core::corpus::load_dir;
use biaxial_core::eval::evaluate;
use biaxial_core::midi::{to_midi, write_midi, MelodySequence};
use biaxial_core::rl::{sample_melody, trace_csv, tune, ActionPolicy, MelodyPolicy};

#[derive(Parser)]
#[command(name = "biaxial", version, about)]
struct Cli {
    /// JSON run config. Missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Main output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a directory of MIDI files. Writes a checkpoint and
    /// `<out>.loss.csv`.
    Train(TrainArgs),
    /// Sample a piano roll from a checkpoint and write it as MIDI.
    Generate(GenerateArgs),
    /// Tune a primed checkpoint. Writes a tuned checkpoint and
    /// `<out>.trace.csv`.
    Tune(TuneArgs),
    /// Sample melodies and write the metric report as CSV, plus the table
    /// as `<out>.txt`.
    Eval(EvalArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    /// Divisor on the theory reward.
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    songs: Option<usize>,
    /// Pick the best action instead of sampling.
    #[arg(long)]
    greedy: bool,
}

/// Writes through a sibling temp file so a failed run never leaves a
/// partial artifact under the final name.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".part");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// `m.ckpt` → `m.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn required(value: &Option<PathBuf>, flag: &str, key: &str) -> Result<PathBuf> {
    value
        .clone()
        .with_context(|| format!("missing --{flag} (or \"{key}\" in the config file)"))
}

/// The config as stored in checkpoints. The output path is left out so the
/// same run written under two names gives identical files.
fn snapshot(cfg: &RunConfig) -> Result<serde_json::Value> {
    let mut c = cfg.clone();
    c.out = None;
    Ok(serde_json::to_value(c)?)
}

fn metadata(cfg: &RunConfig, iterations: usize) -> Result<Metadata> {
    Ok(Metadata {
        kind: String::new(),
        note_low: cfg.note_low,
        n_notes: cfg.n_notes,
        steps_per_measure: cfg.steps_per_measure,
        time_hidden: cfg.time_hidden.clone(),
        note_hidden: cfg.note_hidden.clone(),
        iterations,
        seed: cfg.seed,
        config: snapshot(cfg)?,
    })
}

fn loss_csv(records: &[TrainRecord]) -> String {
    let mut s = String::from("iteration,loss,loglik\n");
    for r in records {
        s.push_str(&format!("{},{},{}\n", r.iteration, r.loss, r.loglik));
    }
    s
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let data = required(&cfg.data_dir, "data", "data_dir")?;
    let out = cfg.out.clone().unwrap_or_else(|| "model.ckpt".into());
    let corpus = load_dir(&data, cfg.note_low, cfg.n_notes, cfg.steps_per_measure)?;
    if corpus.is_empty() {
        bail!("no parseable MIDI files in {}", data.display());
    }
    info!("{} songs from {}", corpus.len(), data.display());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = BiaxialParams::init(&cfg.shape()?, &mut rng)?;
    let (params, records) = if cfg.iterations == 0 {
        (init, Vec::new())
    } else {
        train(&corpus, init, &cfg.train_config(), &mut rng)?
    };
    if let Some(last) = records.last() {
        info!("final loss {:.5}, loglik {:.3}", last.loss, last.loglik);
    }
    let ckpt = Checkpoint::from_params(&params, metadata(cfg, cfg.iterations)?);
    write_atomic(&sibling(&out, "loss.csv"), loss_csv(&records).as_bytes())?;
    write_atomic(&out, &ckpt.to_bytes())?;
    info!("wrote {}", out.display());
    Ok(())
}

fn load_checkpoint(cfg: &RunConfig) -> Result<(PathBuf, Checkpoint)> {
    let path = required(&cfg.checkpoint, "ckpt", "checkpoint")?;
    let ckpt = Checkpoint::load(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok((path, ckpt))
}

fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let (_, ckpt) = load_checkpoint(cfg)?;
    let out = cfg.out.clone().unwrap_or_else(|| "sample.mid".into());
    let params = ckpt.params()?;
    let m = &ckpt.metadata;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seed = silent_seed(m.note_low, m.n_notes, m.steps_per_measure);
    let roll = generate(&params, &seed, cfg.generate_steps, &mut rng)?;
    let song = to_midi(&roll, cfg.tempo_bpm)?;
    write_atomic(&out, &write_midi(&song))?;
    info!("wrote {} ({} steps, {} notes)", out.display(), roll.n_steps(), song.note_event_count() / 2);
    Ok(())
}

fn cmd_tune(cfg: &RunConfig) -> Result<()> {
    let (path, ckpt) = load_checkpoint(cfg)?;
    if ckpt.metadata.kind != "primed" {
        bail!("{} is a {} checkpoint; tuning starts from a primed one", path.display(), ckpt.metadata.kind);
    }
    let out = cfg.out.clone().unwrap_or_else(|| "tuned.ckpt".into());
    let net = ckpt.melody_net()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (q, trace) = tune(&net, &cfg.tune_config(), &mut rng)?;
    let mut meta = ckpt.metadata.clone();
    meta.iterations = cfg.rl_iterations;
    meta.seed = cfg.seed;
    meta.config = snapshot(cfg)?;
    write_atomic(&sibling(&out, "trace.csv"), trace_csv(&trace).as_bytes())?;
    write_atomic(&out, &Checkpoint::from_q(&q, meta).to_bytes())?;
    info!("wrote {}", out.display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let (_, ckpt) = load_checkpoint(cfg)?;
    let out = cfg.out.clone().unwrap_or_else(|| "eval.csv".into());
    let theory = cfg.theory_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net;
    let q;
    let policy = if ckpt.metadata.kind == "tuned" {
        q = ckpt.melody_q()?;
        let choice = if cfg.eval_greedy {
            ActionPolicy::Greedy
        } else {
            ActionPolicy::Boltzmann(cfg.sample_temperature)
        };
        MelodyPolicy::Tuned(&q, choice)
    } else {
        net = ckpt.melody_net()?;
        MelodyPolicy::Primed(&net)
    };
    let melodies = (0..cfg.eval_songs)
        .map(|_| sample_melody(&policy, theory.episode_len, &mut rng))
        .collect::<Result<Vec<MelodySequence>, _>>()?;
    let report = evaluate(&melodies, &theory)?;
    let table = report.to_table();
    write_atomic(&sibling(&out, "txt"), table.as_bytes())?;
    write_atomic(&out, report.to_csv().as_bytes())?;
    print!("{table}");
    Ok(())
}

/// File config with the command-line flags laid over it.
fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    match &cli.command {
        Command::Train(a) => {
            if a.data.is_some() {
                cfg.data_dir = a.data.clone();
            }
            if let Some(n) = a.iters {
                cfg.iterations = n;
            }
        }
        Command::Generate(a) => {
            if a.ckpt.is_some() {
                cfg.checkpoint = a.ckpt.clone();
            }
            if let Some(n) = a.steps {
                cfg.generate_steps = n;
            }
        }
        Command::Tune(a) => {
            if a.ckpt.is_some() {
                cfg.checkpoint = a.ckpt.clone();
            }
            if let Some(n) = a.iters {
                cfg.rl_iterations = n;
            }
            if let Some(c) = a.c {
                cfg.c = c;
            }
        }
        Command::Eval(a) => {
            if a.ckpt.is_some() {
                cfg.checkpoint = a.ckpt.clone();
            }
            if let Some(n) = a.songs {
                cfg.eval_songs = n;
            }
            cfg.eval_greedy |= a.greedy;
        }
    }
    cfg.validate()?;
    if matches!(cli.command, Command::Eval(_)) && cfg.eval_songs == 0 {
        bail!("--songs must be positive");
    }
    Ok(cfg)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|cfg| match cli.command {
        Command::Train(_) => cmd_train(&cfg),
        Command::Generate(_) => cmd_generate(&cfg),
        Command::Tune(_) => cmd_tune(&cfg),
        Command::Eval(_) => cmd_eval(&cfg),
    });
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
