//! Command-line surface: `tsgan datagen|ingest|train|synth|eval|attack`.
//!
//! Every command reads an optional JSON config, applies flag overrides and
//! writes its artifacts plus a `manifest.json` into `--out`.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

pub use commands::{
    cmd_attack, cmd_datagen, cmd_eval, cmd_ingest, cmd_synth, cmd_train, AttackRunConfig, EvalConfig, IngestConfig,
    IngestSummary, ResolvePaths, SynthConfig, TrainRun, TrainRunConfig, EPOCH_CSV_HEADER,
};
pub use manifest::{unix_now, RunManifest, MANIFEST_FILE, VERSION};

use crate::data::SineCorpusConfig;
use crate::error::Error;
use crate::gan::Preset;
use crate::metrics::{EvalProtocol, Pairing};

/// Environment variable holding the worker count for `train --sweep`.
pub const WORKERS_ENV: &str = "TSGAN_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or config.
    Usage(String),
    /// Missing files, malformed data and other runtime errors.
    Runtime(String),
    Diverged(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Runtime(_) => EXIT_RUNTIME,
            Failure::Diverged(_) => EXIT_DIVERGED,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) | Failure::Diverged(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tsgan", version = VERSION, about = "GAN synthesis, scoring and privacy audits for time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file; relative paths inside it are taken from its directory.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/test sine corpora.
    Datagen {
        #[command(flatten)]
        common: Common,
    },
    /// Build ECG corpora from Kachuee CSVs or a raw signal.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CSV")]
        kachuee_train: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        kachuee_test: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        raw: Option<PathBuf>,
        #[arg(long, value_name = "JSON")]
        sidecar: Option<PathBuf>,
    },
    /// Train a preset with per-epoch scoring and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, value_name = "CSV")]
        train: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        test: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Cap on batches per epoch.
        #[arg(long)]
        batches: Option<usize>,
        /// Minibatch-discrimination outputs (0 disables).
        #[arg(long)]
        minibatch: Option<usize>,
        /// Train seeds `seed..seed+N` into `seed-<s>` subdirectories.
        #[arg(long, value_name = "N")]
        sweep: Option<u64>,
    },
    /// Sample series from a checkpoint.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        length: Option<usize>,
    },
    /// Score a synthetic corpus against a real one.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CSV")]
        real: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        synth: Option<PathBuf>,
        /// ECG sampling fractions (0.65 / 0.13).
        #[arg(long)]
        ecg: bool,
        /// Pair DTW rows by index instead of independent subsamples.
        #[arg(long)]
        paired: bool,
    },
    /// Presence-disclosure sweep over an (r, epsilon) grid.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CSV")]
        train: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        test: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        synth: Option<PathBuf>,
        /// ECG grid (r = 1000..10000).
        #[arg(long)]
        ecg: bool,
    },
}

/// Reads a JSON config, or the defaults when no path is given.
pub fn load_config<C: DeserializeOwned + Default + ResolvePaths>(path: Option<&Path>) -> Result<C, Failure> {
    let Some(path) = path else {
        return Ok(C::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg: C =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

fn train_once(cfg: &TrainRunConfig, out: &Path) -> Result<(), Failure> {
    let run = cmd_train(cfg, out)?;
    match run.outcome.failure {
        Some(f) => Err(Failure::Diverged(format!("seed {}: {f}", cfg.seed))),
        None => Ok(()),
    }
}

fn sweep(cfg: &TrainRunConfig, out: &Path, n: u64) -> Result<(), Failure> {
    let seeds: Vec<u64> = (cfg.seed..cfg.seed + n).collect();
    let next = AtomicUsize::new(0);
    let results: Vec<(u64, Result<(), Failure>)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers().min(seeds.len()))
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        let Some(&seed) = seeds.get(i) else { break };
                        let run = TrainRunConfig { seed, ..cfg.clone() };
                        done.push((seed, train_once(&run, &out.join(format!("seed-{seed}")))));
                    }
                    done
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    results
        .into_iter()
        .filter_map(|(_, r)| r.err())
        .max_by_key(Failure::code)
        .map_or(Ok(()), Err)
}

/// Executes a parsed command.
pub fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Datagen { common } => {
            let mut cfg: SineCorpusConfig = load_config(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            cmd_datagen(&cfg, &common.out)?;
        }
        Command::Ingest {
            common,
            kachuee_train,
            kachuee_test,
            raw,
            sidecar,
        } => {
            let mut cfg: IngestConfig = load_config(common.config.as_deref())?;
            cfg.kachuee_train = kachuee_train.or(cfg.kachuee_train);
            cfg.kachuee_test = kachuee_test.or(cfg.kachuee_test);
            cfg.raw_signal = raw.or(cfg.raw_signal);
            cfg.sidecar = sidecar.or(cfg.sidecar);
            let (_, summaries) = cmd_ingest(&cfg, &common.out)?;
            for s in summaries {
                commands::note(&format!(
                    "{}: {} records, {} normal, {} written, {} skipped",
                    s.file, s.records, s.normal, s.written, s.skipped
                ));
            }
        }
        Command::Train {
            common,
            preset,
            train,
            test,
            epochs,
            batches,
            minibatch,
            sweep: n,
        } => {
            let mut cfg: TrainRunConfig = load_config(common.config.as_deref())?;
            if let Some(name) = preset {
                let p = Preset::from_name(&name).ok_or_else(|| {
                    let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                    Failure::Usage(format!("unknown preset `{name}`; expected one of {}", names.join(", ")))
                })?;
                cfg.preset = Some(p);
            }
            cfg.train = train.or(cfg.train);
            cfg.test = test.or(cfg.test);
            cfg.epochs = epochs.or(cfg.epochs);
            cfg.max_batches = batches.or(cfg.max_batches);
            cfg.minibatch_outputs = minibatch.unwrap_or(cfg.minibatch_outputs);
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            match n {
                Some(0) => return Err(Failure::Usage("--sweep must be at least 1".into())),
                Some(n) => sweep(&cfg, &common.out, n)?,
                None => train_once(&cfg, &common.out)?,
            }
        }
        Command::Synth {
            common,
            checkpoint,
            n,
            length,
        } => {
            let mut cfg: SynthConfig = load_config(common.config.as_deref())?;
            cfg.checkpoint = checkpoint.or(cfg.checkpoint);
            cfg.n = n.unwrap_or(cfg.n);
            cfg.length = length.or(cfg.length);
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            cmd_synth(&cfg, &common.out)?;
        }
        Command::Eval {
            common,
            real,
            synth,
            ecg,
            paired,
        } => {
            let mut cfg: EvalConfig = load_config(common.config.as_deref())?;
            cfg.real = real.or(cfg.real);
            cfg.synth = synth.or(cfg.synth);
            if ecg {
                cfg.protocol = EvalProtocol {
                    pairing: cfg.protocol.pairing,
                    ..EvalProtocol::ecg()
                };
            }
            if paired {
                cfg.protocol.pairing = Pairing::Aligned;
            }
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let (_, m) = cmd_eval(&cfg, &common.out)?;
            commands::note(&format!("mmd2 {}  dtw_mean {}", m.mmd2, m.dtw_mean));
        }
        Command::Attack {
            common,
            train,
            test,
            synth,
            ecg,
        } => {
            let mut cfg: AttackRunConfig = load_config(common.config.as_deref())?;
            cfg.train = train.or(cfg.train);
            cfg.test = test.or(cfg.test);
            cfg.synth = synth.or(cfg.synth);
            cfg.ecg |= ecg;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            cmd_attack(&cfg, &common.out)?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            commands::note(&format!("error: {}", f.message()));
            f.code()
        }
    }
}
