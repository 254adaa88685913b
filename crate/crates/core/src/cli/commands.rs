use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::RunManifest;
use crate::data::{
    format_value, generate_sine_corpus, load_ecg_csv, preprocess_raw_windows, read_series_csv, two_peak_corpus,
    RawSignalConfig, SeriesBatch, SineCorpusConfig, TwoPeakConfig, NORMAL_LABEL,
};
use crate::error::{Error, Result};
use crate::gan::{shape_report, synthesize, train, Checkpoint, EpochEval, Gan, Preset, TrainConfig, TrainOutcome};
use crate::metrics::{evaluate_epoch, EvalProtocol, MetricsRecord, Pairing};
use crate::privacy::{presence_disclosure, AttackConfig, AttackReport, DEFAULT_MAX_PAIRS};

pub const EPOCH_CSV_HEADER: &str = "epoch,g_loss,d_loss,mmd2,dtw_mean,checkpoint_id";

const TRAIN_EVAL_STREAM: u64 = 4;
const SYNTH_STREAM: u64 = 5;
const EVAL_STREAM: u64 = 6;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn required<'a>(field: &str, p: &'a Option<PathBuf>) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| Error::config(field, "is required"))
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

/// Joins relative input paths onto the directory of the config file.
pub trait ResolvePaths {
    fn resolve_paths(&mut self, base: &Path);
}

impl ResolvePaths for SineCorpusConfig {
    fn resolve_paths(&mut self, _: &Path) {}
}

/// Two train/test corpora of random sine waves.
pub fn cmd_datagen(cfg: &SineCorpusConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    create_dir(out)?;
    let mut manifest = RunManifest::new("datagen", cfg.seed, cfg)?;
    let (train, test) = generate_sine_corpus(cfg)?;
    train.write_csv(&out.join("train.csv"), NORMAL_LABEL)?;
    test.write_csv(&out.join("test.csv"), NORMAL_LABEL)?;
    manifest.outputs = vec!["train.csv".into(), "test.csv".into()];
    manifest.write(out, "ok")?;
    Ok(manifest)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Kachuee-format training split (187 samples and a label per row).
    pub kachuee_train: Option<PathBuf>,
    pub kachuee_test: Option<PathBuf>,
    /// Single-column raw sample stream.
    pub raw_signal: Option<PathBuf>,
    /// JSON with `source_hz` and `gain`; defaults to the signal path with a
    /// `.json` extension.
    pub sidecar: Option<PathBuf>,
    pub two_peak: TwoPeakConfig,
}

impl ResolvePaths for IngestConfig {
    fn resolve_paths(&mut self, base: &Path) {
        rebase(base, &mut self.kachuee_train);
        rebase(base, &mut self.kachuee_test);
        rebase(base, &mut self.raw_signal);
        rebase(base, &mut self.sidecar);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub file: String,
    pub records: usize,
    pub normal: usize,
    pub written: usize,
    pub skipped: usize,
}

fn read_raw_signal(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.split_whitespace()
        .enumerate()
        .map(|(i, tok)| {
            tok.parse::<f64>().map_err(|_| Error::Parse {
                path: path.into(),
                row: i + 1,
                msg: format!("`{tok}` is not a number"),
            })
        })
        .collect()
}

/// ECG ingestion: Kachuee CSVs become two-peak corpora, a raw signal becomes
/// one row per beat.
pub fn cmd_ingest(cfg: &IngestConfig, out: &Path) -> Result<(RunManifest, Vec<IngestSummary>)> {
    let kachuee = cfg.kachuee_train.is_some() || cfg.kachuee_test.is_some();
    if kachuee == cfg.raw_signal.is_some() {
        return Err(Error::config(
            "ingest",
            "set either kachuee_train/kachuee_test or raw_signal, not both or neither",
        ));
    }
    if cfg.two_peak.target_length < 3 {
        return Err(Error::config("two_peak.target_length", "must be at least 3"));
    }
    create_dir(out)?;
    let mut manifest = RunManifest::new("ingest", 0, cfg)?;
    let mut summaries = Vec::new();
    if kachuee {
        for (name, path) in [("train.csv", &cfg.kachuee_train), ("test.csv", &cfg.kachuee_test)] {
            let Some(path) = path else { continue };
            let records = load_ecg_csv(path)?;
            let normal = records.iter().filter(|r| r.label == NORMAL_LABEL).count();
            let (batch, skipped) = two_peak_corpus(&records, &cfg.two_peak);
            batch.write_csv(&out.join(name), NORMAL_LABEL)?;
            manifest.inputs.push(path.clone());
            manifest.outputs.push(name.into());
            summaries.push(IngestSummary {
                file: name.into(),
                records: records.len(),
                normal,
                written: batch.len(),
                skipped,
            });
        }
    } else {
        let path = required("raw_signal", &cfg.raw_signal)?;
        let sidecar = cfg.sidecar.clone().unwrap_or_else(|| path.with_extension("json"));
        let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let raw: RawSignalConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config("sidecar", format!("{}: {e}", sidecar.display())))?;
        let signal = read_raw_signal(path)?;
        let windows = preprocess_raw_windows(&signal, &raw)?;
        let mut beats = SeriesBatch::empty(crate::data::ECG_LENGTH);
        for w in &windows {
            for b in &w.beats {
                beats.push(b)?;
            }
        }
        beats.write_csv(&out.join("beats.csv"), NORMAL_LABEL)?;
        manifest.inputs.extend([path.clone(), sidecar]);
        manifest.outputs.push("beats.csv".into());
        summaries.push(IngestSummary {
            file: "beats.csv".into(),
            records: windows.len(),
            normal: windows.len(),
            written: beats.len(),
            skipped: 0,
        });
    }
    let text = serde_json::to_string_pretty(&summaries)? + "\n";
    write_text(&out.join("ingest.json"), &text)?;
    manifest.outputs.push("ingest.json".into());
    manifest.write(out, "ok")?;
    Ok((manifest, summaries))
}

/// Training run. Unset schedule fields fall back to the preset's regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub preset: Option<Preset>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Minibatch-discrimination outputs; 0 disables the layer.
    pub minibatch_outputs: usize,
    pub hidden: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub d_steps: Option<usize>,
    pub max_batches: Option<usize>,
    pub eval: Option<EvalProtocol>,
    /// Synthetic rows scored each epoch; defaults to the test-set size.
    pub eval_samples: Option<usize>,
    /// Keep a checkpoint every this many epochs; the last one is always kept.
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            preset: None,
            train: None,
            test: None,
            minibatch_outputs: 0,
            hidden: None,
            epochs: None,
            batch_size: None,
            learning_rate: None,
            d_steps: None,
            max_batches: None,
            eval: None,
            eval_samples: None,
            checkpoint_every: 1,
            seed: 0,
        }
    }
}

impl ResolvePaths for TrainRunConfig {
    fn resolve_paths(&mut self, base: &Path) {
        rebase(base, &mut self.train);
        rebase(base, &mut self.test);
    }
}

impl TrainRunConfig {
    pub fn preset(&self) -> Result<Preset> {
        self.preset.ok_or_else(|| Error::config("preset", "is required"))
    }

    /// The schedule after applying overrides to the preset defaults.
    pub fn schedule(&self) -> Result<TrainConfig> {
        let p = self.preset()?;
        let base = if p.is_ecg() { TrainConfig::ecg(self.seed) } else { TrainConfig::sine(self.seed) };
        let cfg = TrainConfig {
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            d_steps: self.d_steps.unwrap_or(base.d_steps),
            max_batches: self.max_batches.or(base.max_batches),
            ..base
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn protocol(&self) -> Result<EvalProtocol> {
        let p = self.preset()?;
        let proto = self
            .eval
            .clone()
            .unwrap_or_else(|| if p.is_ecg() { EvalProtocol::ecg() } else { EvalProtocol::sine() });
        proto.validate()?;
        Ok(proto)
    }

    pub fn gan(&self) -> Result<Gan> {
        let mut spec = self.preset()?.spec(self.minibatch_outputs);
        if let Some(h) = self.hidden {
            spec.generator.hidden = h;
            spec.discriminator.hidden = h;
        }
        Gan::new(spec, self.seed)
    }
}

#[derive(Clone, Debug, Serialize)]
struct TrainEcho<'a> {
    run: &'a TrainRunConfig,
    schedule: &'a TrainConfig,
    protocol: &'a EvalProtocol,
}

#[derive(Debug)]
pub struct TrainRun {
    pub manifest: RunManifest,
    pub outcome: TrainOutcome,
    pub gan: Gan,
}

fn epoch_csv(outcome: &TrainOutcome) -> String {
    let mut s = String::from(EPOCH_CSV_HEADER);
    s.push('\n');
    for r in &outcome.reports {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch,
            format_value(r.g_loss),
            format_value(r.d_loss),
            format_value(r.mmd2),
            format_value(r.dtw_mean),
            r.checkpoint_id
        ));
    }
    s
}

/// Trains a preset, scoring and checkpointing after every epoch.
///
/// Writes `epochs.csv`, `shapes.txt`, `checkpoints/epoch-NNN.json` and the
/// manifest. A diverged run still writes the epochs it finished and
/// reports the failure in [`TrainOutcome::failure`].
pub fn cmd_train(cfg: &TrainRunConfig, out: &Path) -> Result<TrainRun> {
    let preset = cfg.preset()?;
    let schedule = cfg.schedule()?;
    let protocol = cfg.protocol()?;
    if cfg.checkpoint_every == 0 {
        return Err(Error::config("checkpoint_every", "must be at least 1"));
    }
    let train_path = required("train", &cfg.train)?;
    let test_path = required("test", &cfg.test)?;
    let mut gan = cfg.gan()?;
    let train_set = read_series_csv(train_path)?;
    let test_set = read_series_csv(test_path)?;
    if test_set.length() != gan.spec.generator.length {
        return Err(Error::ShapeMismatch {
            op: "test set",
            lhs: vec![gan.spec.generator.length],
            rhs: vec![test_set.length()],
        });
    }
    let n_eval = cfg.eval_samples.unwrap_or(test_set.len());

    create_dir(&out.join("checkpoints"))?;
    let echo = TrainEcho {
        run: cfg,
        schedule: &schedule,
        protocol: &protocol,
    };
    let mut manifest = RunManifest::new("train", cfg.seed, &echo)?;
    manifest.inputs = vec![train_path.clone(), test_path.clone()];
    write_text(&out.join("shapes.txt"), &shape_report(&gan.spec.discriminator)?)?;
    manifest.outputs.push("shapes.txt".into());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(TRAIN_EVAL_STREAM);
    let mut saved = Vec::new();
    let outcome = train(&mut gan, &schedule, &train_set, |ctx| {
        let synth = synthesize(&ctx.gan.generator, n_eval, &mut rng)?;
        let m = evaluate_epoch(&test_set, &synth, &protocol, &mut rng)?;
        let keep = ctx.epoch % cfg.checkpoint_every == 0 || ctx.epoch == schedule.epochs;
        let checkpoint_id = if keep {
            let name = format!("checkpoints/epoch-{:03}.json", ctx.epoch);
            saved.push(name.clone());
            Checkpoint::capture(ctx.gan, Some(preset.name().into()), ctx.epoch).save(&out.join(name))?
        } else {
            String::new()
        };
        eprintln!(
            "epoch {:>3}  g {:.4}  d {:.4}  mmd2 {:.3e}  dtw {:.3}",
            ctx.epoch, ctx.g_loss, ctx.d_loss, m.mmd2, m.dtw_mean
        );
        Ok(EpochEval {
            mmd2: m.mmd2,
            dtw_mean: m.dtw_mean,
            checkpoint_id,
        })
    })?;
    write_text(&out.join("epochs.csv"), &epoch_csv(&outcome))?;
    manifest.outputs.push("epochs.csv".into());
    manifest.outputs.extend(saved);
    manifest.write(out, if outcome.failed() { "diverged" } else { "ok" })?;
    Ok(TrainRun { manifest, outcome, gan })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub checkpoint: Option<PathBuf>,
    pub n: usize,
    /// Expected series length; a checkpoint with another `T` is rejected.
    pub length: Option<usize>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            checkpoint: None,
            n: 1000,
            length: None,
            seed: 0,
        }
    }
}

impl ResolvePaths for SynthConfig {
    fn resolve_paths(&mut self, base: &Path) {
        rebase(base, &mut self.checkpoint);
    }
}

/// Samples `n` series from a checkpointed generator into `synth.csv`.
pub fn cmd_synth(cfg: &SynthConfig, out: &Path) -> Result<(RunManifest, SeriesBatch)> {
    let path = required("checkpoint", &cfg.checkpoint)?;
    let gan = Checkpoint::load(path)?.restore()?;
    let t = gan.spec.generator.length;
    if let Some(want) = cfg.length {
        if want != t {
            return Err(Error::ShapeMismatch {
                op: "synth: checkpoint series length vs requested length",
                lhs: vec![t],
                rhs: vec![want],
            });
        }
    }
    create_dir(out)?;
    let mut manifest = RunManifest::new("synth", cfg.seed, cfg)?;
    manifest.inputs.push(path.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SYNTH_STREAM);
    let synth = synthesize(&gan.generator, cfg.n, &mut rng)?;
    synth.write_csv(&out.join("synth.csv"), NORMAL_LABEL)?;
    manifest.outputs.push("synth.csv".into());
    manifest.write(out, "ok")?;
    Ok((manifest, synth))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub real: Option<PathBuf>,
    pub synth: Option<PathBuf>,
    pub protocol: EvalProtocol,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            real: None,
            synth: None,
            protocol: EvalProtocol::sine(),
            seed: 0,
        }
    }
}

impl ResolvePaths for EvalConfig {
    fn resolve_paths(&mut self, base: &Path) {
        rebase(base, &mut self.real);
        rebase(base, &mut self.synth);
    }
}

#[derive(Clone, Debug, Serialize)]
struct EvalReport<'a> {
    metrics: &'a MetricsRecord,
    protocol: &'a EvalProtocol,
    seed: u64,
}

/// MMD² and mean DTW of a synthetic corpus against a real one.
pub fn cmd_eval(cfg: &EvalConfig, out: &Path) -> Result<(RunManifest, MetricsRecord)> {
    cfg.protocol.validate()?;
    let real_path = required("real", &cfg.real)?;
    let synth_path = required("synth", &cfg.synth)?;
    let real = read_series_csv(real_path)?;
    let synth = read_series_csv(synth_path)?;
    if real.len() < 2 || synth.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "MMD needs at least 2 rows on each side, got {} real and {} synthetic",
            real.len(),
            synth.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(EVAL_STREAM);
    let m = evaluate_epoch(&real, &synth, &cfg.protocol, &mut rng)?;
    create_dir(out)?;
    let mut manifest = RunManifest::new("eval", cfg.seed, cfg)?;
    manifest.inputs = vec![real_path.clone(), synth_path.clone()];
    let report = EvalReport {
        metrics: &m,
        protocol: &cfg.protocol,
        seed: cfg.seed,
    };
    write_text(&out.join("metrics.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    let csv = format!(
        "mmd2,dtw_mean,mmd_fraction,dtw_fraction,mmd_rows_real,mmd_rows_synth,dtw_pairs,pairing\n{},{},{},{},{},{},{},{}\n",
        format_value(m.mmd2),
        format_value(m.dtw_mean),
        format_value(m.mmd_fraction),
        format_value(m.dtw_fraction),
        m.mmd_rows.0,
        m.mmd_rows.1,
        m.dtw_pairs,
        match cfg.protocol.pairing {
            Pairing::Shuffled => "shuffled",
            Pairing::Aligned => "aligned",
        }
    );
    write_text(&out.join("metrics.csv"), &csv)?;
    manifest.outputs = vec!["metrics.json".into(), "metrics.csv".into()];
    manifest.write(out, "ok")?;
    Ok((manifest, m))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackRunConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub synth: Option<PathBuf>,
    /// Use the ECG grid for unset fields instead of the sine one.
    pub ecg: bool,
    pub r_values: Option<Vec<usize>>,
    pub epsilon_fractions: Option<Vec<f64>>,
    pub max_pairs: Option<usize>,
    pub seed: u64,
}

impl ResolvePaths for AttackRunConfig {
    fn resolve_paths(&mut self, base: &Path) {
        rebase(base, &mut self.train);
        rebase(base, &mut self.test);
        rebase(base, &mut self.synth);
    }
}

impl AttackRunConfig {
    pub fn grid(&self) -> AttackConfig {
        let base = if self.ecg { AttackConfig::ecg(self.seed) } else { AttackConfig::sine(self.seed) };
        AttackConfig {
            r_values: self.r_values.clone().unwrap_or(base.r_values),
            epsilon_fractions: self.epsilon_fractions.clone().unwrap_or(base.epsilon_fractions),
            max_pairs: self.max_pairs.unwrap_or(DEFAULT_MAX_PAIRS),
            seed: self.seed,
        }
    }
}

/// Presence-disclosure sweep written to `attack.csv` and `attack.json`.
pub fn cmd_attack(cfg: &AttackRunConfig, out: &Path) -> Result<(RunManifest, AttackReport)> {
    let grid = cfg.grid();
    grid.validate()?;
    let paths = [
        required("train", &cfg.train)?,
        required("test", &cfg.test)?,
        required("synth", &cfg.synth)?,
    ];
    let train = read_series_csv(paths[0])?;
    let test = read_series_csv(paths[1])?;
    let synth = read_series_csv(paths[2])?;
    let report = presence_disclosure(&train, &test, &synth, &grid)?;
    create_dir(out)?;
    let mut manifest = RunManifest::new("attack", cfg.seed, &grid)?;
    manifest.inputs = paths.iter().map(|p| (*p).clone()).collect();
    report.write_csv(&out.join("attack.csv"))?;
    report.write_json(&out.join("attack.json"))?;
    manifest.outputs = vec!["attack.csv".into(), "attack.json".into()];
    manifest.write(out, "ok")?;
    Ok((manifest, report))
}

/// Appends a line to stderr without failing when stderr is closed.
pub(crate) fn note(msg: &str) {
    let _ = writeln!(std::io::stderr(), "{msg}");
}
