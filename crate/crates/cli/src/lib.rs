//! Experiment harness behind the `debughd` binary.
//!
//! Every command takes a [`RunConfig`] and an output directory, writes its
//! artifacts there, and returns the paths it wrote. Outputs depend only on
//! the configuration, so re-running a command overwrites its files with
//! identical bytes.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use debughd::analysis::{ssim_matrix, suggest_pruned_set};
use debughd::corpus::{generate, CorpusSpec};
use debughd::corruptions::{CidSet, Condition, Kind, LabeledImage};
use debughd::experiment::{
    self, build_cid, class_names, corpus_halves, prepare, run_method, run_method_at, Method,
    Prepared, ScenarioConfig,
};
use debughd::mlp::TrainConfig;
use debughd::model::DebugModel;
use debughd::monitor;
use debughd::pipeline::{images_to_features, train_surrogate, TapLayer};
use debughd::seed::{self, tag};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "DEBUGHD_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] debughd::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {}: {source}", path.display())]
    Config {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    /// 2 for bad input, 3 for IO failures, 4 when training diverged.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(debughd::Error::Io(_)) | CliError::Io { .. } => 3,
            CliError::Core(debughd::Error::Diverged(_)) => 4,
            _ => 2,
        }
    }
}

/// Optimizer settings as they appear in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
}

impl From<&TrainConfig> for TrainSettings {
    fn from(c: &TrainConfig) -> Self {
        Self {
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            lr_decay: c.lr_decay,
        }
    }
}

impl Default for TrainSettings {
    fn default() -> Self {
        (&TrainConfig::default()).into()
    }
}

impl TrainSettings {
    fn to_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            lr_decay: self.lr_decay,
            ..TrainConfig::default()
        }
    }
}

/// Run configuration, read from JSON. Missing fields take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus_images: usize,
    pub surrogate_images: usize,
    pub image_size: usize,
    pub channels: usize,
    pub kinds: Vec<String>,
    pub severity: u8,
    pub include_id: bool,
    pub surrogate_hidden: usize,
    pub surrogate_train: TrainSettings,
    /// `"hidden"`, `"logits"`, or absent to search.
    pub tap: Option<String>,
    pub hyper_d: usize,
    pub method: String,
    pub split_fraction: f64,
    pub standardize: bool,
    pub teacher: TrainSettings,
    pub retrain_epochs: usize,
    pub retrain_lr: u32,
    pub monitor_window: usize,
    pub monitor_calibration_images: usize,
    pub monitor_stream_images: usize,
    /// Corruption applied after the shift; defaults to the first kind.
    pub monitor_kind: Option<String>,
    pub sweep_dims: Vec<usize>,
    pub ssim_samples: usize,
    pub prune_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        Self {
            seed: s.seed,
            corpus_images: s.corpus_images,
            surrogate_images: s.surrogate_images,
            image_size: s.image_size,
            channels: s.channels,
            kinds: s.kinds.iter().map(|k| k.name().to_owned()).collect(),
            severity: s.severity,
            include_id: s.include_id,
            surrogate_hidden: s.surrogate_hidden,
            surrogate_train: (&s.surrogate_train).into(),
            tap: None,
            hyper_d: s.hyper_d,
            method: Method::DebugHd.name().to_owned(),
            split_fraction: s.split_fraction,
            standardize: s.standardize,
            teacher: (&s.teacher).into(),
            retrain_epochs: s.retrain_epochs,
            retrain_lr: s.retrain_lr,
            monitor_window: monitor::DEFAULT_WINDOW,
            monitor_calibration_images: 2000,
            monitor_stream_images: 500,
            monitor_kind: None,
            sweep_dims: vec![200, 400, 800, 1600, 3200],
            ssim_samples: debughd::analysis::DEFAULT_SAMPLES,
            prune_threshold: debughd::analysis::DEFAULT_PRUNE_THRESHOLD,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_reader(BufReader::new(file)).map_err(|source| CliError::Config {
            path: path.to_owned(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn method(&self) -> Result<Method> {
        Ok(self.method.parse()?)
    }

    pub fn kinds(&self) -> Result<Vec<Kind>> {
        self.kinds
            .iter()
            .map(|k| k.parse().map_err(CliError::from))
            .collect()
    }

    pub fn scenario(&self) -> Result<ScenarioConfig> {
        if self.hyper_d == 0 {
            return Err(CliError::Invalid("hyper_d must be at least 1".into()));
        }
        if self.monitor_window == 0 {
            return Err(CliError::Invalid("monitor_window must be at least 1".into()));
        }
        let tap = self
            .tap
            .as_deref()
            .map(str::parse::<TapLayer>)
            .transpose()?;
        let cfg = ScenarioConfig {
            seed: self.seed,
            corpus_images: self.corpus_images,
            surrogate_images: self.surrogate_images,
            image_size: self.image_size,
            channels: self.channels,
            surrogate_hidden: self.surrogate_hidden,
            surrogate_train: self.surrogate_train.to_config(),
            kinds: self.kinds()?,
            severity: self.severity,
            include_id: self.include_id,
            tap,
            hyper_d: self.hyper_d,
            split_fraction: self.split_fraction,
            standardize: self.standardize,
            teacher: self.teacher.to_config(),
            retrain_epochs: self.retrain_epochs,
            retrain_lr: self.retrain_lr,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<PathBuf> {
    fs::write(path, bytes).map_err(io_err(path))?;
    Ok(path.to_owned())
}

/// Serializes with a core writer, mapping IO failures to the file's path.
fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> debughd::Result<()>,
) -> Result<PathBuf> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| match e {
        debughd::Error::Io(source) => CliError::Io {
            path: path.to_owned(),
            source,
        },
        other => other.into(),
    })?;
    w.flush().map_err(io_err(path))?;
    Ok(path.to_owned())
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn clean_set(images: &[LabeledImage]) -> CidSet {
    CidSet {
        samples: images
            .iter()
            .map(|li| debughd::corruptions::CidSample {
                image: li.image.clone(),
                label: li.class,
                class: li.class,
            })
            .collect(),
        label_names: class_names(),
    }
}

/// Writes the clean corpus halves and the corrupted held-out set.
pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let scenario = cfg.scenario()?;
    create_dir(out)?;
    let (base, holdout) = corpus_halves(&scenario)?;
    let cid = build_cid(&scenario, &holdout)?;
    Ok(vec![
        write_with(&out.join("id_train.imgset"), |w| clean_set(&base).write_to(w))?,
        write_with(&out.join("id_holdout.imgset"), |w| clean_set(&holdout).write_to(w))?,
        write_with(&out.join("cid.imgset"), |w| cid.write_to(w))?,
    ])
}

/// Metrics written by `train`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub method: String,
    pub hyper_d: usize,
    pub tap_layer: String,
    pub tap_candidates: Vec<(String, f64)>,
    pub surrogate_holdout_accuracy: f64,
    pub labels: Vec<String>,
    pub top1: f64,
    pub top2: f64,
    pub top3: f64,
    pub confusion: Vec<Vec<u32>>,
    pub retrain_trace: Vec<f64>,
}

fn metrics(prep: &Prepared, r: &experiment::MethodResult) -> MetricsReport {
    MetricsReport {
        method: r.method.name().to_owned(),
        hyper_d: r.hyper_d,
        tap_layer: prep.layer.name().to_owned(),
        tap_candidates: prep.tap.candidates.clone(),
        surrogate_holdout_accuracy: prep.surrogate_holdout_accuracy,
        labels: prep.train.label_names().to_vec(),
        top1: r.top(1),
        top2: r.top(2),
        top3: r.top(3),
        confusion: r.evaluation.confusion.clone(),
        retrain_trace: r.retrain_trace.clone(),
    }
}

/// Trains the configured method; writes `metrics.json` and, for HDC methods,
/// `model.hdbg` plus the held-out test features `test.hdcset`.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let scenario = cfg.scenario()?;
    let method = cfg.method()?;
    create_dir(out)?;
    let prep = prepare(&scenario)?;
    let result = run_method(&prep, method)?;
    let report = metrics(&prep, &result);
    let mut written = vec![write_file(
        &out.join("metrics.json"),
        serde_json::to_string_pretty(&report).expect("report serializes").as_bytes(),
    )?];
    if let Some(model) = &result.model {
        written.push(write_with(&out.join("model.hdbg"), |w| model.write_to(w))?);
        written.push(write_with(&out.join("test.hdcset"), |w| prep.test.write_to(w))?);
    }
    Ok(written)
}

/// Vanilla HDC top-1 at each dimension in `cfg.sweep_dims`.
pub fn cmd_sweep_hyperd(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    if cfg.sweep_dims.is_empty() || cfg.sweep_dims.contains(&0) {
        return Err(CliError::Invalid("sweep_dims must be non-empty and positive".into()));
    }
    let scenario = cfg.scenario()?;
    create_dir(out)?;
    let prep = prepare(&scenario)?;
    let rows = cfg
        .sweep_dims
        .iter()
        .map(|&d| {
            let r = run_method_at(&prep, Method::Vanilla, d)?;
            Ok(vec![d.to_string(), fmt4(r.top(1))])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![write_file(
        &out.join("sweep_hyperd.csv"),
        &csv_bytes(&["hyper_d", "top1"], &rows),
    )?])
}

/// SSIM matrix over the configured label set (ID first when included), its
/// colour bands, and the suggested pruned label set.
pub fn cmd_ssim(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let scenario = cfg.scenario()?;
    create_dir(out)?;
    let (_, holdout) = corpus_halves(&scenario)?;
    let conditions: Vec<Condition> = scenario
        .include_id
        .then_some(Condition::Clean)
        .into_iter()
        .chain(scenario.kinds.iter().map(|&k| Condition::Corrupt(k)))
        .collect();
    let m = ssim_matrix(
        &holdout,
        &conditions,
        scenario.severity,
        cfg.ssim_samples,
        scenario.corruption_seed(),
    )?;
    let kept = suggest_pruned_set(&m, cfg.prune_threshold);
    let mut pruned = kept.join("\n");
    pruned.push('\n');
    Ok(vec![
        write_file(&out.join("ssim.csv"), m.to_csv().as_bytes())?,
        write_file(&out.join("ssim_bands.csv"), m.pairs_csv().as_bytes())?,
        write_file(&out.join("pruned_kinds.txt"), pruned.as_bytes())?,
    ])
}

/// Surrogate correctness stream for the monitor simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct MonitorRun {
    pub calibration: monitor::Calibration,
    pub rows: Vec<(String, bool, monitor::TraceRow)>,
    /// First step at or after the shift that triggered, if any.
    pub first_trigger_after_shift: Option<usize>,
    pub shift_step: usize,
}

/// Calibrates on a fresh stream of clean images, then streams more clean
/// images followed by the same images under `monitor_kind` (default: the
/// first configured kind). Correctness is the surrogate's own.
pub fn simulate_monitor(cfg: &RunConfig) -> Result<MonitorRun> {
    let scenario = cfg.scenario()?;
    if cfg.monitor_calibration_images < cfg.monitor_window || cfg.monitor_stream_images == 0 {
        return Err(CliError::Invalid(
            "monitor needs at least one window of calibration images and a non-empty stream".into(),
        ));
    }
    let kind = match &cfg.monitor_kind {
        Some(k) => k.parse()?,
        None => scenario.kinds[0],
    };
    let (base, _) = corpus_halves(&scenario)?;
    let names = class_names();
    let train_cfg = TrainConfig {
        seed: seed::derive(scenario.seed, &[tag("surrogate")]),
        ..scenario.surrogate_train.clone()
    };
    let (net, _) = train_surrogate(&base, &names, scenario.surrogate_hidden, &train_cfg, None)?;
    let correct = |images: &[LabeledImage]| -> Result<Vec<bool>> {
        let set = images_to_features(images, &names)?;
        set.iter()
            .map(|(f, l)| Ok(net.predict(f)?.0 == l))
            .collect()
    };
    let fresh = generate(&CorpusSpec {
        count: cfg.monitor_calibration_images + cfg.monitor_stream_images,
        seed: seed::derive(scenario.seed, &[tag("monitor")]),
        ..scenario.corpus_spec()
    })?;
    let (cal_images, live_images) = fresh.split_at(cfg.monitor_calibration_images);
    let mut state = monitor::calibrate(&correct(cal_images)?, cfg.monitor_window)?;
    let corrupted: Vec<LabeledImage> = live_images
        .iter()
        .enumerate()
        .map(|(i, li)| {
            Ok(LabeledImage {
                image: Condition::Corrupt(kind).apply_indexed(
                    &li.image,
                    scenario.severity,
                    scenario.corruption_seed(),
                    i,
                )?,
                class: li.class,
            })
        })
        .collect::<Result<_>>()?;
    let mut stream = correct(live_images)?;
    let shift_step = stream.len();
    stream.extend(correct(&corrupted)?);
    let trace = monitor::trace(&mut state, &stream)?;
    let first_trigger_after_shift = trace[shift_step..]
        .iter()
        .find(|r| r.triggered)
        .map(|r| r.step);
    let rows = trace
        .into_iter()
        .zip(&stream)
        .map(|(r, &c)| {
            let phase = if r.step < shift_step { "id" } else { kind.name() };
            (phase.to_owned(), c, r)
        })
        .collect();
    Ok(MonitorRun {
        calibration: state.calibration().expect("calibrated above"),
        rows,
        first_trigger_after_shift,
        shift_step,
    })
}

/// Per-step monitor trace as CSV.
pub fn cmd_monitor_sim(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let run = simulate_monitor(cfg)?;
    let rows: Vec<Vec<String>> = run
        .rows
        .iter()
        .map(|(phase, c, r)| {
            vec![
                r.step.to_string(),
                phase.clone(),
                u8::from(*c).to_string(),
                fmt4(r.window_accuracy),
                u8::from(r.triggered).to_string(),
            ]
        })
        .collect();
    Ok(vec![write_file(
        &out.join("monitor_trace.csv"),
        &csv_bytes(&["step", "phase", "correct", "window_accuracy", "triggered"], &rows),
    )?])
}

/// Top-1/2/3 of every method on one prepared scenario.
pub fn compare(cfg: &RunConfig) -> Result<Vec<experiment::MethodResult>> {
    let prep = prepare(&cfg.scenario()?)?;
    Method::ALL.iter().map(|&m| Ok(run_method(&prep, m)?)).collect()
}

pub fn cmd_compare(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let rows: Vec<Vec<String>> = compare(cfg)?
        .iter()
        .map(|r| {
            vec![
                r.method.name().to_owned(),
                r.hyper_d.to_string(),
                fmt4(r.top(1)),
                fmt4(r.top(2)),
                fmt4(r.top(3)),
            ]
        })
        .collect();
    Ok(vec![write_file(
        &out.join("compare.csv"),
        &csv_bytes(&["method", "hyper_d", "top1", "top2", "top3"], &rows),
    )?])
}

/// Classifies every image of an image set with a saved model.
pub fn cmd_classify(model_path: &Path, images_path: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let model = DebugModel::load(model_path).map_err(|e| match e {
        debughd::Error::Io(source) => CliError::Io {
            path: model_path.to_owned(),
            source,
        },
        other => other.into(),
    })?;
    let file = File::open(images_path).map_err(io_err(images_path))?;
    let set = CidSet::read_from(&mut BufReader::new(file))?;
    create_dir(out)?;
    let names = model.bank.label_names();
    let rows = set
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = model.classify_image(&s.image)?;
            let top: Vec<&str> = p.ranking.iter().take(3).map(|&(l, _)| names[l].as_str()).collect();
            Ok(vec![
                i.to_string(),
                set.label_names[s.label as usize].clone(),
                top.join(" "),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![write_file(
        &out.join("predictions.csv"),
        &csv_bytes(&["index", "label", "top3"], &rows),
    )?])
}
