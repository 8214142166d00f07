//! End-to-end desk scenario: synthetic corpus, surrogate base network,
//! corrupted held-out images, tap search, and the four classifiers that get
//! compared on the resulting features.

use std::fmt;
use std::str::FromStr;

use crate::corpus::{generate, CorpusSpec, CLASS_NAMES};
use crate::corruptions::{build_cid_dataset, CidSet, Kind, LabeledImage};
use crate::dataset::{LabeledFeatureSet, Standardizer};
use crate::encoding::ProjectionMatrix;
use crate::error::{invalid, Error, Result};
use crate::hdc::{retrain_epochs, train_single_pass, ClassBank, Evaluation};
use crate::mlp::{train_mlp, MlpModel, MlpShape, TrainConfig, TrainReport};
use crate::model::DebugModel;
use crate::pipeline::{
    images_to_features, stratified_split, surrogate_train_config, tap_features, tap_layer_search,
    train_surrogate, FeatureTap, SurrogateTap, TapLayer, TapReport,
};
use crate::seed::{self, tag};

/// The ten kinds of the reference scenario.
pub const REFERENCE_KINDS: [Kind; 10] = [
    Kind::GaussianNoise,
    Kind::ShotNoise,
    Kind::ImpulseNoise,
    Kind::GaussianBlur,
    Kind::DefocusBlur,
    Kind::MotionBlur,
    Kind::Contrast,
    Kind::Brightness,
    Kind::Pixelate,
    Kind::FogLike,
];

/// Classifiers compared on the tapped features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Random projection, single pass.
    Vanilla,
    /// MLP-learned projection, single pass.
    DebugHd,
    /// Random projection followed by perceptron-style retraining.
    Retrain,
    /// ReLU MLP with hidden width `hyper_d`, used as an upper reference.
    MlpRef,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Vanilla, Method::DebugHd, Method::Retrain, Method::MlpRef];

    pub fn name(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::DebugHd => "debughd",
            Method::Retrain => "retrain",
            Method::MlpRef => "mlp-ref",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown method {s:?}")))
    }
}

/// Schedule for the encoder teacher and the MLP reference: the default
/// optimizer settings with batches of 32, since the tapped datasets hold only
/// a few thousand samples.
pub fn teacher_train_config() -> TrainConfig {
    TrainConfig {
        batch_size: 32,
        ..TrainConfig::default()
    }
}

/// Everything that defines a scenario run.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Total clean images; the first `surrogate_images` train the base
    /// network, the rest are corrupted.
    pub corpus_images: usize,
    pub surrogate_images: usize,
    pub image_size: usize,
    pub channels: usize,
    pub surrogate_hidden: usize,
    pub surrogate_train: TrainConfig,
    pub kinds: Vec<Kind>,
    pub severity: u8,
    /// Add the clean held-out images as an extra "id" class.
    pub include_id: bool,
    /// Fixed tap layer; `None` searches all candidates.
    pub tap: Option<TapLayer>,
    pub hyper_d: usize,
    pub split_fraction: f64,
    pub standardize: bool,
    pub teacher: TrainConfig,
    pub retrain_epochs: usize,
    pub retrain_lr: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus_images: 1000,
            surrogate_images: 500,
            image_size: 16,
            channels: 1,
            surrogate_hidden: 128,
            surrogate_train: surrogate_train_config(0),
            kinds: REFERENCE_KINDS.to_vec(),
            severity: 5,
            include_id: false,
            tap: None,
            hyper_d: 300,
            split_fraction: 0.8,
            standardize: true,
            teacher: teacher_train_config(),
            retrain_epochs: 20,
            retrain_lr: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.surrogate_images == 0 || self.surrogate_images >= self.corpus_images {
            return invalid("surrogate_images must be in [1, corpus_images)");
        }
        if self.hyper_d == 0 {
            return invalid("hyper_d must be at least 1");
        }
        if self.kinds.is_empty() {
            return invalid("at least one corruption kind is required");
        }
        Ok(())
    }

    pub fn corpus_spec(&self) -> CorpusSpec {
        CorpusSpec {
            count: self.corpus_images,
            size: self.image_size,
            channels: self.channels,
            seed: seed::derive(self.seed, &[tag("corpus")]),
        }
    }

    pub fn corruption_seed(&self) -> u64 {
        seed::derive(self.seed, &[tag("corruptions")])
    }
}

/// Base images split into the surrogate's training half and the held-out half.
pub fn corpus_halves(cfg: &ScenarioConfig) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>)> {
    cfg.validate()?;
    let mut images = generate(&cfg.corpus_spec())?;
    let holdout = images.split_off(cfg.surrogate_images);
    Ok((images, holdout))
}

pub fn class_names() -> Vec<String> {
    CLASS_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Corrupted held-out images.
pub fn build_cid(cfg: &ScenarioConfig, holdout: &[LabeledImage]) -> Result<CidSet> {
    build_cid_dataset(holdout, &cfg.kinds, cfg.severity, cfg.corruption_seed(), cfg.include_id)
}

/// Output of [`prepare`]: the trained base network and the HDC datasets.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ScenarioConfig,
    pub surrogate: MlpModel,
    pub surrogate_report: TrainReport,
    /// Surrogate accuracy on the clean held-out images.
    pub surrogate_holdout_accuracy: f64,
    pub holdout: Vec<LabeledImage>,
    pub tap: TapReport,
    pub layer: TapLayer,
    pub train: LabeledFeatureSet,
    pub test: LabeledFeatureSet,
    pub standardizer: Option<Standardizer>,
}

/// Builds the corpus, trains the surrogate, corrupts the held-out half,
/// chooses the tap layer and splits the tapped features.
pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared> {
    let (base, holdout) = corpus_halves(cfg)?;
    let names = class_names();
    let train_cfg = TrainConfig {
        seed: seed::derive(cfg.seed, &[tag("surrogate")]),
        ..cfg.surrogate_train.clone()
    };
    let (surrogate, surrogate_report) =
        train_surrogate(&base, &names, cfg.surrogate_hidden, &train_cfg, None)?;
    let surrogate_holdout_accuracy = surrogate.accuracy(&images_to_features(&holdout, &names)?)?;
    let cid = build_cid(cfg, &holdout)?;
    let split_seed = seed::derive(cfg.seed, &[tag("split")]);
    let layers: Vec<TapLayer> = match cfg.tap {
        Some(l) => vec![l],
        None => TapLayer::ALL.to_vec(),
    };
    let taps = layers
        .iter()
        .map(|&l| SurrogateTap::new(&surrogate, l))
        .collect::<Result<Vec<_>>>()?;
    let dyn_taps: Vec<&dyn FeatureTap> = taps.iter().map(|t| t as &dyn FeatureTap).collect();
    let tap = tap_layer_search(
        &dyn_taps,
        &cid,
        cfg.hyper_d,
        cfg.split_fraction,
        cfg.standardize,
        split_seed,
    )?;
    let layer = layers[tap.selected];
    let all = tap_features(&taps[tap.selected], &cid)?;
    let (mut train, mut test) = stratified_split(&all, cfg.split_fraction, split_seed)?;
    let standardizer = cfg.standardize.then(|| Standardizer::fit(&train));
    if let Some(s) = &standardizer {
        train = s.apply_set(&train)?;
        test = s.apply_set(&test)?;
    }
    Ok(Prepared {
        config: cfg.clone(),
        surrogate,
        surrogate_report,
        surrogate_holdout_accuracy,
        holdout,
        tap,
        layer,
        train,
        test,
        standardizer,
    })
}

/// Result of running one method on prepared features.
#[derive(Clone, Debug)]
pub struct MethodResult {
    pub method: Method,
    pub hyper_d: usize,
    pub evaluation: Evaluation,
    /// Per-epoch validation accuracy of the retrain baseline.
    pub retrain_trace: Vec<f64>,
    /// The HDC model (absent for the MLP reference).
    pub model: Option<DebugModel>,
}

impl MethodResult {
    pub fn top(&self, k: usize) -> f64 {
        self.evaluation.top(k)
    }
}

/// Random projection used by the vanilla and retrain methods.
pub fn random_projection(prep: &Prepared, hyper_d: usize) -> Result<ProjectionMatrix> {
    ProjectionMatrix::random(
        prep.train.d(),
        hyper_d,
        seed::derive(prep.config.seed, &[tag("projection"), hyper_d as u64]),
    )
}

/// Trains the MLP teacher and returns its sign projection.
pub fn learned_projection(prep: &Prepared, hyper_d: usize) -> Result<ProjectionMatrix> {
    let shape = MlpShape::encoder_teacher(prep.train.d(), hyper_d, prep.train.num_classes());
    let cfg = TrainConfig {
        seed: seed::derive(prep.config.seed, &[tag("teacher"), hyper_d as u64]),
        ..prep.config.teacher.clone()
    };
    let (teacher, _) = train_mlp(&prep.train, shape, &cfg, None)?;
    ProjectionMatrix::from_mlp_hidden(teacher.hidden_weights())
}

/// Top-k accuracies and confusion for the MLP, ranking by probability.
fn evaluate_mlp(model: &MlpModel, test: &LabeledFeatureSet) -> Result<Evaluation> {
    let classes = model.shape().d_out;
    let mut hits = vec![0usize; classes];
    let mut confusion = vec![vec![0u32; classes]; classes];
    for (f, label) in test.iter() {
        let (_, probs) = model.predict(f)?;
        let mut order: Vec<usize> = (0..classes).collect();
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        confusion[label][order[0]] += 1;
        hits[order.iter().position(|&l| l == label).unwrap()] += 1;
    }
    let mut cum = 0;
    let top_k = hits
        .iter()
        .map(|h| {
            cum += h;
            cum as f64 / test.len() as f64
        })
        .collect();
    Ok(Evaluation { top_k, confusion })
}

fn hdc_result(prep: &Prepared, method: Method, bank: ClassBank, trace: Vec<f64>) -> Result<MethodResult> {
    let evaluation = bank.evaluate(&prep.test)?;
    Ok(MethodResult {
        method,
        hyper_d: bank.hyper_d(),
        evaluation,
        retrain_trace: trace,
        model: Some(DebugModel {
            bank,
            surrogate: Some((prep.surrogate.clone(), prep.layer)),
            standardizer: prep.standardizer.clone(),
        }),
    })
}

/// Trains and evaluates `method` at the configured `hyper_d`.
pub fn run_method(prep: &Prepared, method: Method) -> Result<MethodResult> {
    run_method_at(prep, method, prep.config.hyper_d)
}

pub fn run_method_at(prep: &Prepared, method: Method, hyper_d: usize) -> Result<MethodResult> {
    if hyper_d == 0 {
        return invalid("hyper_d must be at least 1");
    }
    match method {
        Method::Vanilla => {
            let bank = train_single_pass(&random_projection(prep, hyper_d)?, &prep.train)?;
            hdc_result(prep, method, bank, Vec::new())
        }
        Method::DebugHd => {
            let bank = train_single_pass(&learned_projection(prep, hyper_d)?, &prep.train)?;
            hdc_result(prep, method, bank, Vec::new())
        }
        Method::Retrain => {
            let bank = train_single_pass(&random_projection(prep, hyper_d)?, &prep.train)?;
            let out = retrain_epochs(
                &bank,
                &prep.train,
                prep.config.retrain_epochs,
                prep.config.retrain_lr,
                Some(&prep.test),
            )?;
            hdc_result(prep, method, out.bank, out.trace)
        }
        Method::MlpRef => {
            let shape = MlpShape::surrogate(prep.train.d(), hyper_d, prep.train.num_classes());
            let cfg = TrainConfig {
                seed: seed::derive(prep.config.seed, &[tag("mlp-ref"), hyper_d as u64]),
                ..prep.config.teacher.clone()
            };
            let (model, _) = train_mlp(&prep.train, shape, &cfg, None)?;
            Ok(MethodResult {
                method,
                hyper_d,
                evaluation: evaluate_mlp(&model, &prep.test)?,
                retrain_trace: Vec::new(),
                model: None,
            })
        }
    }
}

/// Restricts the prepared features to the named labels.
pub fn restrict(prep: &Prepared, keep: &[String]) -> Result<Prepared> {
    let mut out = prep.clone();
    out.train = prep.train.restrict_to(keep)?;
    out.test = prep.test.restrict_to(keep)?;
    Ok(out)
}

/// Population standard deviation of consecutive differences in `trace`.
pub fn epoch_delta_std(trace: &[f64]) -> f64 {
    if trace.len() < 2 {
        return 0.0;
    }
    let deltas: Vec<f64> = trace.windows(2).map(|w| w[1] - w[0]).collect();
    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    (deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return invalid("spearman needs two equal-length series of at least 2 points");
    }
    let ranks = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    };
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap(), 0.0);
        // Ranks of y are [1, 4, 2.5, 2.5]: cov 1.5, variances 5 and 4.5.
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 2.0]).unwrap();
        assert!((r - 1.5 / 22.5f64.sqrt()).abs() < 1e-12);
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn epoch_delta_std_examples() {
        assert_eq!(epoch_delta_std(&[0.5]), 0.0);
        assert!(epoch_delta_std(&[0.1, 0.2, 0.3]) < 1e-12);
        assert!((epoch_delta_std(&[0.0, 1.0, 0.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("mlp".parse::<Method>().is_err());
    }

    #[test]
    fn small_scenario_runs_every_method() {
        let cfg = ScenarioConfig {
            corpus_images: 120,
            surrogate_images: 60,
            kinds: vec![Kind::Contrast, Kind::GaussianBlur, Kind::ImpulseNoise],
            surrogate_train: TrainConfig {
                epochs: 3,
                batch_size: 16,
                ..TrainConfig::default()
            },
            teacher: TrainConfig {
                epochs: 3,
                batch_size: 16,
                ..TrainConfig::default()
            },
            retrain_epochs: 3,
            hyper_d: 64,
            ..ScenarioConfig::default()
        };
        let prep = prepare(&cfg).unwrap();
        assert_eq!(prep.train.len() + prep.test.len(), 180);
        for m in Method::ALL {
            let r = run_method(&prep, m).unwrap();
            assert!(r.top(1) <= r.top(2) && r.top(2) <= r.top(3));
            assert!((0.0..=1.0).contains(&r.top(1)));
            assert_eq!(r.top(3), 1.0);
        }
        let kept = vec!["contrast".to_string(), "impulse_noise".to_string()];
        let small = restrict(&prep, &kept).unwrap();
        assert_eq!(small.train.num_classes(), 2);
    }
}
