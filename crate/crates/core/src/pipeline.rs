//! Feature tapping and HDC dataset construction.
//!
//! Corrupted images are pushed through a base network trained on clean data
//! only; the output of one intermediate layer becomes the feature vector, and
//! the corruption kind becomes the label. The tap layer is chosen by an
//! exhaustive search that scores each candidate with a vanilla HDC
//! classifier.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::corruptions::{CidSet, LabeledImage};
use crate::dataset::{LabeledFeatureSet, Split, Standardizer};
use crate::encoding::ProjectionMatrix;
use crate::error::{invalid, Error, Result};
use crate::hdc::{top_k_accuracy, train_single_pass};
use crate::image::Image;
use crate::mlp::{train_mlp, MlpModel, MlpShape, TrainConfig, TrainReport};
use crate::seed;

/// Layers of the surrogate base network that can be tapped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TapLayer {
    /// Post-ReLU hidden activations.
    Hidden,
    /// Pre-softmax outputs.
    Logits,
}

impl TapLayer {
    /// Candidates in shallow-to-deep order.
    pub const ALL: [TapLayer; 2] = [TapLayer::Hidden, TapLayer::Logits];

    pub fn name(self) -> &'static str {
        match self {
            TapLayer::Hidden => "hidden",
            TapLayer::Logits => "logits",
        }
    }
}

impl fmt::Display for TapLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TapLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hidden" => Ok(TapLayer::Hidden),
            "logits" => Ok(TapLayer::Logits),
            other => invalid(format!("unknown tap layer {other:?}")),
        }
    }
}

/// Something that turns an image into a feature vector.
pub trait FeatureTap {
    fn name(&self) -> String;
    fn extract(&self, image: &Image) -> Result<Vec<f64>>;
}

/// A layer of a trained surrogate network.
#[derive(Clone, Copy, Debug)]
pub struct SurrogateTap<'a> {
    model: &'a MlpModel,
    layer: TapLayer,
}

impl<'a> SurrogateTap<'a> {
    /// Fails if the model has not been trained.
    pub fn new(model: &'a MlpModel, layer: TapLayer) -> Result<Self> {
        if !model.is_trained() {
            return invalid("base network must be trained before tapping");
        }
        Ok(Self { model, layer })
    }
}

impl FeatureTap for SurrogateTap<'_> {
    fn name(&self) -> String {
        self.layer.name().to_owned()
    }

    fn extract(&self, image: &Image) -> Result<Vec<f64>> {
        let x = image.flatten();
        match self.layer {
            TapLayer::Hidden => self.model.hidden_features(&x),
            TapLayer::Logits => self.model.logits(&x),
        }
    }
}

/// Flattens labeled images into a feature set (label = content class).
pub fn images_to_features(images: &[LabeledImage], class_names: &[String]) -> Result<LabeledFeatureSet> {
    let samples = images
        .iter()
        .map(|li| (li.image.flatten(), li.class))
        .collect();
    LabeledFeatureSet::new(samples, class_names.to_vec(), Split::Train)
}

/// Default schedule for the surrogate: small batches, per-epoch decay.
pub fn surrogate_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 60,
        batch_size: 32,
        learning_rate: 1e-3,
        lr_decay: 0.99,
        seed,
        ..TrainConfig::default()
    }
}

/// Trains the ReLU surrogate base network on clean images.
pub fn train_surrogate(
    images: &[LabeledImage],
    class_names: &[String],
    hidden: usize,
    cfg: &TrainConfig,
    validation: Option<&[LabeledImage]>,
) -> Result<(MlpModel, TrainReport)> {
    let train = images_to_features(images, class_names)?;
    let val = validation
        .map(|v| images_to_features(v, class_names).map(|s| s.with_split(Split::Test)))
        .transpose()?;
    let shape = MlpShape::surrogate(train.d(), hidden, class_names.len());
    train_mlp(&train, shape, cfg, val.as_ref())
}

/// Taps every corrupted image. Features are rounded to `f32` precision so
/// that the feature-set file stores them exactly.
pub fn tap_features(tap: &dyn FeatureTap, cid: &CidSet) -> Result<LabeledFeatureSet> {
    if cid.is_empty() {
        return invalid("no corrupted images to tap");
    }
    let samples = cid
        .samples
        .iter()
        .map(|s| {
            let f = tap.extract(&s.image)?;
            Ok((f.into_iter().map(|v| v as f32 as f64).collect(), s.label))
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledFeatureSet::new(samples, cid.label_names.clone(), Split::Train)
}

/// Per-class seeded split: class `c` sends `round(n_c · fraction)` samples to
/// train and the rest to test. Both halves keep the original sample order.
pub fn stratified_split(
    set: &LabeledFeatureSet,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledFeatureSet, LabeledFeatureSet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return invalid(format!("split fraction {fraction} outside (0, 1)"));
    }
    let mut in_train = vec![false; set.len()];
    for class in 0..set.num_classes() {
        let mut idx: Vec<usize> = (0..set.len()).filter(|&i| set.label(i) == class).collect();
        let take = (idx.len() as f64 * fraction).round() as usize;
        idx.shuffle(&mut seed::rng(seed, &[seed::tag("split"), class as u64]));
        for &i in &idx[..take] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<usize>, Vec<usize>) = (0..set.len()).partition(|&i| in_train[i]);
    if train.is_empty() || test.is_empty() {
        return invalid("split leaves one side empty");
    }
    Ok((set.subset(&train, Split::Train)?, set.subset(&test, Split::Test)?))
}

/// Taps `cid` at `layer` of the trained base network and splits the result.
pub fn build_hdc_datasets(
    base_model: &MlpModel,
    cid: &CidSet,
    layer: TapLayer,
    split_fraction: f64,
    seed: u64,
) -> Result<(LabeledFeatureSet, LabeledFeatureSet)> {
    let tap = SurrogateTap::new(base_model, layer)?;
    let all = tap_features(&tap, cid)?;
    stratified_split(&all, split_fraction, seed)
}

/// Vanilla-HDC validation accuracy for each tap candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct TapReport {
    pub candidates: Vec<(String, f64)>,
    pub selected: usize,
}

impl TapReport {
    pub fn selected_name(&self) -> &str {
        &self.candidates[self.selected].0
    }
}

/// Scores each candidate with a single-pass vanilla HDC classifier and picks
/// the best; ties go to the earliest (shallowest) candidate. With
/// `standardize`, features are standardized with training-split statistics
/// before scoring.
pub fn tap_layer_search(
    candidates: &[&dyn FeatureTap],
    cid: &CidSet,
    hyper_d: usize,
    split_fraction: f64,
    standardize: bool,
    seed: u64,
) -> Result<TapReport> {
    if candidates.is_empty() {
        return invalid("tap search needs at least one candidate");
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for tap in candidates {
        let all = tap_features(*tap, cid)?;
        let (mut train, mut test) = stratified_split(&all, split_fraction, seed)?;
        if standardize {
            let s = Standardizer::fit(&train);
            train = s.apply_set(&train)?;
            test = s.apply_set(&test)?;
        }
        let proj = ProjectionMatrix::random(train.d(), hyper_d, seed::derive(seed, &[seed::tag("tap-search")]))?;
        let bank = train_single_pass(&proj, &train)?;
        scored.push((tap.name(), top_k_accuracy(&bank, &test, 1)?));
    }
    let mut selected = 0;
    for (i, (_, acc)) in scored.iter().enumerate() {
        if *acc > scored[selected].1 {
            selected = i;
        }
    }
    Ok(TapReport {
        candidates: scored,
        selected,
    })
}
