//! A two-layer perceptron trained with mini-batch Adam.
//!
//! The same network plays three parts:
//!
//! * the *encoder teacher*: hidden width = hyper-dimension, no hidden bias,
//!   no hidden activation. After training, the sign of its hidden weights
//!   becomes the HDC projection matrix;
//! * the MLP reference classifier;
//! * the surrogate base network whose hidden layer is tapped for features
//!   (ReLU hidden layer with bias).
//!
//! Layout: `z1 = W1ᵀx (+ b1)`, `a1 = act(z1)`, `z2 = W2ᵀa1 + b2`,
//! `p = softmax(z2)`, loss = mean cross-entropy.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::LabeledFeatureSet;
use crate::error::{dim_mismatch, invalid, Error, Result};
use crate::linalg::Matrix;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    None,
    Relu,
}

/// Layer sizes and hidden-layer options.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MlpShape {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub hidden_bias: bool,
    pub activation: Activation,
}

impl MlpShape {
    /// Bias-free, activation-free hidden layer whose weights seed the encoder.
    pub fn encoder_teacher(d_in: usize, hyper_d: usize, classes: usize) -> Self {
        Self {
            d_in,
            d_hidden: hyper_d,
            d_out: classes,
            hidden_bias: false,
            activation: Activation::None,
        }
    }

    /// ReLU hidden layer with bias, used as the tapped base network.
    pub fn surrogate(d_in: usize, hidden: usize, classes: usize) -> Self {
        Self {
            d_in,
            d_hidden: hidden,
            d_out: classes,
            hidden_bias: true,
            activation: Activation::Relu,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_hidden == 0 || self.d_out == 0 {
            return invalid(format!("MLP layer sizes must be positive: {self:?}"));
        }
        Ok(())
    }
}

/// Mini-batch Adam hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiplicative learning-rate decay applied after each epoch.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 256,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lr_decay: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return invalid("epochs and batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return invalid("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return invalid("Adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) || !(self.lr_decay > 0.0) {
            return invalid("epsilon and lr_decay must be positive");
        }
        Ok(())
    }
}

/// Summary of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean training loss observed during each epoch.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

/// Parameter gradients, laid out like the model's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w1: Matrix,
    pub b1: Option<Vec<f64>>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros(shape: &MlpShape) -> Self {
        Self {
            w1: Matrix::zeros(shape.d_in, shape.d_hidden),
            b1: shape.hidden_bias.then(|| vec![0.0; shape.d_hidden]),
            w2: Matrix::zeros(shape.d_hidden, shape.d_out),
            b2: vec![0.0; shape.d_out],
        }
    }

    /// All gradient entries in parameter order (W1, b1, W2, b2).
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.w1.as_slice().to_vec();
        if let Some(b1) = &self.b1 {
            v.extend_from_slice(b1);
        }
        v.extend_from_slice(self.w2.as_slice());
        v.extend_from_slice(&self.b2);
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![self.w1.as_mut_slice()];
        if let Some(b1) = &mut self.b1 {
            v.push(b1.as_mut_slice());
        }
        v.push(self.w2.as_mut_slice());
        v.push(self.b2.as_mut_slice());
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    shape: MlpShape,
    w1: Matrix,
    b1: Option<Vec<f64>>,
    w2: Matrix,
    b2: Vec<f64>,
    trained: bool,
}

struct Forward {
    z1: Vec<f64>,
    a1: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl MlpModel {
    /// Glorot-uniform weights from the seeded generator; zero biases.
    pub fn init(shape: MlpShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = seed::rng(seed, &[seed::tag("mlp-init")]);
        let mut glorot = |rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            Matrix::from_vec(rows, cols, data).expect("sized")
        };
        let w1 = glorot(shape.d_in, shape.d_hidden);
        let w2 = glorot(shape.d_hidden, shape.d_out);
        Ok(Self {
            shape,
            w1,
            b1: shape.hidden_bias.then(|| vec![0.0; shape.d_hidden]),
            w2,
            b2: vec![0.0; shape.d_out],
            trained: false,
        })
    }

    /// Assembles a model from explicit parameters.
    pub fn from_parameters(
        activation: Activation,
        w1: Matrix,
        b1: Option<Vec<f64>>,
        w2: Matrix,
        b2: Vec<f64>,
        trained: bool,
    ) -> Result<Self> {
        let shape = MlpShape {
            d_in: w1.rows(),
            d_hidden: w1.cols(),
            d_out: w2.cols(),
            hidden_bias: b1.is_some(),
            activation,
        };
        shape.validate()?;
        if w2.rows() != shape.d_hidden
            || b2.len() != shape.d_out
            || b1.as_ref().is_some_and(|b| b.len() != shape.d_hidden)
        {
            return invalid("inconsistent MLP parameter shapes");
        }
        let m = Self {
            shape,
            w1,
            b1,
            w2,
            b2,
            trained,
        };
        if !m.is_finite() {
            return invalid("MLP parameters must be finite");
        }
        Ok(m)
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    /// Whether the model has been through [`train_mlp`].
    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// The raw `d_in × d_hidden` hidden-layer weights.
    pub fn hidden_weights(&self) -> &Matrix {
        &self.w1
    }

    pub fn hidden_bias(&self) -> Option<&[f64]> {
        self.b1.as_deref()
    }

    pub fn output_weights(&self) -> &Matrix {
        &self.w2
    }

    pub fn output_bias(&self) -> &[f64] {
        &self.b2
    }

    /// Mutable view of every parameter in order (W1, b1, W2, b2).
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![self.w1.as_mut_slice()];
        if let Some(b1) = &mut self.b1 {
            v.push(b1.as_mut_slice());
        }
        v.push(self.w2.as_mut_slice());
        v.push(self.b2.as_mut_slice());
        v
    }

    fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && self.w2.is_finite()
            && self.b2.iter().all(|v| v.is_finite())
            && self.b1.iter().flatten().all(|v| v.is_finite())
    }

    fn check_input(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.shape.d_in {
            return dim_mismatch("MLP input", self.shape.d_in, f.len());
        }
        Ok(())
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let mut z1 = vec![0.0; self.shape.d_hidden];
        self.w1.vec_mul(x, &mut z1);
        if let Some(b1) = &self.b1 {
            for (z, b) in z1.iter_mut().zip(b1) {
                *z += b;
            }
        }
        let a1: Vec<f64> = match self.shape.activation {
            Activation::None => z1.clone(),
            Activation::Relu => z1.iter().map(|&z| z.max(0.0)).collect(),
        };
        let mut logits = vec![0.0; self.shape.d_out];
        self.w2.vec_mul(&a1, &mut logits);
        for (l, b) in logits.iter_mut().zip(&self.b2) {
            *l += b;
        }
        let probs = softmax(&logits);
        Forward {
            z1,
            a1,
            logits,
            probs,
        }
    }

    /// Post-activation hidden layer output.
    pub fn hidden_features(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_input(f)?;
        Ok(self.forward(f).a1)
    }

    /// Output-layer logits.
    pub fn logits(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_input(f)?;
        Ok(self.forward(f).logits)
    }

    /// Most probable label (lowest index on ties) and the softmax probabilities.
    pub fn predict(&self, f: &[f64]) -> Result<(usize, Vec<f64>)> {
        self.check_input(f)?;
        let probs = self.forward(f).probs;
        Ok((argmax(&probs), probs))
    }

    /// Fraction of samples whose predicted label matches.
    pub fn accuracy(&self, set: &LabeledFeatureSet) -> Result<f64> {
        let mut hits = 0usize;
        for (f, l) in set.iter() {
            if self.predict(f)?.0 == l {
                hits += 1;
            }
        }
        Ok(hits as f64 / set.len() as f64)
    }

    /// Mean cross-entropy over the given samples.
    pub fn loss(&self, xs: &[&[f64]], labels: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(labels) {
            self.check_input(x)?;
            total -= self.forward(x).probs[y].max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / xs.len() as f64)
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, xs: &[&[f64]], labels: &[usize]) -> Result<(f64, Gradients)> {
        if xs.is_empty() || xs.len() != labels.len() {
            return invalid("batch must be non-empty with one label per sample");
        }
        let mut grads = Gradients::zeros(&self.shape);
        let loss = self.accumulate_gradients(xs.iter().copied(), labels.iter().copied(), &mut grads)?;
        Ok((loss, grads))
    }

    /// Sums batch-mean gradients into `grads`; returns the batch-mean loss.
    fn accumulate_gradients<'a>(
        &self,
        xs: impl ExactSizeIterator<Item = &'a [f64]>,
        labels: impl Iterator<Item = usize>,
        grads: &mut Gradients,
    ) -> Result<f64> {
        let n = xs.len() as f64;
        let mut total = 0.0;
        let mut dz2 = vec![0.0; self.shape.d_out];
        let mut dz1 = vec![0.0; self.shape.d_hidden];
        for (x, y) in xs.zip(labels) {
            self.check_input(x)?;
            if y >= self.shape.d_out {
                return invalid(format!("label {y} out of range for {} classes", self.shape.d_out));
            }
            let fw = self.forward(x);
            total -= fw.probs[y].max(f64::MIN_POSITIVE).ln();
            for (k, d) in dz2.iter_mut().enumerate() {
                *d = (fw.probs[k] - if k == y { 1.0 } else { 0.0 }) / n;
            }
            for (j, a) in fw.a1.iter().enumerate() {
                let row = grads.w2.row_mut(j);
                for (g, d) in row.iter_mut().zip(&dz2) {
                    *g += a * d;
                }
            }
            for (g, d) in grads.b2.iter_mut().zip(&dz2) {
                *g += d;
            }
            for (j, g) in dz1.iter_mut().enumerate() {
                let back: f64 = self.w2.row(j).iter().zip(&dz2).map(|(w, d)| w * d).sum();
                *g = match self.shape.activation {
                    Activation::None => back,
                    Activation::Relu if fw.z1[j] > 0.0 => back,
                    Activation::Relu => 0.0,
                };
            }
            if let Some(b1) = &mut grads.b1 {
                for (g, d) in b1.iter_mut().zip(&dz1) {
                    *g += d;
                }
            }
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (g, d) in grads.w1.row_mut(i).iter_mut().zip(&dz1) {
                    *g += xi * d;
                }
            }
        }
        Ok(total / n)
    }

    /// Writes shape flags and all parameters as little-endian values.
    pub fn write_to<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        for v in [self.shape.d_in, self.shape.d_hidden, self.shape.d_out] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        let act = match self.shape.activation {
            Activation::None => 0u8,
            Activation::Relu => 1,
        };
        w.write_all(&[self.shape.hidden_bias as u8, act, self.trained as u8])?;
        let mut put = |xs: &[f64]| -> Result<()> {
            for x in xs {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        put(self.w1.as_slice())?;
        if let Some(b1) = &self.b1 {
            put(b1)?;
        }
        put(self.w2.as_slice())?;
        put(&self.b2)
    }

    pub fn read_from<R: Read + ?Sized>(r: &mut R) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            what: "MLP model",
            reason,
        };
        let mut b4 = [0u8; 4];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut b4)?;
            *d = u32::from_le_bytes(b4) as usize;
        }
        let mut flags = [0u8; 3];
        r.read_exact(&mut flags)?;
        let activation = match flags[1] {
            0 => Activation::None,
            1 => Activation::Relu,
            t => return Err(bad(format!("activation tag {t}"))),
        };
        let mut get = |n: usize| -> Result<Vec<f64>> {
            let mut b8 = [0u8; 8];
            (0..n)
                .map(|_| {
                    r.read_exact(&mut b8)?;
                    Ok(f64::from_le_bytes(b8))
                })
                .collect()
        };
        let [d_in, d_hidden, d_out] = dims;
        let w1 = Matrix::from_vec(d_in, d_hidden, get(d_in * d_hidden)?)?;
        let b1 = if flags[0] == 1 { Some(get(d_hidden)?) } else { None };
        let w2 = Matrix::from_vec(d_hidden, d_out, get(d_hidden * d_out)?)?;
        let b2 = get(d_out)?;
        Self::from_parameters(activation, w1, b1, w2, b2, flags[2] == 1)
            .map_err(|e| bad(e.to_string()))
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &mut MlpModel) -> Self {
        let sizes: Vec<usize> = model.parameters_mut().iter().map(|p| p.len()).collect();
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &mut Gradients, cfg: &TrainConfig, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let params = model.parameters_mut();
        let gs = grads.slices_mut();
        for (k, (p, g)) in params.into_iter().zip(gs).enumerate() {
            for (((p, g), m), v) in p
                .iter_mut()
                .zip(g.iter_mut())
                .zip(self.m[k].iter_mut())
                .zip(self.v[k].iter_mut())
            {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * *g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * *g * *g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
                *g = 0.0;
            }
        }
    }
}

/// Trains a freshly initialized model of `shape` on `train`.
///
/// Deterministic for a given `cfg.seed`: the initialization and the
/// per-epoch Fisher–Yates shuffles are both derived from it.
pub fn train_mlp(
    train: &LabeledFeatureSet,
    shape: MlpShape,
    cfg: &TrainConfig,
    validation: Option<&LabeledFeatureSet>,
) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    if train.d() != shape.d_in {
        return dim_mismatch("training set", shape.d_in, train.d());
    }
    if train.num_classes() > shape.d_out {
        return invalid(format!(
            "{} classes exceed {} outputs",
            train.num_classes(),
            shape.d_out
        ));
    }
    let mut model = MlpModel::init(shape, cfg.seed)?;
    let mut adam = Adam::new(&mut model);
    let mut grads = Gradients::zeros(&shape);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = seed::rng(cfg.seed, &[seed::tag("mlp-shuffle")]);
    let mut lr = cfg.learning_rate;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let loss = model.accumulate_gradients(
                batch.iter().map(|&i| train.features(i)),
                batch.iter().map(|&i| train.label(i)),
                &mut grads,
            )?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss in epoch {epoch}")));
            }
            loss_sum += loss * batch.len() as f64;
            adam.step(&mut model, &mut grads, cfg, lr);
        }
        if !model.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite parameters after epoch {epoch}"
            )));
        }
        epoch_losses.push(loss_sum / train.len() as f64);
        lr *= cfg.lr_decay;
    }
    model.trained = true;
    let report = TrainReport {
        epoch_losses,
        train_accuracy: model.accuracy(train)?,
        validation_accuracy: validation.map(|v| model.accuracy(v)).transpose()?,
    };
    Ok((model, report))
}
