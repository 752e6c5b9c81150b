//! Framework-free differentiable classifier with an evidential or softmax head.

mod network;
mod optim;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};
use crate::evidential::{
    loss_gradient_wrt_alpha, opinion_from_evidence, sample_loss, AnnealingSchedule, DirichletOpinion, EvidenceVector,
    OneHotLabel,
};
use network::{Network, Trace};
pub use optim::AdamState;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Height, width and channel count of image inputs (channel-first layout).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// Fully connected stack; `layer_sizes` includes input and output widths.
    Mlp { layer_sizes: Vec<usize> },
    /// One convolution, hidden activation, max pooling, then a dense layer to the classes.
    SmallConv { channels: usize, kernel: usize, pooling: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceActivation {
    #[default]
    Softplus,
    Relu,
    /// `max(0, z / (1 + |z|))`
    ClampedSoftsign,
}

impl EvidenceActivation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            EvidenceActivation::Softplus => softplus(z),
            EvidenceActivation::Relu => z.max(0.0),
            EvidenceActivation::ClampedSoftsign => (z / (1.0 + z.abs())).max(0.0),
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            EvidenceActivation::Softplus => sigmoid(z),
            EvidenceActivation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            EvidenceActivation::ClampedSoftsign => {
                if z > 0.0 {
                    1.0 / ((1.0 + z) * (1.0 + z))
                } else {
                    0.0
                }
            }
        }
    }
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    Evidential {
        #[serde(default)]
        activation: EvidenceActivation,
    },
    Softmax,
}

impl Head {
    pub fn is_evidential(&self) -> bool {
        matches!(self, Head::Evidential { .. })
    }
}

impl Default for Head {
    fn default() -> Self {
        Head::Evidential { activation: EvidenceActivation::Softplus }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    #[default]
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub head: Head,
    #[serde(default)]
    pub hidden_activation: HiddenActivation,
    pub input_dim: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub image_shape: Option<ImageShape>,
    pub seed: u64,
}

impl ModelConfig {
    pub fn mlp(layer_sizes: Vec<usize>, head: Head, seed: u64) -> Self {
        Self {
            input_dim: layer_sizes.first().copied().unwrap_or(0),
            num_classes: layer_sizes.last().copied().unwrap_or(0),
            architecture: Architecture::Mlp { layer_sizes },
            head,
            hidden_activation: HiddenActivation::Relu,
            image_shape: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.num_classes < 2 {
            errors.push(FieldError::new("model.num_classes", "need at least 2 classes"));
        }
        if self.input_dim == 0 {
            errors.push(FieldError::new("model.input_dim", "must be positive"));
        }
        match &self.architecture {
            Architecture::Mlp { layer_sizes } => {
                if layer_sizes.len() < 2 {
                    errors.push(FieldError::new("model.architecture.layer_sizes", "need input and output sizes"));
                }
                if layer_sizes.contains(&0) {
                    errors.push(FieldError::new("model.architecture.layer_sizes", "layer sizes must be positive"));
                }
                if layer_sizes.first() != Some(&self.input_dim) {
                    errors.push(FieldError::new("model.architecture.layer_sizes", "first size must equal input_dim"));
                }
                if layer_sizes.last() != Some(&self.num_classes) {
                    errors.push(FieldError::new("model.architecture.layer_sizes", "last size must equal num_classes"));
                }
            }
            Architecture::SmallConv { channels, kernel, pooling } => {
                if *channels == 0 || *kernel == 0 || *pooling == 0 {
                    errors.push(FieldError::new("model.architecture", "channels, kernel and pooling must be positive"));
                }
                match self.image_shape {
                    None => errors.push(FieldError::new("model.image_shape", "required by the convolutional architecture")),
                    Some(shape) => {
                        if shape.len() != self.input_dim {
                            errors.push(FieldError::new("model.image_shape", "height * width * channels must equal input_dim"));
                        }
                        if *kernel > shape.height || *kernel > shape.width {
                            errors.push(FieldError::new("model.architecture.kernel", "larger than the image"));
                        } else if *pooling > shape.height - kernel + 1 || *pooling > shape.width - kernel + 1 {
                            errors.push(FieldError::new("model.architecture.pooling", "larger than the feature map"));
                        }
                    }
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_epsilon")]
    pub adam_epsilon: f64,
    #[serde(default)]
    pub annealing: AnnealingSchedule,
    #[serde(default)]
    pub shuffle_seed: u64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.0005,
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_epsilon: default_epsilon(),
            annealing: AnnealingSchedule::default(),
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.epochs == 0 {
            errors.push(FieldError::new("train.epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            errors.push(FieldError::new("train.batch_size", "must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            errors.push(FieldError::new("train.learning_rate", "must be a positive number"));
        }
        for (name, beta) in [("train.adam_beta1", self.adam_beta1), ("train.adam_beta2", self.adam_beta2)] {
            if !(beta > 0.0 && beta < 1.0) {
                errors.push(FieldError::new(name, "must lie strictly between 0 and 1"));
            }
        }
        if !(self.adam_epsilon.is_finite() && self.adam_epsilon > 0.0) {
            errors.push(FieldError::new("train.adam_epsilon", "must be positive"));
        }
        if self.annealing.saturation_epoch == 0 {
            errors.push(FieldError::new("train.annealing.saturation_epoch", "must be positive"));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

/// Raw output of the head for one input.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadOutput {
    Evidence(EvidenceVector),
    Probabilities(Vec<f64>),
}

/// Per-sample prediction: a Dirichlet opinion or softmax probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prediction {
    Evidential(DirichletOpinion),
    Softmax { probs: Vec<f64> },
}

impl Prediction {
    /// Expected class probabilities (`α/S` or softmax).
    pub fn probabilities(&self) -> &[f64] {
        match self {
            Prediction::Evidential(o) => &o.expected_probs,
            Prediction::Softmax { probs } => probs,
        }
    }

    pub fn predicted_class(&self) -> usize {
        argmax(self.probabilities())
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    config: ModelConfig,
    network: Network,
    params: Vec<f64>,
    optimizer: AdamState,
}

/// Deterministically initialize a model from its config seed.
pub fn init_model(config: &ModelConfig) -> Result<ClassifierModel> {
    config.validate()?;
    let network = Network::build(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = network.init_params(&mut rng);
    let optimizer = AdamState::new(params.len());
    Ok(ClassifierModel { config: config.clone(), network, params, optimizer })
}

/// Loss value and summed parameter gradient over a set of samples.
#[derive(Debug, Clone)]
pub struct LossAndGradient {
    pub loss: f64,
    pub gradient: Vec<f64>,
}

impl ClassifierModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn set_parameters(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch { expected: self.params.len(), found: params.len() });
        }
        self.params = params;
        Ok(())
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.optimizer
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch { expected: self.config.input_dim, found: x.len() });
        }
        Ok(())
    }

    fn logits_into(&self, x: &[f64], trace: &mut Trace) {
        self.network.forward(&self.params, x, trace);
    }

    fn head_output(&self, logits: &[f64]) -> HeadOutput {
        match self.config.head {
            Head::Evidential { activation } => {
                let e = logits.iter().map(|z| activation.apply(*z)).collect();
                HeadOutput::Evidence(EvidenceVector::new(e).expect("activation yields non-negative evidence"))
            }
            Head::Softmax => HeadOutput::Probabilities(softmax(logits)),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<HeadOutput> {
        self.check_input(x)?;
        let mut trace = Trace::default();
        self.logits_into(x, &mut trace);
        Ok(self.head_output(trace.output()))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        Ok(match self.forward(x)? {
            HeadOutput::Evidence(e) => Prediction::Evidential(opinion_from_evidence(&e)),
            HeadOutput::Probabilities(probs) => Prediction::Softmax { probs },
        })
    }

    /// One prediction per row, in row order.
    pub fn predict_batch<R: AsRef<[f64]> + Sync>(&self, rows: &[R]) -> Result<Vec<Prediction>> {
        rows.par_iter().map(|r| self.predict(r.as_ref())).collect()
    }

    pub fn accuracy<R: AsRef<[f64]> + Sync>(&self, rows: &[R], labels: &[usize]) -> Result<f64> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), found: labels.len() });
        }
        if rows.is_empty() {
            return Err(Error::InvalidInput("accuracy over an empty set".into()));
        }
        let preds = self.predict_batch(rows)?;
        let hits = preds.iter().zip(labels).filter(|(p, y)| p.predicted_class() == **y).count();
        Ok(hits as f64 / rows.len() as f64)
    }

    /// Per-sample loss and gradient w.r.t. the logits.
    fn head_loss(&self, logits: &[f64], label: &OneHotLabel, lambda: f64, grad: &mut Vec<f64>) -> Result<f64> {
        grad.clear();
        match self.config.head {
            Head::Evidential { activation } => {
                let alpha: Vec<f64> = logits.iter().map(|z| activation.apply(*z) + 1.0).collect();
                let loss = sample_loss(&alpha, label, lambda)?;
                let d_alpha = loss_gradient_wrt_alpha(&alpha, label, lambda)?;
                grad.extend(logits.iter().zip(d_alpha).map(|(z, g)| g * activation.derivative(*z)));
                Ok(loss)
            }
            Head::Softmax => {
                let probs = softmax(logits);
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let log_norm = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                grad.extend(probs.iter().enumerate().map(|(k, p)| p - label.value(k)));
                Ok(log_norm - logits[label.class()])
            }
        }
    }

    fn label(&self, class: usize) -> Result<OneHotLabel> {
        OneHotLabel::new(class, self.config.num_classes)
    }

    /// Summed loss over the samples; `lambda` weights the KL term of the evidential head
    /// and is ignored by the softmax head.
    pub fn loss<R: AsRef<[f64]>>(&self, rows: &[R], labels: &[usize], lambda: f64) -> Result<f64> {
        Ok(self.loss_and_gradient(rows, labels, lambda)?.loss)
    }

    /// Summed loss and its gradient w.r.t. every parameter, by backpropagation.
    pub fn loss_and_gradient<R: AsRef<[f64]>>(&self, rows: &[R], labels: &[usize], lambda: f64) -> Result<LossAndGradient> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), found: labels.len() });
        }
        let mut gradient = vec![0.0; self.params.len()];
        let mut trace = Trace::default();
        let mut dlogits = Vec::new();
        let mut loss = 0.0;
        for (row, class) in rows.iter().zip(labels) {
            let row = row.as_ref();
            self.check_input(row)?;
            let y = self.label(*class)?;
            self.logits_into(row, &mut trace);
            loss += self.head_loss(trace.output(), &y, lambda, &mut dlogits)?;
            self.network.backward(&self.params, &mut trace, &dlogits, &mut gradient);
        }
        Ok(LossAndGradient { loss, gradient })
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Statistics for one finished training epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: u32,
    pub lambda: f64,
    pub mean_loss: f64,
}

/// Fresh initialization followed by `epochs` epochs of shuffled minibatch Adam.
///
/// Each minibatch step uses the mean per-sample loss. The KL weight of the
/// evidential head follows the annealing schedule with epochs counted from 1.
pub fn train_from_scratch<R: AsRef<[f64]>>(
    config: &ModelConfig,
    rows: &[R],
    labels: &[usize],
    tcfg: &TrainConfig,
) -> Result<ClassifierModel> {
    train_with_monitor(config, rows, labels, tcfg, |_, _| {})
}

/// [`train_from_scratch`] with a callback after each epoch.
pub fn train_with_monitor<R: AsRef<[f64]>>(
    config: &ModelConfig,
    rows: &[R],
    labels: &[usize],
    tcfg: &TrainConfig,
    mut monitor: impl FnMut(&EpochReport, &ClassifierModel),
) -> Result<ClassifierModel> {
    tcfg.validate()?;
    if rows.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: rows.len(), found: labels.len() });
    }
    if let Some(bad) = labels.iter().find(|c| **c >= config.num_classes) {
        return Err(Error::InvalidInput(format!("label {bad} out of range for {} classes", config.num_classes)));
    }
    let mut model = init_model(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.shuffle_seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut trace = Trace::default();
    let mut dlogits = Vec::new();
    let mut gradient = vec![0.0; model.params.len()];

    for epoch in 1..=tcfg.epochs {
        let lambda = if config.head.is_evidential() { tcfg.annealing.lambda(epoch)? } else { 0.0 };
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(tcfg.batch_size) {
            gradient.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let row = rows[i].as_ref();
                model.check_input(row)?;
                let y = model.label(labels[i])?;
                model.logits_into(row, &mut trace);
                epoch_loss += model.head_loss(trace.output(), &y, lambda, &mut dlogits)?;
                model.network.backward(&model.params, &mut trace, &dlogits, &mut gradient);
            }
            let scale = 1.0 / batch.len() as f64;
            gradient.iter_mut().for_each(|g| *g *= scale);
            model.optimizer.step(&mut model.params, &gradient, tcfg);
        }
        let report = EpochReport { epoch, lambda, mean_loss: epoch_loss / rows.len() as f64 };
        monitor(&report, &model);
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelCheckpoint {
    schema_version: u32,
    config: ModelConfig,
    parameters: Vec<f64>,
}

impl ClassifierModel {
    pub fn to_checkpoint_json(&self) -> Result<String> {
        let ck = ModelCheckpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            config: self.config.clone(),
            parameters: self.params.clone(),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    /// Restore config and parameters; optimizer state starts fresh.
    pub fn from_checkpoint_json(json: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(json)?;
        let version = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: version, expected: CHECKPOINT_SCHEMA_VERSION });
        }
        let ck: ModelCheckpoint = serde_json::from_value(value)?;
        let mut model = init_model(&ck.config)?;
        model.set_parameters(ck.parameters)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests;
