//! Deterministic training, evaluation, and prediction.
//!
//! All randomness flows from one seed through separate ChaCha streams —
//! stream 0 initializes the network, stream 1 shuffles each epoch, stream
//! 2 drives dropout — so a (seed, data, config) triple fully determines
//! the parameter trajectory, bit for bit.
//!
//! Class II (appliance present) is the positive class for the confusion
//! counts. Probability ties at exactly 0.5 predict Class I.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::Label;
use crate::heatmap::RgbImage;
use crate::nn::{AdamHyper, Network, NetworkAdam, NetworkConfig, NnError, Tensor};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("the {0} set is empty")]
    EmptySet(&'static str),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        Self { epochs: 125, batch_size: 32, lr: 1e-4, seed, shuffle_each_epoch: true }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::BadConfig("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(TrainError::BadConfig(
                "batch size must be at least 2 (batchnorm needs batch statistics)".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::BadConfig(format!("learning rate must be > 0, got {}", self.lr)));
        }
        Ok(())
    }
}

/// Per-epoch training record, 1-based epoch numbering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: u32,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

/// Confusion counts with Class II as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Metrics {
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl Metrics {
    pub fn total(&self) -> usize {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    /// (TP + TN) / (TP + TN + FP + FN).
    pub fn accuracy(&self) -> f64 {
        (self.true_pos + self.true_neg) as f64 / self.total() as f64
    }

    pub fn tally(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::ClassII, Label::ClassII) => self.true_pos += 1,
            (Label::ClassI, Label::ClassI) => self.true_neg += 1,
            (Label::ClassII, Label::ClassI) => self.false_pos += 1,
            (Label::ClassI, Label::ClassII) => self.false_neg += 1,
        }
    }
}

/// One decoded training example: pixel tensor [3, S, S] scaled to [0, 1],
/// plus its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub pixels: Tensor,
    pub label: Label,
}

/// Decode an image into network input: channels-first, each byte mapped
/// to [0, 1].
pub fn image_to_tensor(image: &RgbImage) -> Tensor {
    let (w, h) = (image.width(), image.height());
    let mut t = Tensor::zeros(&[3, h, w]);
    let data = image.data();
    let out = t.data_mut();
    let plane = h * w;
    for i in 0..plane {
        for c in 0..3 {
            out[c * plane + i] = data[i * 3 + c] as f64 / 255.0;
        }
    }
    t
}

pub fn to_samples(images: &[(RgbImage, Label)]) -> Vec<Sample> {
    images
        .iter()
        .map(|(img, label)| Sample { pixels: image_to_tensor(img), label: *label })
        .collect()
}

/// Class index inside label/probability rows: Class I = 0, Class II = 1.
fn label_index(label: Label) -> usize {
    match label {
        Label::ClassI => 0,
        Label::ClassII => 1,
    }
}

/// The label a probability row predicts; an exact tie goes to Class I.
fn predicted_label(row: &[f64]) -> Label {
    if row[1] > row[0] {
        Label::ClassII
    } else {
        Label::ClassI
    }
}

fn batch_tensors(samples: &[Sample], indices: &[usize], side: usize) -> (Tensor, Tensor) {
    let n = indices.len();
    let plane = 3 * side * side;
    let mut input = Tensor::zeros(&[n, 3, side, side]);
    let mut labels = Tensor::zeros(&[n, 2]);
    for (row, &i) in indices.iter().enumerate() {
        input.data_mut()[row * plane..][..plane].copy_from_slice(samples[i].pixels.data());
        labels.data_mut()[row * 2 + label_index(samples[i].label)] = 1.0;
    }
    (input, labels)
}

fn check_samples(
    samples: &[Sample],
    side: usize,
    what: &'static str,
) -> Result<(), TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptySet(what));
    }
    for s in samples {
        if s.pixels.shape() != [3, side, side] {
            return Err(TrainError::Nn(NnError::ShapeMismatch(format!(
                "{what} sample has shape {:?}, network expects [3, {side}, {side}]",
                s.pixels.shape()
            ))));
        }
    }
    Ok(())
}

/// Split `n` sample indices into training batches. The trailing remainder
/// is kept only if it holds at least two samples, since batchnorm cannot
/// normalize a single-sample batch.
fn plan_batches(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start + batch_size <= n {
        out.push(start..start + batch_size);
        start += batch_size;
    }
    if n - start >= 2 {
        out.push(start..n);
    }
    out
}

/// Train a fresh network. Per epoch: shuffle, minibatch forward/backward
/// with Adam updates, then one inference-mode pass over the validation
/// set. Returns the final network and the full epoch history.
pub fn train(
    net_config: NetworkConfig,
    train_config: &TrainConfig,
    train_set: &[Sample],
    val_set: &[Sample],
) -> Result<(Network, Vec<EpochStats>), TrainError> {
    train_config.validate()?;
    check_samples(train_set, net_config.input_side, "training")?;
    check_samples(val_set, net_config.input_side, "validation")?;

    let mut net = Network::new(net_config, train_config.seed)?;
    let mut adam = NetworkAdam::new(&net);
    let hp = AdamHyper::with_lr(train_config.lr);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    dropout_rng.set_stream(2);

    let side = net_config.input_side;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(train_config.epochs as usize);
    for epoch in 1..=train_config.epochs {
        if train_config.shuffle_each_epoch {
            order.shuffle(&mut shuffle_rng);
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for range in plan_batches(order.len(), train_config.batch_size) {
            let indices = &order[range];
            let (input, labels) = batch_tensors(train_set, indices, side);
            let (loss, cache) = net.forward_train(&input, &labels, &mut dropout_rng)?;
            let grads = net.backward(&cache)?;
            net.adam_step(&grads, &mut adam, &hp)?;

            loss_sum += loss * indices.len() as f64;
            seen += indices.len();
            for (row, &i) in indices.iter().enumerate() {
                let probs = &cache.probs.data()[row * 2..][..2];
                if predicted_label(probs) == train_set[i].label {
                    correct += 1;
                }
            }
        }
        if seen == 0 {
            return Err(TrainError::BadConfig(format!(
                "no usable batches: {} samples at batch size {}",
                train_set.len(),
                train_config.batch_size
            )));
        }
        let val_accuracy = evaluate(&net, val_set)?.accuracy();
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_accuracy: correct as f64 / seen as f64,
            val_accuracy,
        });
    }
    Ok((net, history))
}

/// Confusion counts of the network's inference-mode predictions.
pub fn evaluate(net: &Network, set: &[Sample]) -> Result<Metrics, TrainError> {
    if set.is_empty() {
        return Err(TrainError::EmptySet("evaluation"));
    }
    let side = net.config().input_side;
    check_samples(set, side, "evaluation")?;
    let mut metrics = Metrics::default();
    let all: Vec<usize> = (0..set.len()).collect();
    for chunk in all.chunks(32) {
        let (input, _) = batch_tensors(set, chunk, side);
        let probs = net.infer(&input)?;
        for (row, &i) in chunk.iter().enumerate() {
            metrics.tally(predicted_label(&probs.data()[row * 2..][..2]), set[i].label);
        }
    }
    Ok(metrics)
}

/// Classify one image tensor ([3, S, S]). Returns the label and the
/// (Class I, Class II) probabilities.
pub fn predict(net: &Network, pixels: &Tensor) -> Result<(Label, [f64; 2]), TrainError> {
    let side = net.config().input_side;
    if pixels.shape() != [3, side, side] {
        return Err(TrainError::Nn(NnError::ShapeMismatch(format!(
            "predict expects [3, {side}, {side}], got {:?}",
            pixels.shape()
        ))));
    }
    let input = pixels.clone().reshape(&[1, 3, side, side]);
    let probs = net.infer(&input)?;
    let row = [probs.data()[0], probs.data()[1]];
    Ok((predicted_label(&row), row))
}

/// Plain-text history table, one row per epoch, ready for plotting.
pub fn write_history<W: Write>(history: &[EpochStats], mut writer: W) -> Result<(), TrainError> {
    writeln!(writer, "{:>5}  {:>12}  {:>9}  {:>9}", "epoch", "train_loss", "train_acc", "val_acc")?;
    for s in history {
        writeln!(
            writer,
            "{:>5}  {:>12.6}  {:>9.4}  {:>9.4}",
            s.epoch, s.train_loss, s.train_accuracy, s.val_accuracy
        )?;
    }
    Ok(())
}
