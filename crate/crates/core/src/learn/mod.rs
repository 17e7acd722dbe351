//! Learnability probe: train a small CNN from scratch on the dot-pattern
//! classification tasks.

pub mod export;
pub mod gradcheck;
pub mod net;

use std::path::Path;
use std::time::Instant;

use ndarray::{Array4, ArrayView4};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dots::{gen_training_dataset, ClassDataset, DatasetOptions, Task};
use crate::error::{Error, Result};
use crate::rng;

pub use gradcheck::{gradient_check, GradCheckOptions, GradCheckReport};
pub use net::{Scalar, SmallNet, Widths};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.01, batch_size: 32, epochs: 20, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(format!(
                "learning_rate, batch_size and epochs must be positive (got {}, {}, {})",
                self.learning_rate, self.batch_size, self.epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedNet {
    pub net: SmallNet<f32>,
    pub curve: Vec<EpochStats>,
}

/// Dataset images as `[n, size, size, 1]` intensities in `[0, 1]`.
pub fn dataset_tensor(dataset: &ClassDataset) -> Array4<f32> {
    let s = dataset.size as usize;
    let mut x = Array4::zeros((dataset.samples.len(), s, s, 1));
    let dst = x.as_slice_mut().expect("standard layout");
    for (i, sample) in dataset.samples.iter().enumerate() {
        for (d, &v) in dst[i * s * s..(i + 1) * s * s].iter_mut().zip(&sample.canvas.gray()) {
            *d = v as f32 / 255.0;
        }
    }
    x
}

fn check_dataset(net: &SmallNet<f32>, dataset: &ClassDataset) -> Result<()> {
    if dataset.samples.is_empty() {
        return Err(Error::InvalidDataset("dataset is empty".into()));
    }
    if dataset.size as usize != net.input_size {
        return Err(Error::InvalidDataset(format!(
            "images are {} px, network expects {}",
            dataset.size, net.input_size
        )));
    }
    if let Some(s) = dataset.samples.iter().find(|s| s.label >= net.n_classes) {
        return Err(Error::InvalidDataset(format!("label {} out of range for {} classes", s.label, net.n_classes)));
    }
    Ok(())
}

fn gather(x: ArrayView4<f32>, idx: &[usize]) -> Array4<f32> {
    let (_, h, w, c) = x.dim();
    let plane = h * w * c;
    let src = x.as_slice().expect("standard layout");
    let mut out = Array4::zeros((idx.len(), h, w, c));
    let dst = out.as_slice_mut().expect("standard layout");
    for (k, &i) in idx.iter().enumerate() {
        dst[k * plane..(k + 1) * plane].copy_from_slice(&src[i * plane..(i + 1) * plane]);
    }
    out
}

/// Mini-batch SGD on mean cross-entropy. Single-threaded and deterministic
/// given `cfg.seed`.
pub fn train(mut net: SmallNet<f32>, dataset: &ClassDataset, cfg: &TrainConfig) -> Result<TrainedNet> {
    cfg.validate()?;
    check_dataset(&net, dataset)?;
    let x = dataset_tensor(dataset);
    let labels: Vec<usize> = dataset.samples.iter().map(|s| s.label).collect();
    let n = labels.len();
    let lr = cfg.learning_rate as f32;
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::rng_from(cfg.seed, &[rng::tag("epoch-order"), epoch as u64]));
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let xb = gather(x.view(), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grad, c) = net.loss_and_grad(xb.view(), &yb)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            net.sgd_step(&grad, lr);
            loss_sum += loss as f64 * batch.len() as f64;
            correct += c;
        }
        if !net.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        curve.push(EpochStats { epoch, train_loss: loss_sum / n as f64, train_accuracy: correct as f64 / n as f64 });
    }
    Ok(TrainedNet { net, curve })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn predict(net: &SmallNet<f32>, dataset: &ClassDataset) -> Result<Vec<usize>> {
    check_dataset(net, dataset)?;
    let x = dataset_tensor(dataset);
    let mut out = Vec::with_capacity(dataset.samples.len());
    let idx: Vec<usize> = (0..dataset.samples.len()).collect();
    for chunk in idx.chunks(100) {
        let logits = net.forward(gather(x.view(), chunk).view())?.logits;
        for row in logits.rows() {
            out.push((0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best }));
        }
    }
    Ok(out)
}

pub fn evaluate(net: &SmallNet<f32>, dataset: &ClassDataset) -> Result<Evaluation> {
    let predicted = predict(net, dataset)?;
    let mut confusion = vec![vec![0usize; net.n_classes]; net.n_classes];
    for (s, &p) in dataset.samples.iter().zip(&predicted) {
        confusion[s.label][p] += 1;
    }
    let correct: usize = (0..net.n_classes).map(|k| confusion[k][k]).sum();
    Ok(Evaluation { accuracy: correct as f64 / predicted.len() as f64, confusion })
}

/// Centered moving average over `window` epochs, truncated at the ends.
pub fn smoothed_losses(curve: &[EpochStats], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..curve.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(curve.len());
            curve[lo..hi].iter().map(|e| e.train_loss).sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

pub fn write_loss_curve(path: &Path, curve: &[EpochStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "train_accuracy"])?;
    for e in curve {
        w.write_record([e.epoch.to_string(), format!("{:.6}", e.train_loss), format!("{:.6}", e.train_accuracy)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_confusion(path: &Path, task: Task, confusion: &[Vec<usize>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["true_label".to_string()];
    header.extend(task.labels().iter().map(|l| format!("pred_{l}")));
    w.write_record(&header)?;
    for (label, row) in task.labels().iter().zip(confusion) {
        let mut rec = vec![label.to_string()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnabilityConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub train: TrainConfig,
    pub size: u32,
}

impl Default for LearnabilityConfig {
    fn default() -> Self {
        LearnabilityConfig { n_train: 6000, n_test: 200, train: TrainConfig::default(), size: 64 }
    }
}

#[derive(Debug, Clone)]
pub struct LearnabilityResult {
    pub task: Task,
    pub shuffled_labels: bool,
    pub evaluation: Evaluation,
    pub trained: TrainedNet,
    pub seconds: f64,
}

/// Generate the task dataset, train from scratch and evaluate on the
/// held-out split. With `shuffled_labels` the training labels are permuted
/// and the test labels kept.
pub fn run_learnability(task: Task, cfg: &LearnabilityConfig, shuffled_labels: bool) -> Result<LearnabilityResult> {
    let started = Instant::now();
    let opts = DatasetOptions { size: cfg.size, ..DatasetOptions::default() };
    let data_seed = rng::derive_seed(cfg.train.seed, &[rng::tag("dataset"), rng::tag(task.as_str())]);
    let (mut train_set, test_set) = gen_training_dataset(task, cfg.n_train, cfg.n_test, data_seed, &opts)?;
    if shuffled_labels {
        train_set = train_set.with_shuffled_labels(rng::derive_seed(data_seed, &[rng::tag("control")]));
    }
    let net = SmallNet::new(cfg.size as usize, task.class_count(), Widths::DEFAULT, cfg.train.seed)?;
    let trained = train(net, &train_set, &cfg.train)?;
    let evaluation = evaluate(&trained.net, &test_set)?;
    Ok(LearnabilityResult { task, shuffled_labels, evaluation, trained, seconds: started.elapsed().as_secs_f64() })
}
