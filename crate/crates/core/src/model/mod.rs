//! Differentiable loss models, dataset generation and ingestion, and IID
//! partitioning. Everything here is pure given `(inputs, RNG stream)`, so
//! per-node evaluation can run in any order.

mod idx;
mod synthetic;
mod vector;

pub use idx::load_idx;
pub use synthetic::two_class_blobs;
pub use vector::EstimateVector;

use rand::Rng;

use crate::error::{Error, Result};

/// One training or test sample: a feature vector plus a class label.
/// The quadratic model treats `features` as the regression target and
/// ignores the label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Sample { features, label }
    }
}

/// A node's private slice of the training set. Shards are disjoint across
/// nodes and drawn IID from the global dataset.
#[derive(Debug, Clone)]
pub struct DataShard {
    pub samples: Vec<Sample>,
    pub owner: usize,
}

impl DataShard {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Loss models with hand-coded analytic gradients.
///
/// All parameters live in one flat vector:
/// - quadratic: the point itself (`dim` entries);
/// - softmax regression: weights row-major `classes x input_dim`, then biases;
/// - MLP: `W1 (hidden x input_dim), b1, W2 (classes x hidden), b2` with a
///   tanh hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossModel {
    /// l(x, xi) = 0.5 * ||x - xi.features||^2
    Quadratic { dim: usize },
    /// Multinomial logistic regression with cross-entropy loss.
    SoftmaxRegression { input_dim: usize, classes: usize },
    /// One hidden layer (tanh), softmax cross-entropy head.
    Mlp {
        input_dim: usize,
        hidden: usize,
        classes: usize,
    },
}

impl LossModel {
    /// Total number of parameters d.
    pub fn dimension(&self) -> usize {
        match *self {
            LossModel::Quadratic { dim } => dim,
            LossModel::SoftmaxRegression { input_dim, classes } => classes * (input_dim + 1),
            LossModel::Mlp {
                input_dim,
                hidden,
                classes,
            } => hidden * (input_dim + 1) + classes * (hidden + 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            LossModel::Quadratic { dim } => dim,
            LossModel::SoftmaxRegression { input_dim, .. } => input_dim,
            LossModel::Mlp { input_dim, .. } => input_dim,
        }
    }

    /// Number of output classes, or `None` for the regression-only model.
    pub fn classes(&self) -> Option<usize> {
        match *self {
            LossModel::Quadratic { .. } => None,
            LossModel::SoftmaxRegression { classes, .. } => Some(classes),
            LossModel::Mlp { classes, .. } => Some(classes),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LossModel::Quadratic { .. } => "quadratic",
            LossModel::SoftmaxRegression { .. } => "softmax",
            LossModel::Mlp { .. } => "mlp",
        }
    }

    fn check_estimate(&self, x: &EstimateVector) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                context: "estimate",
                expected: self.dimension(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        if s.features.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "sample features",
                expected: self.input_dim(),
                got: s.features.len(),
            });
        }
        Ok(())
    }
}

/// Mean loss of estimate `x` over a non-empty batch.
pub fn loss(model: &LossModel, x: &EstimateVector, batch: &[Sample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    model.check_estimate(x)?;
    let mut total = 0.0;
    for sample in batch {
        model.check_sample(sample)?;
        total += sample_loss(model, x.as_slice(), sample);
    }
    Ok(total / batch.len() as f64)
}

/// Mean gradient of the loss over a non-empty batch, length d.
pub fn gradient(model: &LossModel, x: &EstimateVector, batch: &[Sample]) -> Result<EstimateVector> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    model.check_estimate(x)?;
    let mut grad = vec![0.0; model.dimension()];
    for sample in batch {
        model.check_sample(sample)?;
        accumulate_sample_gradient(model, x.as_slice(), sample, &mut grad);
    }
    let inv = 1.0 / batch.len() as f64;
    for g in grad.iter_mut() {
        *g *= inv;
    }
    Ok(EstimateVector::new(grad))
}

fn sample_loss(model: &LossModel, x: &[f64], sample: &Sample) -> f64 {
    match *model {
        LossModel::Quadratic { .. } => {
            0.5 * x
                .iter()
                .zip(sample.features.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        }
        LossModel::SoftmaxRegression { input_dim, classes } => {
            let z = linear_logits(x, &sample.features, input_dim, classes);
            cross_entropy(&z, sample.label)
        }
        LossModel::Mlp {
            input_dim,
            hidden,
            classes,
        } => {
            let (_, z) = mlp_forward(x, &sample.features, input_dim, hidden, classes);
            cross_entropy(&z, sample.label)
        }
    }
}

fn accumulate_sample_gradient(model: &LossModel, x: &[f64], sample: &Sample, grad: &mut [f64]) {
    match *model {
        LossModel::Quadratic { .. } => {
            for ((g, a), b) in grad.iter_mut().zip(x.iter()).zip(sample.features.iter()) {
                *g += a - b;
            }
        }
        LossModel::SoftmaxRegression { input_dim, classes } => {
            let z = linear_logits(x, &sample.features, input_dim, classes);
            let p = softmax(&z);
            for c in 0..classes {
                let dz = p[c] - if c == sample.label { 1.0 } else { 0.0 };
                let row = c * input_dim;
                for (j, f) in sample.features.iter().enumerate() {
                    grad[row + j] += dz * f;
                }
                grad[classes * input_dim + c] += dz;
            }
        }
        LossModel::Mlp {
            input_dim,
            hidden,
            classes,
        } => {
            let (h, z) = mlp_forward(x, &sample.features, input_dim, hidden, classes);
            let p = softmax(&z);
            let (w1_len, b1_len) = (hidden * input_dim, hidden);
            let w2_off = w1_len + b1_len;
            let b2_off = w2_off + classes * hidden;

            let mut dh = vec![0.0; hidden];
            for c in 0..classes {
                let dz = p[c] - if c == sample.label { 1.0 } else { 0.0 };
                let row = w2_off + c * hidden;
                for k in 0..hidden {
                    grad[row + k] += dz * h[k];
                    dh[k] += dz * x[row + k];
                }
                grad[b2_off + c] += dz;
            }
            for k in 0..hidden {
                let da = dh[k] * (1.0 - h[k] * h[k]);
                let row = k * input_dim;
                for (j, f) in sample.features.iter().enumerate() {
                    grad[row + j] += da * f;
                }
                grad[w1_len + k] += da;
            }
        }
    }
}

fn linear_logits(x: &[f64], features: &[f64], input_dim: usize, classes: usize) -> Vec<f64> {
    let mut z = vec![0.0; classes];
    for (c, zc) in z.iter_mut().enumerate() {
        let row = c * input_dim;
        let mut acc = x[classes * input_dim + c];
        for (j, f) in features.iter().enumerate() {
            acc += x[row + j] * f;
        }
        *zc = acc;
    }
    z
}

fn mlp_forward(
    x: &[f64],
    features: &[f64],
    input_dim: usize,
    hidden: usize,
    classes: usize,
) -> (Vec<f64>, Vec<f64>) {
    let w1_len = hidden * input_dim;
    let w2_off = w1_len + hidden;
    let b2_off = w2_off + classes * hidden;

    let mut h = vec![0.0; hidden];
    for (k, hk) in h.iter_mut().enumerate() {
        let row = k * input_dim;
        let mut acc = x[w1_len + k];
        for (j, f) in features.iter().enumerate() {
            acc += x[row + j] * f;
        }
        *hk = acc.tanh();
    }
    let mut z = vec![0.0; classes];
    for (c, zc) in z.iter_mut().enumerate() {
        let row = w2_off + c * hidden;
        let mut acc = x[b2_off + c];
        for (k, hk) in h.iter().enumerate() {
            acc += x[row + k] * hk;
        }
        *zc = acc;
    }
    (h, z)
}

/// Log-sum-exp stabilized cross-entropy of logits against a label.
fn cross_entropy(z: &[f64], label: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[label]
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Draw `batch_size` samples from the shard with replacement, using only the
/// node's private RNG stream.
pub fn sample_batch<R: Rng>(
    shard: &DataShard,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Sample>> {
    if shard.is_empty() {
        return Err(Error::Empty("shard"));
    }
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let idx = rng.random_range(0..shard.samples.len());
        batch.push(shard.samples[idx].clone());
    }
    Ok(batch)
}

/// Shuffle the dataset, then split it into `n` disjoint near-equal shards
/// (sizes differ by at most one; earlier shards take the remainder).
pub fn partition_iid<R: Rng>(dataset: &[Sample], n: usize, rng: &mut R) -> Result<Vec<DataShard>> {
    if n == 0 {
        return Err(Error::Config("cannot partition into 0 shards".into()));
    }
    if dataset.len() < n {
        return Err(Error::Config(format!(
            "dataset of {} samples cannot cover {} nodes",
            dataset.len(),
            n
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(rng);

    let base = dataset.len() / n;
    let remainder = dataset.len() % n;
    let mut shards = Vec::with_capacity(n);
    let mut cursor = 0;
    for owner in 0..n {
        let size = base + usize::from(owner < remainder);
        let samples = order[cursor..cursor + size]
            .iter()
            .map(|&i| dataset[i].clone())
            .collect();
        cursor += size;
        shards.push(DataShard { samples, owner });
    }
    Ok(shards)
}

/// Per-class scores used for prediction (logits).
fn class_scores(model: &LossModel, x: &[f64], features: &[f64]) -> Vec<f64> {
    match *model {
        LossModel::Quadratic { .. } => unreachable!("quadratic model has no class scores"),
        LossModel::SoftmaxRegression { input_dim, classes } => {
            linear_logits(x, features, input_dim, classes)
        }
        LossModel::Mlp {
            input_dim,
            hidden,
            classes,
        } => mlp_forward(x, features, input_dim, hidden, classes).1,
    }
}

/// Fraction of correct argmax predictions over a non-empty test set.
/// Score ties resolve to the lowest class index.
pub fn accuracy(model: &LossModel, x: &EstimateVector, testset: &[Sample]) -> Result<f64> {
    if model.classes().is_none() {
        return Err(Error::UnsupportedMetric(model.kind_name()));
    }
    if testset.is_empty() {
        return Err(Error::Empty("testset"));
    }
    model.check_estimate(x)?;
    let mut correct = 0usize;
    for sample in testset {
        model.check_sample(sample)?;
        let scores = class_scores(model, x.as_slice(), &sample.features);
        let mut best = 0usize;
        for (c, s) in scores.iter().enumerate().skip(1) {
            if *s > scores[best] {
                best = c;
            }
        }
        if best == sample.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / testset.len() as f64)
}
