//! Ordering predictors: three small MLP variants trained with Adam to pick
//! the optimal permutation class out of `n_nets!`.

mod checkpoint;
mod network;

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use network::{loss_ce, loss_mse, softmax, Activation, Adam, Dense, Gradients, Loss, Network, OutputMap, PROB_FLOOR};

use crate::error::{Error, Result};
use crate::features::FeatureMode;
use crate::ordering::{factorial, NetOrdering};

/// Epoch counts of the hyperparameter grid.
pub const EPOCH_GRID: [usize; 11] = [30, 50, 70, 90, 100, 150, 200, 500, 1000, 1500, 2000];
/// Hidden widths of the hyperparameter grid.
pub const UNIT_GRID: [usize; 9] = [10, 20, 30, 40, 50, 60, 70, 80, 100];
/// Learning rates of the hyperparameter grid.
pub const LR_GRID: [f64; 9] = [0.0001, 0.0005, 0.001, 0.002, 0.003, 0.004, 0.005, 0.008, 0.01];

/// The 27-point subset searched by default.
pub const DEFAULT_EPOCHS: [usize; 3] = [30, 100, 500];
pub const DEFAULT_UNITS: [usize; 3] = [10, 50, 100];
pub const DEFAULT_LRS: [f64; 3] = [0.001, 0.005, 0.01];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ModelKind {
    /// tanh, linear, softmax head; MSE.
    One,
    /// relu, linear, softmax head; MSE.
    Two,
    /// tanh, linear, tanh head; cross-entropy.
    Three,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::One, ModelKind::Two, ModelKind::Three];

    pub fn activations(self) -> [Activation; 3] {
        match self {
            ModelKind::One => [Activation::Tanh, Activation::Identity, Activation::Softmax],
            ModelKind::Two => [Activation::Relu, Activation::Identity, Activation::Softmax],
            ModelKind::Three => [Activation::Tanh, Activation::Identity, Activation::Tanh],
        }
    }

    pub fn loss(self) -> Loss {
        match self {
            ModelKind::One | ModelKind::Two => Loss::Mse,
            ModelKind::Three => Loss::Ce,
        }
    }

    pub fn output_map(self) -> OutputMap {
        match self {
            ModelKind::One | ModelKind::Two => OutputMap::Direct,
            ModelKind::Three => OutputMap::ShiftedTanh,
        }
    }
}

impl TryFrom<u8> for ModelKind {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        match id {
            1 => Ok(ModelKind::One),
            2 => Ok(ModelKind::Two),
            3 => Ok(ModelKind::Three),
            other => Err(Error::InvalidArgument(format!("model id must be 1, 2 or 3, got {other}"))),
        }
    }
}

impl From<ModelKind> for u8 {
    fn from(kind: ModelKind) -> u8 {
        match kind {
            ModelKind::One => 1,
            ModelKind::Two => 2,
            ModelKind::Three => 3,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "model {}", u8::from(*self))
    }
}

/// Per-component affine normalisation fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Zero mean and unit population variance per component; constant
    /// components keep a unit scale.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Self {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        if rows.is_empty() {
            return Self::identity(dim);
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..dim)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

/// A trained (or freshly initialised) ordering predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub kind: ModelKind,
    pub network: Network,
    pub standardizer: Standardizer,
    pub feature_mode: FeatureMode,
    pub n_nets: usize,
}

impl MlpModel {
    /// Input -> hidden -> hidden -> `n_nets!` outputs, Glorot-initialised.
    pub fn init(kind: ModelKind, n_nets: usize, feature_mode: FeatureMode, hidden: usize, seed: u64) -> Self {
        let input = feature_mode.dimension(n_nets);
        let output = factorial(n_nets);
        let mut rng = stream(seed, Stream::Init);
        let [a1, a2, a3] = kind.activations();
        let network = Network {
            layers: vec![
                Dense::init(input, hidden, a1, &mut rng),
                Dense::init(hidden, hidden, a2, &mut rng),
                Dense::init(hidden, output, a3, &mut rng),
            ],
        };
        Self { kind, network, standardizer: Standardizer::identity(input), feature_mode, n_nets }
    }

    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    /// Class probabilities for raw (unstandardised) features.
    pub fn probabilities(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: features.len() });
        }
        let y = self.network.forward(&self.standardizer.apply(features))?;
        Ok(self.kind.output_map().probabilities(&y))
    }

    /// Permutation index with the highest probability; ties go to the lower
    /// index.
    pub fn predict_index(&self, features: &[f64]) -> Result<usize> {
        Ok(argmax(&self.probabilities(features)?))
    }

    pub fn predict_order(&self, features: &[f64]) -> Result<NetOrdering> {
        NetOrdering::from_index(self.n_nets, self.predict_index(features)?)
    }
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub split_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, hidden_units: 50, learning_rate: 0.005, batch_size: 32, seed: 0, split_fraction: 0.8 }
    }
}

/// Hyperparameter points to try, the default 27 first, then the rest of
/// the full grid in a seeded order. `budget` caps the count.
pub fn search_space(budget: usize, seed: u64) -> Vec<(usize, usize, f64)> {
    let mut first = Vec::new();
    for &e in &DEFAULT_EPOCHS {
        for &u in &DEFAULT_UNITS {
            for &lr in &DEFAULT_LRS {
                first.push((e, u, lr));
            }
        }
    }
    let mut rest = Vec::new();
    for &e in &EPOCH_GRID {
        for &u in &UNIT_GRID {
            for &lr in &LR_GRID {
                if !first.contains(&(e, u, lr)) {
                    rest.push((e, u, lr));
                }
            }
        }
    }
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    first.extend(rest);
    first.truncate(budget);
    first
}

/// A group reduced to what training needs.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    /// Permutation index of the optimal ordering.
    pub optimal: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedArtifact {
    pub model: MlpModel,
    /// Mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub config: TrainConfig,
}

#[derive(Clone, Copy)]
enum Stream {
    Init = 1,
    Split = 2,
    Batches = 3,
}

fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Seeded shuffle into `(train, test)` index lists.
pub fn split_indices(n: usize, seed: u64, fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, Stream::Split));
    let cut = ((n as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
    let test = idx.split_off(cut);
    (idx, test)
}

fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

/// Percentage of predictions equal to the truth.
pub fn accuracy(predicted: &[usize], actual: &[usize]) -> f64 {
    if actual.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    100.0 * hits as f64 / actual.len() as f64
}

/// Accuracy of a model over a set of examples.
pub fn model_accuracy(model: &MlpModel, examples: &[&LabeledExample]) -> Result<f64> {
    let predicted = examples.iter().map(|e| model.predict_index(&e.features)).collect::<Result<Vec<_>>>()?;
    let actual: Vec<usize> = examples.iter().map(|e| e.optimal).collect();
    Ok(accuracy(&predicted, &actual))
}

/// Trains one model on a seeded 80/20 (by default) split.
pub fn train(
    examples: &[LabeledExample],
    n_nets: usize,
    feature_mode: FeatureMode,
    kind: ModelKind,
    config: TrainConfig,
) -> Result<TrainedArtifact> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    let dim = feature_mode.dimension(n_nets);
    let classes = factorial(n_nets);
    for e in examples {
        if e.features.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: e.features.len() });
        }
        if e.optimal >= classes {
            return Err(Error::InvalidArgument(format!("optimal index {} exceeds {classes} classes", e.optimal)));
        }
    }
    if config.batch_size == 0 || config.hidden_units == 0 {
        return Err(Error::InvalidArgument("batch size and hidden units must be positive".into()));
    }

    let (train_idx, test_idx) = split_indices(examples.len(), config.seed, config.split_fraction);
    let mut model = MlpModel::init(kind, n_nets, feature_mode, config.hidden_units, config.seed);
    model.standardizer = Standardizer::fit(train_idx.iter().map(|&i| examples[i].features.as_slice()), dim);
    let inputs: Vec<Vec<f64>> = examples.iter().map(|e| model.standardizer.apply(&e.features)).collect();
    let targets: Vec<Vec<f64>> = examples.iter().map(|e| one_hot(e.optimal, classes)).collect();

    let mut adam = Adam::new(&model.network, config.learning_rate);
    let mut rng = stream(config.seed, Stream::Batches);
    let mut order = train_idx.clone();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| inputs[i].as_slice()).collect();
            let ts: Vec<&[f64]> = batch.iter().map(|&i| targets[i].as_slice()).collect();
            let (loss, grads) =
                model.network.loss_and_gradients(&xs, &ts, kind.loss(), kind.output_map())?;
            if let Some(layer) = grads.first_non_finite() {
                return Err(Error::NonFiniteGradient { layer, epoch });
            }
            adam.step(&mut model.network, &grads);
            epoch_loss += loss * batch.len() as f64;
        }
        loss_curve.push(epoch_loss / order.len().max(1) as f64);
    }

    let pick = |idx: &[usize]| idx.iter().map(|&i| &examples[i]).collect::<Vec<_>>();
    let train_accuracy = model_accuracy(&model, &pick(&train_idx))?;
    let test_accuracy = model_accuracy(&model, &pick(&test_idx))?;
    Ok(TrainedArtifact { model, loss_curve, train_accuracy, test_accuracy, config })
}
