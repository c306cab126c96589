//! Fully connected regression network trained with Adam.
//!
//! The network maps a standardized 3x3 stencil through ReLU hidden layers to a
//! single linear output. Layer `l` computes `a_{l+1} = sigma(a_l W_l + b_l)`
//! with `W_l` stored as an `inputs x outputs` matrix, so a batch is one matrix
//! product per layer.

use std::fs;
use std::io;
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::dataset::{Normalization, Sample, SplitSet};

pub const INPUT_WIDTH: usize = 9;
pub const MODEL_FORMAT: &str = "curvnet-mlp";
pub const MODEL_VERSION: u32 = 1;

/// Rows per matrix product when evaluating many stencils.
const PREDICT_CHUNK: usize = 1024;

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{0} set is empty")]
    EmptyData(&'static str),
    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid model file: {0}")]
    Format(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

/// Parses a hidden-layer spec such as `128x4` into `[9, 128, 128, 128, 128, 1]`.
pub fn parse_architecture(spec: &str) -> Result<Vec<usize>, NnetError> {
    let bad = || NnetError::InvalidArchitecture(format!("expected WIDTHxDEPTH such as 128x4, got '{spec}'"));
    let (width, depth) = spec.split_once('x').ok_or_else(bad)?;
    let width: usize = width.trim().parse().map_err(|_| bad())?;
    let depth: usize = depth.trim().parse().map_err(|_| bad())?;
    if width == 0 || depth == 0 {
        return Err(bad());
    }
    let mut sizes = vec![INPUT_WIDTH];
    sizes.extend(std::iter::repeat_n(width, depth));
    sizes.push(1);
    Ok(sizes)
}

fn validate_layer_sizes(sizes: &[usize]) -> Result<(), NnetError> {
    if sizes.len() < 2 || sizes[0] != INPUT_WIDTH || sizes[sizes.len() - 1] != 1 || sizes.contains(&0) {
        return Err(NnetError::InvalidArchitecture(format!(
            "layer sizes must run from {INPUT_WIDTH} to 1 with no empty layer, got {sizes:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1.5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 200,
            patience: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnetError> {
        let fail = |msg: String| Err(NnetError::InvalidConfig(msg));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.patience == 0 {
            return fail("patience must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return fail(format!("betas must lie in [0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.epsilon > 0.0) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Gradients (or any other per-parameter quantity) shaped like a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    pub normalization: Normalization,
    pub rho_tag: Option<usize>,
    /// Configuration the model was trained with, echoed into saved files.
    pub train_config: Option<TrainConfig>,
}

impl MlpModel {
    /// All-zero parameters with identity normalization.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, NnetError> {
        validate_layer_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights: layer_sizes.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect(),
            biases: layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect(),
            normalization: Normalization::identity(),
            rho_tag: None,
            train_config: None,
        })
    }

    /// He-uniform weights (bound `sqrt(6 / fan_in)`) and zero biases.
    pub fn he_uniform<R: Rng>(layer_sizes: &[usize], rng: &mut R) -> Result<Self, NnetError> {
        let mut model = Self::zeros(layer_sizes)?;
        for w in &mut model.weights {
            let bound = (6.0 / w.nrows() as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(model)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn standardized_batch(&self, stencils: &[[f64; 9]]) -> Array2<f64> {
        let mut x = Array2::zeros((stencils.len(), INPUT_WIDTH));
        for (mut row, s) in x.rows_mut().into_iter().zip(stencils) {
            row.assign(&Array1::from(self.normalization.apply(s).to_vec()));
        }
        x
    }

    /// Activations of every layer for already standardized inputs; the first
    /// entry is the input itself and the last the linear output.
    fn activations(&self, x: Array2<f64>) -> Vec<Array2<f64>> {
        let last = self.weights.len() - 1;
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(x);
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w);
            z += b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    fn output_of(&self, x: Array2<f64>) -> Vec<f64> {
        self.activations(x).pop().expect("at least one layer").column(0).to_vec()
    }

    /// Network estimate of `h kappa` for one stencil.
    pub fn forward(&self, stencil: &[f64; 9]) -> f64 {
        self.output_of(self.standardized_batch(std::slice::from_ref(stencil)))[0]
    }

    /// Estimates for many stencils.
    pub fn predict(&self, stencils: &[[f64; 9]]) -> Vec<f64> {
        stencils
            .chunks(PREDICT_CHUNK)
            .flat_map(|chunk| self.output_of(self.standardized_batch(chunk)))
            .collect()
    }

    /// Batch-mean squared error and its exact gradient for standardized
    /// inputs. The ReLU derivative at exactly zero is taken as zero.
    fn loss_and_gradients_standardized(&self, x: ArrayView2<'_, f64>, targets: &[f64]) -> (f64, Gradients) {
        let batch = targets.len() as f64;
        let acts = self.activations(x.to_owned());
        let output = acts.last().expect("output layer");
        let mut delta = Array2::zeros((targets.len(), 1));
        let mut loss = 0.0;
        for (k, (&y, &p)) in targets.iter().zip(output.column(0)).enumerate() {
            let r = p - y;
            loss += r * r;
            delta[[k, 0]] = 2.0 * r / batch;
        }
        let mut grads = Gradients::zeros_like(self);
        for l in (0..self.weights.len()).rev() {
            general_mat_mul(1.0, &acts[l].t(), &delta, 0.0, &mut grads.weights[l]);
            grads.biases[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                Zip::from(&mut back).and(&acts[l]).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        (loss / batch, grads)
    }

    /// Batch-mean squared error over raw stencils and its gradient with
    /// respect to every weight and bias.
    pub fn loss_and_gradients(&self, stencils: &[[f64; 9]], targets: &[f64]) -> (f64, Gradients) {
        assert_eq!(stencils.len(), targets.len(), "one target per stencil");
        assert!(!targets.is_empty(), "batch must not be empty");
        let x = self.standardized_batch(stencils);
        self.loss_and_gradients_standardized(x.view(), targets)
    }
}

/// Moments of parameters whose gradient stays zero (dead ReLU units) decay
/// geometrically into the subnormal range, where arithmetic is orders of
/// magnitude slower; they are flushed to zero instead.
#[inline]
fn flush_subnormal(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

/// Adam optimizer state with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Gradients,
    second: Gradients,
    steps: i32,
}

impl Adam {
    pub fn new(model: &MlpModel, config: &TrainConfig) -> Self {
        Self {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            first: Gradients::zeros_like(model),
            second: Gradients::zeros_like(model),
            steps: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    pub fn first_moment(&self) -> &Gradients {
        &self.first
    }

    pub fn second_moment(&self) -> &Gradients {
        &self.second
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        assert_eq!(grads.weights.len(), model.weights.len(), "gradient layer count");
        self.steps += 1;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let c1 = 1.0 - b1.powi(self.steps);
        let c2 = 1.0 - b2.powi(self.steps);
        let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for (((p, m), v), g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                *m = flush_subnormal(b1 * *m + (1.0 - b1) * g);
                *v = flush_subnormal(b2 * *v + (1.0 - b2) * g * g);
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        };
        fn flat(a: &mut Array2<f64>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        for l in 0..model.weights.len() {
            update(
                flat(&mut model.weights[l]),
                flat(&mut self.first.weights[l]),
                flat(&mut self.second.weights[l]),
                grads.weights[l].as_slice().expect("standard layout"),
            );
            update(
                model.biases[l].as_slice_mut().expect("contiguous"),
                self.first.biases[l].as_slice_mut().expect("contiguous"),
                self.second.biases[l].as_slice_mut().expect("contiguous"),
                grads.biases[l].as_slice().expect("contiguous"),
            );
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean squared error over the epoch's training batches, measured before
    /// each batch's update.
    pub train_mse: f64,
    pub validation_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the returned snapshot.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn best_validation_mae(&self) -> f64 {
        self.epochs[self.best_epoch].validation_mae
    }
}

/// Mean absolute error of the model over raw targets.
pub fn mean_absolute_error(model: &MlpModel, samples: &[Sample]) -> f64 {
    let stencils: Vec<[f64; 9]> = samples.iter().map(|s| s.stencil).collect();
    let predictions = model.predict(&stencils);
    let total: f64 = predictions.iter().zip(samples).map(|(p, s)| (p - s.target).abs()).sum();
    total / samples.len() as f64
}

/// Trains a network with normalization fitted on the training split.
pub fn train(split: &SplitSet, layer_sizes: &[usize], config: &TrainConfig) -> Result<(MlpModel, TrainLog), NnetError> {
    train_with_progress(split, layer_sizes, config, |_| {})
}

/// [`train`] with a callback after every epoch.
///
/// Mini-batches follow a seeded reshuffle each epoch, keeping the final
/// partial batch. Training stops once validation MAE has not improved for
/// `patience` epochs, and the parameters of the best epoch are returned.
pub fn train_with_progress<F>(
    split: &SplitSet,
    layer_sizes: &[usize],
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<(MlpModel, TrainLog), NnetError>
where
    F: FnMut(&EpochRecord),
{
    config.validate()?;
    validate_layer_sizes(layer_sizes)?;
    if split.train.len() < 2 {
        return Err(NnetError::EmptyData("training"));
    }
    if split.validation.is_empty() {
        return Err(NnetError::EmptyData("validation"));
    }
    let normalization = crate::dataset::fit_normalization(&split.train)
        .map_err(|e| NnetError::InvalidConfig(format!("cannot standardize training inputs: {e}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::he_uniform(layer_sizes, &mut rng)?;
    model.normalization = normalization;
    model.train_config = Some(*config);
    let mut adam = Adam::new(&model, config);

    let n = split.train.len();
    let x_all = model.standardized_batch(&split.train.iter().map(|s| s.stencil).collect::<Vec<_>>());
    let y_all: Vec<f64> = split.train.iter().map(|s| s.target).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_x = Array2::zeros((config.batch_size, INPUT_WIDTH));
    let mut batch_y = Vec::with_capacity(config.batch_size);

    let mut log = TrainLog::default();
    let mut best = model.clone();
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut squared_error = 0.0;
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut x = batch_x.slice_mut(ndarray::s![..chunk.len(), ..]);
            batch_y.clear();
            for (mut row, &i) in x.rows_mut().into_iter().zip(chunk) {
                row.assign(&x_all.row(i));
                batch_y.push(y_all[i]);
            }
            let (loss, grads) = model.loss_and_gradients_standardized(x.view(), &batch_y);
            if !loss.is_finite() {
                return Err(NnetError::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                });
            }
            squared_error += loss * chunk.len() as f64;
            adam.step(&mut model, &grads);
        }
        let record = EpochRecord {
            epoch,
            train_mse: squared_error / n as f64,
            validation_mae: mean_absolute_error(&model, &split.validation),
        };
        if !record.validation_mae.is_finite() {
            return Err(NnetError::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
            });
        }
        on_epoch(&record);
        log.epochs.push(record);
        if record.validation_mae < log.epochs[log.best_epoch].validation_mae || epoch == 0 {
            log.best_epoch = epoch;
            best = model.clone();
        } else if epoch - log.best_epoch >= config.patience {
            log.stopped_early = true;
            break;
        }
    }
    Ok((best, log))
}

// --- Model files -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormalizationFile {
    mean: Vec<Box<RawValue>>,
    std: Vec<Box<RawValue>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    rho_tag: Option<usize>,
    normalization: NormalizationFile,
    /// Row-major `inputs x outputs` matrices, one per layer.
    weights: Vec<Vec<Box<RawValue>>>,
    biases: Vec<Vec<Box<RawValue>>>,
    train_config: Option<TrainConfig>,
}

fn encode(values: impl IntoIterator<Item = f64>) -> Vec<Box<RawValue>> {
    values
        .into_iter()
        .map(|v| RawValue::from_string(format!("{v:.16e}")).expect("formatted float is valid JSON"))
        .collect()
}

fn decode(raw: &[Box<RawValue>], what: &str) -> Result<Vec<f64>, NnetError> {
    raw.iter()
        .map(|r| {
            let v: f64 = r
                .get()
                .parse()
                .map_err(|_| NnetError::Format(format!("{what}: '{}' is not a number", r.get())))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(NnetError::Format(format!("{what}: non-finite value")))
            }
        })
        .collect()
}

fn decode_stats(raw: &[Box<RawValue>], what: &str) -> Result<[f64; 9], NnetError> {
    decode(raw, what)?
        .try_into()
        .map_err(|v: Vec<f64>| NnetError::Format(format!("{what}: expected 9 values, got {}", v.len())))
}

impl MlpModel {
    /// Serializes to the versioned JSON model format. Floats carry 17
    /// significant digits so that loading reproduces every bit.
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            rho_tag: self.rho_tag,
            normalization: NormalizationFile {
                mean: encode(self.normalization.mean),
                std: encode(self.normalization.std),
            },
            weights: self.weights.iter().map(|w| encode(w.iter().copied())).collect(),
            biases: self.biases.iter().map(|b| encode(b.iter().copied())).collect(),
            train_config: self.train_config,
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NnetError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| NnetError::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(NnetError::Format(format!("unknown format '{}'", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(NnetError::Format(format!(
                "unsupported version {} (expected {MODEL_VERSION})",
                file.version
            )));
        }
        validate_layer_sizes(&file.layer_sizes).map_err(|e| NnetError::Format(e.to_string()))?;
        let layers = file.layer_sizes.len() - 1;
        if file.weights.len() != layers || file.biases.len() != layers {
            return Err(NnetError::Format(format!(
                "{layers} layers declared but {} weight and {} bias arrays present",
                file.weights.len(),
                file.biases.len()
            )));
        }
        let mut model = Self::zeros(&file.layer_sizes)?;
        for l in 0..layers {
            let (rows, cols) = (file.layer_sizes[l], file.layer_sizes[l + 1]);
            let w = decode(&file.weights[l], &format!("weights[{l}]"))?;
            model.weights[l] = Array2::from_shape_vec((rows, cols), w).map_err(|_| {
                NnetError::Format(format!("weights[{l}] must hold {rows}x{cols} values"))
            })?;
            let b = decode(&file.biases[l], &format!("biases[{l}]"))?;
            if b.len() != cols {
                return Err(NnetError::Format(format!("biases[{l}] must hold {cols} values")));
            }
            model.biases[l] = Array1::from(b);
        }
        let std = decode_stats(&file.normalization.std, "normalization.std")?;
        if std.iter().any(|&s| !(s > 0.0)) {
            return Err(NnetError::Format("normalization.std must be positive".into()));
        }
        model.normalization = Normalization {
            mean: decode_stats(&file.normalization.mean, "normalization.mean")?,
            std,
        };
        model.rho_tag = file.rho_tag;
        model.train_config = file.train_config;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnetError> {
        fs::write(path, self.to_json()).map_err(|source| NnetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, NnetError> {
        let text = fs::read_to_string(path).map_err(|source| NnetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}
