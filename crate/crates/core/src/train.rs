//! SGD with momentum, evaluation, and the shared epoch loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{argmax, backward, cross_entropy, forward, Gradients, SparseModel};
use crate::sparsity::in_degree;

/// Optimizer and schedule settings for one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 64,
            epochs: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "momentum {} not in [0, 1)",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    /// SGD steps per epoch for `n` training samples (last batch may be short).
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

/// Independent random streams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum RngStream {
    Init = 0,
    Shuffle = 1,
    Mask = 2,
    Prune = 3,
    Data = 4,
    Reinit = 5,
}

/// ChaCha8 seeded from `seed`, positioned on the given stream.
pub fn stream_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Momentum buffers, one per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    pub weights: Vec<Matrix>,
    pub bias: Vec<Vec<f64>>,
}

impl Velocity {
    pub fn zeros_like(model: &SparseModel) -> Self {
        Velocity {
            weights: model
                .layers()
                .iter()
                .map(|l| Matrix::zeros(l.out_features(), l.in_features()))
                .collect(),
            bias: model.layers().iter().map(|l| vec![0.0; l.out_features()]).collect(),
        }
    }

    fn check(&self, model: &SparseModel) -> Result<()> {
        let ok = self.weights.len() == model.layers().len()
            && self.bias.len() == model.layers().len()
            && model.layers().iter().enumerate().all(|(i, l)| {
                self.weights[i].shape() == l.weights().shape() && self.bias[i].len() == l.bias().len()
            });
        if ok {
            Ok(())
        } else {
            Err(Error::shape("velocity does not match model"))
        }
    }
}

/// One momentum-SGD update: `v ← μv + g`, `w ← w − lr·v`.
///
/// With `dense_update` the straight-through gradient moves every weight.
/// Otherwise the masked gradient is used and masked-out weights stay put.
/// Biases always update.
pub fn sgd_step(
    model: &mut SparseModel,
    grads: &Gradients,
    cfg: &TrainConfig,
    velocity: &mut Velocity,
    dense_update: bool,
) -> Result<()> {
    velocity.check(model)?;
    if grads.dense_weights.len() != model.layers().len() {
        return Err(Error::shape("gradient record does not match model"));
    }
    let lr = cfg.learning_rate;
    let mu = cfg.momentum;
    for (i, layer) in model.layers_mut().iter_mut().enumerate() {
        let g = if dense_update {
            &grads.dense_weights[i]
        } else {
            &grads.masked_weights[i]
        };
        if g.shape() != layer.weights().shape() || grads.bias[i].len() != layer.bias().len() {
            return Err(Error::shape(format!("gradient shape mismatch in layer {i}")));
        }
        let v = velocity.weights[i].values_mut();
        for (vj, gj) in v.iter_mut().zip(g.values()) {
            *vj = mu * *vj + gj;
        }
        let (weights, mask) = layer.weights_and_mask_mut();
        let w = weights.values_mut();
        if dense_update {
            for (wj, vj) in w.iter_mut().zip(v.iter()) {
                *wj -= lr * vj;
            }
        } else {
            for ((wj, vj), &m) in w.iter_mut().zip(v.iter()).zip(mask.bits()) {
                if m == 1 {
                    *wj -= lr * vj;
                }
            }
        }
        let vb = &mut velocity.bias[i];
        for ((b, vj), gj) in layer.bias_mut().iter_mut().zip(vb.iter_mut()).zip(&grads.bias[i]) {
            *vj = mu * *vj + gj;
            *b -= lr * *vj;
        }
    }
    Ok(())
}

/// Mean loss and accuracy on a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

const EVAL_CHUNK: usize = 512;

/// Accuracy uses argmax with ties going to the lowest class index.
pub fn evaluate(model: &SparseModel, data: &Dataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::input("cannot evaluate on an empty dataset"));
    }
    if data.n_features() != model.input_dim() {
        return Err(Error::shape(format!(
            "dataset has {} features, model expects {}",
            data.n_features(),
            model.input_dim()
        )));
    }
    if data.n_classes() > model.output_dim() {
        return Err(Error::shape(format!(
            "dataset has {} classes, model outputs {}",
            data.n_classes(),
            model.output_dim()
        )));
    }
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let batch = data.inputs().select_rows(chunk);
        let labels: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
        let acts = forward(model, &batch)?;
        let probs = acts.probabilities();
        loss_sum += cross_entropy(probs, &labels)? * chunk.len() as f64;
        correct += labels
            .iter()
            .enumerate()
            .filter(|&(s, &y)| argmax(probs.row(s)) == y)
            .count();
    }
    Ok(Evaluation {
        loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}

/// Trains with masks held fixed; only active weights and biases change.
pub fn train_static(mut model: SparseModel, data: &Dataset, cfg: &TrainConfig) -> Result<SparseModel> {
    run(&mut model, data, None, cfg, &mut StaticRule)?;
    Ok(model)
}

/// Per-epoch summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub test_accuracy: f64,
}

/// Hooks that let a trainer move the mask around the SGD loop.
pub(crate) trait MaskRule {
    /// Whether the step uses the straight-through gradient on all weights.
    fn dense_update(&self) -> bool;

    fn begin(&mut self, _model: &mut SparseModel) -> Result<()> {
        Ok(())
    }

    fn epoch_start(&mut self, _epoch: usize, _model: &mut SparseModel) -> Result<()> {
        Ok(())
    }

    fn before_forward(&mut self, _model: &mut SparseModel) -> Result<()> {
        Ok(())
    }

    /// Called after the step; `iteration` counts completed steps from 1.
    fn after_step(
        &mut self,
        _model: &mut SparseModel,
        _grads: &Gradients,
        _velocity: &mut Velocity,
        _iteration: usize,
    ) -> Result<()> {
        Ok(())
    }

    fn before_eval(&mut self, _model: &mut SparseModel) -> Result<()> {
        Ok(())
    }
}

pub(crate) struct StaticRule;

impl MaskRule for StaticRule {
    fn dense_update(&self) -> bool {
        false
    }
}

/// What the shared loop records.
#[derive(Debug, Clone, Default)]
pub(crate) struct RunLog {
    pub history: Vec<EpochRecord>,
    /// `degrees[epoch][layer]`, epoch 0 taken before any step.
    pub degrees: Vec<Vec<Vec<usize>>>,
}

fn layer_degrees(model: &SparseModel) -> Vec<Vec<usize>> {
    model.layers().iter().map(|l| in_degree(l.mask())).collect()
}

/// Runs `cfg.epochs` epochs of mini-batch SGD under a mask rule.
///
/// Data order is reshuffled each epoch from the run seed. Test accuracy is
/// recorded when a test set is given.
pub(crate) fn run(
    model: &mut SparseModel,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    rule: &mut dyn MaskRule,
) -> Result<RunLog> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::input("empty training set"));
    }
    if train.n_features() != model.input_dim() {
        return Err(Error::shape(format!(
            "training data has {} features, model expects {}",
            train.n_features(),
            model.input_dim()
        )));
    }
    let mut shuffle_rng = stream_rng(cfg.seed, RngStream::Shuffle);
    let mut velocity = Velocity::zeros_like(model);
    let mut log = RunLog::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut iteration = 0;

    rule.begin(model)?;
    log.degrees.push(layer_degrees(model));

    for epoch in 0..cfg.epochs {
        rule.epoch_start(epoch, model)?;
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            rule.before_forward(model)?;
            let batch = train.inputs().select_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels()[i]).collect();
            let acts = forward(model, &batch)?;
            let grads = backward(model, &acts, &labels)?;
            loss_sum += grads.loss * chunk.len() as f64;
            sgd_step(model, &grads, cfg, &mut velocity, rule.dense_update())?;
            iteration += 1;
            rule.after_step(model, &grads, &mut velocity, iteration)?;
        }
        rule.before_eval(model)?;
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::InvalidState(format!(
                "training diverged in epoch {epoch}"
            )));
        }
        let test_accuracy = match test {
            Some(t) => evaluate(model, t)?.accuracy,
            None => f64::NAN,
        };
        log.history.push(EpochRecord {
            train_loss,
            test_accuracy,
        });
        log.degrees.push(layer_degrees(model));
    }
    Ok(log)
}
