//! The graph-producing trainers.
//!
//! * **Random**: a uniformly random mask, fixed before training.
//! * **IMP**: train, prune the smallest active weights, rewind the survivors
//!   to their initial values, repeat.
//! * **DNW**: the mask is the top-k weights by magnitude at every forward
//!   pass; all weights update through the straight-through gradient.
//! * **RigL**: static training interrupted every `n` steps (until `T_end`)
//!   by a drop/grow exchange of a cosine-decaying number of connections.
//! * **Hybrid DNW**: DNW until a freeze epoch, static afterwards.
//!
//! Sparsity is allocated per layer, including the output layer.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::analysis::DegreeTrace;
use crate::dataset::DataSplit;
use crate::error::{Error, Result};
use crate::model::{Gradients, SparseModel};
use crate::sparsity::{
    bottom_k_active, density_to_k, random_mask, top_k_inactive, top_k_mask, Mask, SparsitySpec,
};
use crate::train::{run, stream_rng, EpochRecord, MaskRule, RngStream, StaticRule, TrainConfig, Velocity};

pub const DEFAULT_IMP_PRUNE_RATE: f64 = 0.2;
pub const DEFAULT_RIGL_INTERVAL: usize = 25;
pub const DEFAULT_RIGL_ALPHA: f64 = 0.3;
/// `T_end` as a fraction of all training steps when not given explicitly.
pub const DEFAULT_RIGL_END_FRACTION: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgorithmKind {
    Random,
    Imp,
    Dnw,
    Rigl,
    HybridDnw,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 5] = [
        AlgorithmKind::Random,
        AlgorithmKind::Imp,
        AlgorithmKind::Dnw,
        AlgorithmKind::Rigl,
        AlgorithmKind::HybridDnw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Random => "random",
            AlgorithmKind::Imp => "imp",
            AlgorithmKind::Dnw => "dnw",
            AlgorithmKind::Rigl => "rigl",
            AlgorithmKind::HybridDnw => "hybrid",
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown algorithm {s:?} (expected random, imp, dnw, rigl or hybrid)"
                ))
            })
    }
}

/// Which trainer to run and its knobs. Fields for other kinds are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmSpec {
    pub kind: AlgorithmKind,
    pub sparsity: SparsitySpec,
    pub imp_rounds: usize,
    pub imp_prune_rate: f64,
    pub rigl_interval: usize,
    /// Last step at which RigL may change the mask; `None` means
    /// [`DEFAULT_RIGL_END_FRACTION`] of all steps.
    pub rigl_t_end: Option<usize>,
    pub rigl_alpha: f64,
    pub freeze_epoch: usize,
}

impl AlgorithmSpec {
    fn base(kind: AlgorithmKind, density: f64) -> Result<Self> {
        Ok(AlgorithmSpec {
            kind,
            sparsity: SparsitySpec::new(density)?,
            imp_rounds: 0,
            imp_prune_rate: DEFAULT_IMP_PRUNE_RATE,
            rigl_interval: DEFAULT_RIGL_INTERVAL,
            rigl_t_end: None,
            rigl_alpha: DEFAULT_RIGL_ALPHA,
            freeze_epoch: 0,
        })
    }

    pub fn random(density: f64) -> Result<Self> {
        Self::base(AlgorithmKind::Random, density)
    }

    /// IMP reaching `density` with per-round rates of at most 20%: the
    /// fewest rounds that can get there, with the rate lowered so that
    /// `(1 − rate)^rounds = density`.
    pub fn imp(density: f64) -> Result<Self> {
        let mut spec = Self::base(AlgorithmKind::Imp, density)?;
        if density < 1.0 {
            let rounds = (density.ln() / (1.0 - DEFAULT_IMP_PRUNE_RATE).ln() - 1e-9).ceil() as usize;
            let rounds = rounds.max(1);
            spec.imp_rounds = rounds;
            spec.imp_prune_rate = 1.0 - density.powf(1.0 / rounds as f64);
        }
        Ok(spec)
    }

    pub fn imp_with(density: f64, rounds: usize, prune_rate: f64) -> Result<Self> {
        let mut spec = Self::base(AlgorithmKind::Imp, density)?;
        spec.imp_rounds = rounds;
        spec.imp_prune_rate = prune_rate;
        Ok(spec)
    }

    pub fn dnw(density: f64) -> Result<Self> {
        Self::base(AlgorithmKind::Dnw, density)
    }

    pub fn rigl(density: f64) -> Result<Self> {
        Self::base(AlgorithmKind::Rigl, density)
    }

    pub fn hybrid(density: f64, freeze_epoch: usize) -> Result<Self> {
        let mut spec = Self::base(AlgorithmKind::HybridDnw, density)?;
        spec.freeze_epoch = freeze_epoch;
        Ok(spec)
    }

    /// Same settings under a different kind.
    pub fn with_kind(mut self, kind: AlgorithmKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn density(&self) -> f64 {
        self.sparsity.density()
    }

    /// Checks the knobs relevant to `self.kind` against a training config.
    pub fn validate(&self, cfg: &TrainConfig) -> Result<()> {
        match self.kind {
            AlgorithmKind::Imp => {
                if self.imp_rounds > 0 && !(self.imp_prune_rate > 0.0 && self.imp_prune_rate < 1.0) {
                    return Err(Error::config(format!(
                        "IMP prune rate {} not in (0, 1)",
                        self.imp_prune_rate
                    )));
                }
            }
            AlgorithmKind::Rigl => {
                if self.rigl_interval == 0 {
                    return Err(Error::config("RigL interval must be at least 1"));
                }
                if let Some(t_end) = self.rigl_t_end {
                    if t_end < self.rigl_interval {
                        return Err(Error::config(format!(
                            "RigL T_end {t_end} is before the first update at {}",
                            self.rigl_interval
                        )));
                    }
                }
                if !(0.0..=1.0).contains(&self.rigl_alpha) {
                    return Err(Error::config(format!(
                        "RigL alpha {} not in [0, 1]",
                        self.rigl_alpha
                    )));
                }
            }
            AlgorithmKind::HybridDnw => {
                if self.freeze_epoch > cfg.epochs {
                    return Err(Error::config(format!(
                        "freeze epoch {} exceeds {} epochs",
                        self.freeze_epoch, cfg.epochs
                    )));
                }
            }
            AlgorithmKind::Random | AlgorithmKind::Dnw => {}
        }
        Ok(())
    }
}

/// One RigL drop/grow exchange in one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskUpdate {
    pub iteration: usize,
    pub layer: usize,
    pub dropped: Vec<usize>,
    pub grown: Vec<usize>,
    pub nnz_before: usize,
    pub nnz_after: usize,
}

/// Everything a trainer produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub algorithm: AlgorithmKind,
    pub density: f64,
    pub seed: u64,
    pub epochs: usize,
    pub model: SparseModel,
    pub final_masks: Vec<Mask>,
    /// One record per epoch (for IMP, of the final round).
    pub history: Vec<EpochRecord>,
    /// In-degree of every layer at each epoch boundary.
    pub degree_trace: Vec<DegreeTrace>,
    /// RigL exchanges, in order; empty for the other trainers.
    pub mask_updates: Vec<MaskUpdate>,
}

impl TrainResult {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.history.last().map(|h| h.test_accuracy)
    }

    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.model.layer_shapes()
    }
}

/// Model widths `[input, hidden…, output]` for a dataset.
pub fn widths_for(data: &DataSplit, hidden: &[usize]) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(data.train.n_features());
    w.extend_from_slice(hidden);
    w.push(data.train.n_classes());
    w
}

fn target_ks(model: &SparseModel, density: f64) -> Result<Vec<usize>> {
    model
        .layer_shapes()
        .into_iter()
        .map(|(r, c)| density_to_k(r, c, density))
        .collect()
}

fn fresh_model(widths: &[usize], seed: u64) -> Result<SparseModel> {
    SparseModel::new(widths, &mut stream_rng(seed, RngStream::Init))
}

fn check_kind(spec: &AlgorithmSpec, expected: AlgorithmKind) -> Result<()> {
    if spec.kind != expected {
        return Err(Error::config(format!(
            "{} trainer called with a {} spec",
            expected, spec.kind
        )));
    }
    Ok(())
}

fn finish(
    spec: &AlgorithmSpec,
    cfg: &TrainConfig,
    model: SparseModel,
    log: crate::train::RunLog,
    mask_updates: Vec<MaskUpdate>,
) -> Result<TrainResult> {
    let n_layers = model.layers().len();
    let degree_trace = (0..n_layers)
        .map(|l| DegreeTrace::new(l, log.degrees.iter().map(|e| e[l].clone()).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainResult {
        algorithm: spec.kind,
        density: spec.density(),
        seed: cfg.seed,
        epochs: cfg.epochs,
        final_masks: model.masks(),
        model,
        history: log.history,
        degree_trace,
        mask_updates,
    })
}

/// Trains under a uniformly random mask drawn from the run seed.
pub fn train_random(data: &DataSplit, widths: &[usize], cfg: &TrainConfig, spec: &AlgorithmSpec) -> Result<TrainResult> {
    check_kind(spec, AlgorithmKind::Random)?;
    spec.validate(cfg)?;
    let mut model = fresh_model(widths, cfg.seed)?;
    let mut mask_rng = stream_rng(cfg.seed, RngStream::Mask);
    let masks = model
        .layer_shapes()
        .into_iter()
        .map(|(r, c)| random_mask(r, c, density_to_k(r, c, spec.density())?, &mut mask_rng))
        .collect::<Result<Vec<_>>>()?;
    model.set_masks(masks)?;
    let log = run(&mut model, &data.train, Some(&data.test), cfg, &mut StaticRule)?;
    finish(spec, cfg, model, log, Vec::new())
}

/// Density targeted after `round` prune steps. The last round lands on the
/// requested density exactly.
fn imp_round_density(spec: &AlgorithmSpec, round: usize) -> f64 {
    if round >= spec.imp_rounds {
        spec.density()
    } else {
        (1.0 - spec.imp_prune_rate).powi(round as i32)
    }
}

fn check_imp_schedule(spec: &AlgorithmSpec, shapes: &[(usize, usize)]) -> Result<()> {
    let scheduled = (1.0 - spec.imp_prune_rate).powi(spec.imp_rounds as i32);
    for &(r, c) in shapes {
        let want = density_to_k(r, c, spec.density())?;
        let got = density_to_k(r, c, scheduled)?;
        if want.abs_diff(got) > 1 {
            return Err(Error::config(format!(
                "{} rounds at prune rate {} reach density {scheduled:.5}, not {} \
                 ({got} vs {want} weights in a {r}x{c} layer)",
                spec.imp_rounds,
                spec.imp_prune_rate,
                spec.density()
            )));
        }
    }
    Ok(())
}

/// IMP; see [`train_imp_observed`].
pub fn train_imp(data: &DataSplit, widths: &[usize], cfg: &TrainConfig, spec: &AlgorithmSpec) -> Result<TrainResult> {
    train_imp_observed(data, widths, cfg, spec, |_, _| {})
}

/// Runs `imp_rounds + 1` trainings of `cfg.epochs` each. After each of the
/// first `imp_rounds`, every layer drops its smallest active weights down to
/// `density_to_k(shape, (1 − rate)^round)` (the final round's target is the
/// requested density), pruned weights are zeroed and the survivors rewound
/// to the init snapshot. `on_reset(round, model)` sees the model right after
/// each rewind.
pub fn train_imp_observed<F>(
    data: &DataSplit,
    widths: &[usize],
    cfg: &TrainConfig,
    spec: &AlgorithmSpec,
    mut on_reset: F,
) -> Result<TrainResult>
where
    F: FnMut(usize, &SparseModel),
{
    check_kind(spec, AlgorithmKind::Imp)?;
    spec.validate(cfg)?;
    let mut model = fresh_model(widths, cfg.seed)?;
    let shapes = model.layer_shapes();
    if spec.imp_rounds == 0 {
        if shapes
            .iter()
            .any(|&(r, c)| density_to_k(r, c, spec.density()).ok() != Some(r * c))
        {
            return Err(Error::config(
                "IMP with zero rounds trains densely; density must be 1",
            ));
        }
    } else {
        check_imp_schedule(spec, &shapes)?;
    }

    for round in 1..=spec.imp_rounds {
        run(&mut model, &data.train, None, cfg, &mut StaticRule)?;
        let density = imp_round_density(spec, round);
        for layer in model.layers_mut() {
            let (r, c) = layer.weights().shape();
            let target = density_to_k(r, c, density)?;
            let nnz = layer.mask().nnz();
            let prune = nnz.saturating_sub(target);
            let victims = bottom_k_active(layer.weights(), layer.mask(), prune)?;
            let mut mask = layer.mask().clone();
            for &i in &victims {
                mask.set(i, false);
                layer.weights_mut().values_mut()[i] = 0.0;
            }
            layer.set_mask(mask)?;
            layer.reset_active_to_init();
        }
        on_reset(round, &model);
    }

    let log = run(&mut model, &data.train, Some(&data.test), cfg, &mut StaticRule)?;
    finish(spec, cfg, model, log, Vec::new())
}

/// Top-k masking, optionally frozen from a given epoch on.
struct TopKRule {
    ks: Vec<usize>,
    freeze_epoch: Option<usize>,
    frozen: bool,
}

impl TopKRule {
    fn refresh(&self, model: &mut SparseModel) -> Result<()> {
        for (layer, &k) in model.layers_mut().iter_mut().zip(&self.ks) {
            let mask = top_k_mask(layer.weights(), k)?;
            layer.set_mask(mask)?;
        }
        Ok(())
    }
}

impl MaskRule for TopKRule {
    fn dense_update(&self) -> bool {
        !self.frozen
    }

    fn begin(&mut self, model: &mut SparseModel) -> Result<()> {
        self.refresh(model)
    }

    fn epoch_start(&mut self, epoch: usize, model: &mut SparseModel) -> Result<()> {
        if !self.frozen && self.freeze_epoch == Some(epoch) {
            // mask already equals top-k of the current weights
            self.refresh(model)?;
            self.frozen = true;
        }
        Ok(())
    }

    fn before_forward(&mut self, model: &mut SparseModel) -> Result<()> {
        if self.frozen {
            Ok(())
        } else {
            self.refresh(model)
        }
    }

    fn before_eval(&mut self, model: &mut SparseModel) -> Result<()> {
        self.before_forward(model)
    }
}

fn train_top_k(data: &DataSplit, widths: &[usize], cfg: &TrainConfig, spec: &AlgorithmSpec, freeze_epoch: Option<usize>) -> Result<TrainResult> {
    spec.validate(cfg)?;
    let mut model = fresh_model(widths, cfg.seed)?;
    let mut rule = TopKRule {
        ks: target_ks(&model, spec.density())?,
        freeze_epoch,
        frozen: false,
    };
    let log = run(&mut model, &data.train, Some(&data.test), cfg, &mut rule)?;
    finish(spec, cfg, model, log, Vec::new())
}

/// DNW: top-k masks recomputed before every forward pass, dense
/// straight-through updates. The returned masks are top-k of the final weights.
pub fn train_dnw(data: &DataSplit, widths: &[usize], cfg: &TrainConfig, spec: &AlgorithmSpec) -> Result<TrainResult> {
    check_kind(spec, AlgorithmKind::Dnw)?;
    train_top_k(data, widths, cfg, spec, None)
}

/// DNW for epochs `[0, freeze_epoch)`, then static training under the top-k
/// mask of the weights at the freeze boundary.
pub fn train_hybrid_dnw(data: &DataSplit, widths: &[usize], cfg: &TrainConfig, spec: &AlgorithmSpec) -> Result<TrainResult> {
    check_kind(spec, AlgorithmKind::HybridDnw)?;
    train_top_k(data, widths, cfg, spec, Some(spec.freeze_epoch))
}

/// Connections exchanged at step `t`:
/// `round(alpha/2 · (1 + cos(π t / T_end)) · nnz)`, or 0 past `T_end`.
pub fn rigl_exchange_count(alpha: f64, t: usize, t_end: usize, nnz: usize) -> usize {
    if t > t_end || t_end == 0 {
        return 0;
    }
    let frac = alpha / 2.0 * (1.0 + (PI * t as f64 / t_end as f64).cos());
    (frac * nnz as f64 + 0.5).floor().max(0.0) as usize
}

/// One drop/grow exchange on a single layer.
///
/// Drops the `count` active weights of smallest magnitude, then grows the
/// `count` inactive positions (just-dropped ones included) with the largest
/// `|gradient|`. Both dropped and grown weights and their momentum are set
/// to zero. Returns `(dropped, grown)`.
pub fn rigl_exchange(
    layer: &mut crate::model::LayerState,
    velocity: &mut crate::matrix::Matrix,
    dense_grad: &crate::matrix::Matrix,
    count: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if count == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let dropped = bottom_k_active(layer.weights(), layer.mask(), count.min(layer.mask().nnz()))?;
    let mut mask = layer.mask().clone();
    for &i in &dropped {
        mask.set(i, false);
    }
    let grown = top_k_inactive(dense_grad, &mask, dropped.len())?;
    for &i in &grown {
        mask.set(i, true);
    }
    for &i in dropped.iter().chain(&grown) {
        layer.weights_mut().values_mut()[i] = 0.0;
        velocity.values_mut()[i] = 0.0;
    }
    layer.set_mask(mask)?;
    Ok((dropped, grown))
}

struct RiglRule {
    interval: usize,
    t_end: usize,
    alpha: f64,
    updates: Vec<MaskUpdate>,
}

impl MaskRule for RiglRule {
    fn dense_update(&self) -> bool {
        false
    }

    fn after_step(
        &mut self,
        model: &mut SparseModel,
        grads: &Gradients,
        velocity: &mut Velocity,
        iteration: usize,
    ) -> Result<()> {
        if iteration % self.interval != 0 || iteration > self.t_end {
            return Ok(());
        }
        for (l, layer) in model.layers_mut().iter_mut().enumerate() {
            let nnz_before = layer.mask().nnz();
            let count = rigl_exchange_count(self.alpha, iteration, self.t_end, nnz_before);
            let (dropped, grown) =
                rigl_exchange(layer, &mut velocity.weights[l], &grads.dense_weights[l], count)?;
            let nnz_after = layer.mask().nnz();
            if nnz_after != nnz_before {
                return Err(Error::InvalidState(format!(
                    "RigL update changed layer {l} from {nnz_before} to {nnz_after} connections"
                )));
            }
            self.updates.push(MaskUpdate {
                iteration,
                layer: l,
                dropped,
                grown,
                nnz_before,
                nnz_after,
            });
        }
        Ok(())
    }
}

/// RigL: random initial mask, static training with periodic drop/grow.
pub fn train_rigl(data: &DataSplit, widths: &[usize], cfg: &TrainConfig, spec: &AlgorithmSpec) -> Result<TrainResult> {
    check_kind(spec, AlgorithmKind::Rigl)?;
    spec.validate(cfg)?;
    let mut model = fresh_model(widths, cfg.seed)?;
    let mut mask_rng = stream_rng(cfg.seed, RngStream::Mask);
    let masks = model
        .layer_shapes()
        .into_iter()
        .map(|(r, c)| random_mask(r, c, density_to_k(r, c, spec.density())?, &mut mask_rng))
        .collect::<Result<Vec<_>>>()?;
    model.set_masks(masks)?;
    let total_steps = cfg.epochs * cfg.steps_per_epoch(data.train.len());
    let t_end = spec
        .rigl_t_end
        .unwrap_or((DEFAULT_RIGL_END_FRACTION * total_steps as f64).round() as usize);
    let mut rule = RiglRule {
        interval: spec.rigl_interval,
        t_end,
        alpha: spec.rigl_alpha,
        updates: Vec::new(),
    };
    let log = run(&mut model, &data.train, Some(&data.test), cfg, &mut rule)?;
    finish(spec, cfg, model, log, rule.updates)
}

/// Dispatches on `spec.kind`.
pub fn train(data: &DataSplit, widths: &[usize], cfg: &TrainConfig, spec: &AlgorithmSpec) -> Result<TrainResult> {
    match spec.kind {
        AlgorithmKind::Random => train_random(data, widths, cfg, spec),
        AlgorithmKind::Imp => train_imp(data, widths, cfg, spec),
        AlgorithmKind::Dnw => train_dnw(data, widths, cfg, spec),
        AlgorithmKind::Rigl => train_rigl(data, widths, cfg, spec),
        AlgorithmKind::HybridDnw => train_hybrid_dnw(data, widths, cfg, spec),
    }
}
