//! Structure analyses: retraining a found structure from fresh weights,
//! post-training pruning sensitivity, and in-degree evolution.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::algorithms::{AlgorithmKind, TrainResult};
use crate::dataset::{DataSplit, Dataset};
use crate::error::{Error, Result};
use crate::model::SparseModel;
use crate::sparsity::{bottom_fraction_indices, Mask};
use crate::train::{evaluate, stream_rng, train_static, RngStream, TrainConfig};

/// In-degrees of one layer's output nodes, one row per epoch boundary
/// (row 0 is right after initialization).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeTrace {
    layer_index: usize,
    degrees: Vec<Vec<usize>>,
}

impl DegreeTrace {
    /// Rows must have equal length and equal sums (the layer's nnz).
    pub fn new(layer_index: usize, degrees: Vec<Vec<usize>>) -> Result<Self> {
        let Some(first) = degrees.first() else {
            return Err(Error::input("degree trace needs at least one row"));
        };
        let nodes = first.len();
        let nnz: usize = first.iter().sum();
        for (e, row) in degrees.iter().enumerate() {
            if row.len() != nodes {
                return Err(Error::shape(format!(
                    "epoch {e} has {} nodes, expected {nodes}",
                    row.len()
                )));
            }
            let sum: usize = row.iter().sum();
            if sum != nnz {
                return Err(Error::InvalidState(format!(
                    "layer {layer_index} has {sum} connections at epoch {e}, {nnz} at epoch 0"
                )));
            }
        }
        Ok(DegreeTrace {
            layer_index,
            degrees,
        })
    }

    pub fn layer_index(&self) -> usize {
        self.layer_index
    }

    /// Number of training epochs covered (rows − 1).
    pub fn epochs(&self) -> usize {
        self.degrees.len() - 1
    }

    pub fn nodes(&self) -> usize {
        self.degrees[0].len()
    }

    pub fn nnz(&self) -> usize {
        self.degrees[0].iter().sum()
    }

    pub fn at(&self, epoch: usize) -> Option<&[usize]> {
        self.degrees.get(epoch).map(Vec::as_slice)
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.degrees
    }

    fn pair(&self, epoch_a: usize, epoch_b: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let get = |e: usize| {
            self.at(e).ok_or_else(|| {
                Error::input(format!("epoch {e} outside trace of {} epochs", self.epochs()))
            })
        };
        let a = get(epoch_a)?.iter().map(|&d| d as f64).collect();
        let b = get(epoch_b)?.iter().map(|&d| d as f64).collect();
        Ok((a, b))
    }
}

/// Pearson correlation of the in-degree vectors at two epochs.
///
/// `Ok(None)` when either vector is constant and the correlation is undefined.
pub fn degree_correlation(trace: &DegreeTrace, epoch_a: usize, epoch_b: usize) -> Result<Option<f64>> {
    let (a, b) = trace.pair(epoch_a, epoch_b)?;
    Ok(pearson(&a, &b))
}

/// Spearman rank correlation (average ranks for ties) of two epochs' in-degrees.
pub fn degree_rank_correlation(trace: &DegreeTrace, epoch_a: usize, epoch_b: usize) -> Result<Option<f64>> {
    let (a, b) = trace.pair(epoch_a, epoch_b)?;
    Ok(pearson(&average_ranks(&a), &average_ranks(&b)))
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Mean and population standard deviation (divisor `n`).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fresh weights from `seed` under the given masks, installed verbatim.
/// The new weights are the model's init snapshot.
pub fn reinit_with_structure(masks: &[Mask], layer_shapes: &[(usize, usize)], seed: u64) -> Result<SparseModel> {
    if masks.len() != layer_shapes.len() || masks.is_empty() {
        return Err(Error::input(format!(
            "{} masks for {} layers",
            masks.len(),
            layer_shapes.len()
        )));
    }
    for (i, (m, &s)) in masks.iter().zip(layer_shapes).enumerate() {
        if m.shape() != s {
            return Err(Error::input(format!(
                "mask {i} is {:?} but layer is {s:?}",
                m.shape()
            )));
        }
    }
    let mut widths = vec![layer_shapes[0].1];
    for (i, &(rows, cols)) in layer_shapes.iter().enumerate() {
        if cols != widths[i] {
            return Err(Error::input(format!(
                "layer {i} takes {cols} inputs but receives {}",
                widths[i]
            )));
        }
        widths.push(rows);
    }
    let mut model = SparseModel::new(&widths, &mut stream_rng(seed, RngStream::Reinit))?;
    model.set_masks(masks.to_vec())?;
    Ok(model)
}

/// Accuracies of a structure retrained from several fresh initializations.
#[derive(Debug, Clone, PartialEq)]
pub struct ReinitReport {
    pub source_algorithm: AlgorithmKind,
    pub density: f64,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Retrains `source`'s final masks from fresh weights for every seed and
/// reports test accuracy. `cfg.seed` is replaced by each seed in turn.
pub fn reinit_experiment(source: &TrainResult, data: &DataSplit, cfg: &TrainConfig, seeds: &[u64]) -> Result<ReinitReport> {
    if seeds.len() < 2 {
        return Err(Error::input("reinit experiment needs at least two seeds"));
    }
    let shapes = source.layer_shapes();
    let accuracies = seeds
        .iter()
        .map(|&seed| {
            let model = reinit_with_structure(&source.final_masks, &shapes, seed)?;
            let trained = train_static(model, &data.train, &cfg.with_seed(seed))?;
            Ok(evaluate(&trained, &data.test)?.accuracy)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_std(&accuracies);
    Ok(ReinitReport {
        source_algorithm: source.algorithm,
        density: source.density,
        seeds: seeds.to_vec(),
        accuracies,
        mean,
        std,
    })
}

/// How post-training pruning picks the weights to remove.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RemovalOrder {
    AscendingMagnitude,
    Random,
}

impl RemovalOrder {
    pub fn name(self) -> &'static str {
        match self {
            RemovalOrder::AscendingMagnitude => "magnitude",
            RemovalOrder::Random => "random",
        }
    }
}

impl fmt::Display for RemovalOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RemovalOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "magnitude" | "ascending_magnitude" => Ok(RemovalOrder::AscendingMagnitude),
            "random" => Ok(RemovalOrder::Random),
            _ => Err(Error::config(format!(
                "unknown removal order {s:?} (expected magnitude or random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub fraction_removed: f64,
    pub accuracy: f64,
    /// Weights zeroed across all layers at this point.
    pub removed: usize,
}

/// Accuracy as increasing fractions of the surviving weights are zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityCurve {
    pub order: RemovalOrder,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

pub const DEFAULT_FRACTIONS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

pub fn check_fractions(fractions: &[f64]) -> Result<()> {
    if fractions.first() != Some(&0.0) {
        return Err(Error::input("fractions must start at 0"));
    }
    if fractions.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::input("fractions must be strictly increasing"));
    }
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
        return Err(Error::input("fractions must lie in [0, 1]"));
    }
    Ok(())
}

/// Per-layer removal order for the active weights; zeroing the first
/// `floor(f · nnz)` entries removes fraction `f`. Prefixes nest by construction.
pub fn removal_orders(model: &SparseModel, order: RemovalOrder, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut rng = stream_rng(seed, RngStream::Prune);
    model
        .layers()
        .iter()
        .map(|layer| match order {
            RemovalOrder::AscendingMagnitude => {
                bottom_fraction_indices(layer.weights(), layer.mask(), 1.0)
            }
            RemovalOrder::Random => {
                let mut active = layer.mask().active_indices();
                active.shuffle(&mut rng);
                Ok(active)
            }
        })
        .collect()
}

/// Copy of `model` with the first `floor(fraction · nnz)` entries of each
/// layer's removal order zeroed.
pub fn prune_copy(model: &SparseModel, orders: &[Vec<usize>], fraction: f64) -> (SparseModel, usize) {
    let mut pruned = model.clone();
    let mut removed = 0;
    for (layer, order) in pruned.layers_mut().iter_mut().zip(orders) {
        let count = (fraction * order.len() as f64).floor() as usize;
        let w = layer.weights_mut().values_mut();
        for &i in &order[..count] {
            w[i] = 0.0;
        }
        removed += count;
    }
    (pruned, removed)
}

/// Evaluates the trained model with growing fractions of its active weights
/// zeroed, per layer. The trained model itself is never modified.
pub fn sensitivity_sweep(
    model: &SparseModel,
    order: RemovalOrder,
    fractions: &[f64],
    test: &Dataset,
    seed: u64,
) -> Result<SensitivityCurve> {
    check_fractions(fractions)?;
    if model.layers().iter().any(|l| l.mask().nnz() == 0) {
        return Err(Error::input("trained model has a layer with no active weights"));
    }
    let orders = removal_orders(model, order, seed)?;
    let points = fractions
        .iter()
        .map(|&f| {
            let (pruned, removed) = prune_copy(model, &orders, f);
            Ok(CurvePoint {
                fraction_removed: f,
                accuracy: evaluate(&pruned, test)?.accuracy,
                removed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityCurve {
        order,
        seed,
        points,
    })
}

/// Trapezoidal area under accuracy over `[0, max fraction]`.
pub fn curve_area(curve: &SensitivityCurve) -> Result<f64> {
    if curve.points.len() < 2 {
        return Err(Error::input("curve needs at least two points"));
    }
    Ok(curve
        .points
        .windows(2)
        .map(|w| (w[1].fraction_removed - w[0].fraction_removed) * (w[0].accuracy + w[1].accuracy) / 2.0)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(f64, f64)]) -> SensitivityCurve {
        SensitivityCurve {
            order: RemovalOrder::AscendingMagnitude,
            seed: 0,
            points: points
                .iter()
                .map(|&(f, a)| CurvePoint {
                    fraction_removed: f,
                    accuracy: a,
                    removed: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn area_examples() {
        assert!((curve_area(&curve(&[(0.0, 0.9), (1.0, 0.9)])).unwrap() - 0.9).abs() < 1e-15);
        assert!((curve_area(&curve(&[(0.0, 1.0), (1.0, 0.0)])).unwrap() - 0.5).abs() < 1e-15);
        let three = curve(&[(0.0, 1.0), (0.5, 0.8), (1.0, 0.2)]);
        assert!((curve_area(&three).unwrap() - 0.7).abs() < 1e-15);
        assert!(curve_area(&curve(&[(0.0, 1.0)])).is_err());
    }

    #[test]
    fn correlation_examples() {
        let trace = DegreeTrace::new(0, vec![vec![1, 2, 3], vec![2, 2, 2], vec![0, 2, 4]]).unwrap();
        assert_eq!(degree_correlation(&trace, 0, 0).unwrap(), Some(1.0));
        assert_eq!(degree_correlation(&trace, 0, 1).unwrap(), None);
        assert!((degree_correlation(&trace, 0, 2).unwrap().unwrap() - 1.0).abs() < 1e-15);
        assert!(degree_correlation(&trace, 0, 3).is_err());
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]), Some(1.0));
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
    }

    #[test]
    fn spearman_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        let trace = DegreeTrace::new(0, vec![vec![1, 2, 3, 4], vec![1, 1, 4, 4]]).unwrap();
        let rho = degree_rank_correlation(&trace, 0, 1).unwrap().unwrap();
        assert!((rho - pearson(&[1.0, 2.0, 3.0, 4.0], &[1.5, 1.5, 3.5, 3.5]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn trace_rejects_changing_nnz() {
        assert!(matches!(
            DegreeTrace::new(1, vec![vec![1, 2], vec![2, 2]]),
            Err(Error::InvalidState(_))
        ));
        assert!(DegreeTrace::new(1, vec![]).is_err());
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[0.8, 0.9, 1.0]);
        assert!((m - 0.9).abs() < 1e-15);
        assert!((s - (0.02f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[0.5, 0.5]).1, 0.0);
    }

    #[test]
    fn fraction_validation() {
        assert!(check_fractions(&DEFAULT_FRACTIONS).is_ok());
        assert!(check_fractions(&[0.1, 0.2]).is_err());
        assert!(check_fractions(&[0.0, 0.2, 0.2]).is_err());
        assert!(check_fractions(&[0.0, 1.2]).is_err());
        assert!(check_fractions(&[]).is_err());
    }

    #[test]
    fn reinit_checks_shapes() {
        let masks = vec![Mask::ones(3, 2), Mask::ones(2, 3)];
        assert!(reinit_with_structure(&masks, &[(3, 2), (2, 3)], 1).is_ok());
        assert!(reinit_with_structure(&masks, &[(3, 2), (2, 4)], 1).is_err());
        assert!(reinit_with_structure(&masks[..1], &[(3, 2), (2, 3)], 1).is_err());
        let bad_chain = vec![Mask::ones(3, 2), Mask::ones(2, 4)];
        assert!(reinit_with_structure(&bad_chain, &[(3, 2), (2, 4)], 1).is_err());
    }

    #[test]
    fn order_names_parse() {
        assert_eq!("magnitude".parse::<RemovalOrder>().unwrap(), RemovalOrder::AscendingMagnitude);
        assert_eq!("random".parse::<RemovalOrder>().unwrap(), RemovalOrder::Random);
        assert!("largest".parse::<RemovalOrder>().is_err());
    }
}
