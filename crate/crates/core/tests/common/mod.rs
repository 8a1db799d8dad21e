//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparselab::gradcheck::{finite_difference_gradient, relative_error};
use sparselab::algorithms::AlgorithmKind;
use sparselab::io::structure::{StructureFile, StructureMeta};
use sparselab::io::synthetic_gaussians;
use sparselab::sparsity::random_mask;
use sparselab::{backward, density_to_k, forward, DataSplit, LayerState, Mask, Matrix, SparseModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Full-sort oracle: positions of the `k` largest magnitudes, ties to the
/// lower flat index.
pub fn brute_top_k(values: &[f64], k: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .abs()
            .partial_cmp(&values[a].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut keep = vec![false; values.len()];
    for &i in &idx[..k] {
        keep[i] = true;
    }
    keep
}

/// Full-sort oracle for the `floor(f · nnz)` smallest active magnitudes.
pub fn brute_bottom_fraction(values: &[f64], active: &[bool], fraction: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| active[i]).collect();
    idx.sort_by(|&a, &b| {
        values[a]
            .abs()
            .partial_cmp(&values[b].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    let count = (fraction * idx.len() as f64).floor() as usize;
    idx.truncate(count);
    idx
}

/// Values drawn from a small pool so that magnitude ties are common.
pub fn tied_values(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let pool = [0.0, 0.5, -0.5, 1.0, -1.0, 0.25, 2.0, -2.0];
    (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                pool[rng.random_range(0..pool.len())]
            } else {
                rng.random_range(-3.0..3.0)
            }
        })
        .collect()
}

/// Model with uniform weights and biases in `[-1, 1]` and a random mask
/// keeping each weight with probability `keep` (at least one per layer).
pub fn random_model(rng: &mut impl Rng, widths: &[usize], keep: f64) -> SparseModel {
    let layers = widths
        .windows(2)
        .map(|w| {
            let (rows, cols) = (w[1], w[0]);
            let weights: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bias: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut bits: Vec<u8> = (0..rows * cols).map(|_| rng.random_bool(keep) as u8).collect();
            bits[rng.random_range(0..rows * cols)] = 1;
            LayerState::new(
                Matrix::from_vec(rows, cols, weights).unwrap(),
                bias,
                Mask::from_bits(rows, cols, bits).unwrap(),
            )
            .unwrap()
        })
        .collect();
    SparseModel::from_layers(layers).unwrap()
}

pub fn random_batch(rng: &mut impl Rng, n: usize, features: usize, classes: usize) -> (Matrix, Vec<usize>) {
    let x: Vec<f64> = (0..n * features).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = (0..n).map(|_| rng.random_range(0..classes)).collect();
    (Matrix::from_vec(n, features, x).unwrap(), y)
}

pub const GRAD_EPS: f64 = 1e-5;
/// Denominator floor for the relative error, so that entries whose true
/// gradient is ~0 are compared on an absolute scale.
pub const GRAD_FLOOR: f64 = 1e-4;
/// Pre-activations closer than this to the ReLU kink are resampled: a
/// central difference straddling the kink is not a derivative.
pub const KINK_MARGIN: f64 = 1e-3;

/// One gradient-check case with at most 60 parameters. Returns the largest
/// relative error over all weights (straight-through gradient) and biases.
pub fn gradcheck_case(seed: u64) -> f64 {
    let mut rng = rng(seed);
    loop {
        let widths: Vec<usize> = loop {
            let w = vec![
                rng.random_range(2..=5),
                rng.random_range(2..=5),
                rng.random_range(2..=4),
            ];
            let params: usize = w.windows(2).map(|p| p[0] * p[1] + p[1]).sum();
            if params <= 60 {
                break w;
            }
        };
        let model = random_model(&mut rng, &widths, 0.7);
        let (x, y) = random_batch(&mut rng, 3, widths[0], widths[2]);
        let acts = forward(&model, &x).unwrap();
        let near_kink = acts.pre[..acts.pre.len() - 1]
            .iter()
            .any(|z| z.values().iter().any(|v| v.abs() < KINK_MARGIN));
        if near_kink {
            continue;
        }
        let analytic = backward(&model, &acts, &y).unwrap();
        let numeric = finite_difference_gradient(&model, &x, &y, GRAD_EPS).unwrap();
        let mut worst = 0.0f64;
        for l in 0..widths.len() - 1 {
            for (a, n) in analytic.dense_weights[l].values().iter().zip(numeric.weights[l].values()) {
                worst = worst.max(relative_error(*a, *n, GRAD_FLOOR));
            }
            for (a, n) in analytic.bias[l].iter().zip(&numeric.bias[l]) {
                worst = worst.max(relative_error(*a, *n, GRAD_FLOOR));
            }
        }
        return worst;
    }
}

/// Well-separated 4-class problem, fast enough for full training runs.
pub fn small_split(seed: u64) -> DataSplit {
    DataSplit::new(
        synthetic_gaussians(60, 4, 12, 3.0, seed).unwrap(),
        synthetic_gaussians(30, 4, 12, 3.0, seed + 1000).unwrap(),
    )
    .unwrap()
}

/// Random chained layer shapes, density and metadata.
pub fn random_structure(seed: u64) -> StructureFile {
    let mut r = rng(seed);
    let n_layers = r.random_range(1..=4);
    let mut widths: Vec<usize> = (0..=n_layers).map(|_| r.random_range(1..=40)).collect();
    widths[0] = r.random_range(1..=100);
    let density = [1.0, 0.5, 0.095, 0.05, 0.01, r.random_range(0.001..1.0)][r.random_range(0..6)];
    let masks: Vec<Mask> = widths
        .windows(2)
        .map(|w| {
            let (rows, cols) = (w[1], w[0]);
            random_mask(rows, cols, density_to_k(rows, cols, density).unwrap(), &mut r).unwrap()
        })
        .collect();
    let kinds = [
        AlgorithmKind::Random,
        AlgorithmKind::Imp,
        AlgorithmKind::Dnw,
        AlgorithmKind::Rigl,
        AlgorithmKind::HybridDnw,
    ];
    StructureFile::from_masks(
        &masks,
        StructureMeta {
            algorithm: kinds[r.random_range(0..5)],
            density,
            seed: r.random(),
            epochs: r.random_range(0..20),
        },
    )
    .unwrap()
}
