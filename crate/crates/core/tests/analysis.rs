mod common;

use common::*;
use sparselab::algorithms::{train, widths_for, AlgorithmSpec};
use sparselab::analysis::*;
use sparselab::{evaluate, LayerState, Mask, Matrix, SparseModel, TrainConfig};

fn cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.05,
        batch_size: 16,
        epochs: 2,
        ..TrainConfig::default()
    }
    .with_seed(seed)
}

#[test]
fn reinit_keeps_masks_and_draws_new_weights() {
    let data = small_split(1);
    let r = train(&data, &widths_for(&data, &[10]), &cfg(1), &AlgorithmSpec::dnw(0.3).unwrap()).unwrap();
    let shapes = r.layer_shapes();
    let a = reinit_with_structure(&r.final_masks, &shapes, 5).unwrap();
    let b = reinit_with_structure(&r.final_masks, &shapes, 6).unwrap();
    assert_eq!(a.masks(), r.final_masks);
    assert_eq!(b.masks(), r.final_masks);
    assert_ne!(a.layers()[0].weights(), b.layers()[0].weights());
    for layer in a.layers() {
        assert_eq!(layer.weights(), layer.init_weights());
    }

    let ones: Vec<Mask> = shapes.iter().map(|&(r, c)| Mask::ones(r, c)).collect();
    let dense = reinit_with_structure(&ones, &shapes, 5).unwrap();
    assert!(dense.layers().iter().all(|l| l.mask().nnz() == l.mask().len()));
    assert_eq!(dense.layers()[0].weights(), a.layers()[0].weights());

    assert!(reinit_with_structure(&r.final_masks[..1], &shapes, 5).is_err());
}

#[test]
fn duplicate_seeds_give_zero_spread() {
    let data = small_split(2);
    let src = train(&data, &widths_for(&data, &[10]), &cfg(1), &AlgorithmSpec::random(0.4).unwrap()).unwrap();
    let rep = reinit_experiment(&src, &data, &cfg(0), &[9, 9]).unwrap();
    assert_eq!(rep.accuracies[0], rep.accuracies[1]);
    assert_eq!(rep.std, 0.0);
    assert!(reinit_experiment(&src, &data, &cfg(0), &[9]).is_err());
}

#[test]
fn full_density_structures_reinit_alike() {
    let data = small_split(3);
    let widths = widths_for(&data, &[10]);
    let seeds = [1, 2, 3];
    let means: Vec<f64> = [AlgorithmSpec::random(1.0).unwrap(), AlgorithmSpec::dnw(1.0).unwrap()]
        .iter()
        .map(|spec| {
            let src = train(&data, &widths, &cfg(4), spec).unwrap();
            reinit_experiment(&src, &data, &cfg(0), &seeds).unwrap().mean
        })
        .collect();
    assert_eq!(means[0], means[1]);
}

#[test]
fn sensitivity_endpoints_and_counts() {
    let data = small_split(4);
    let r = train(&data, &widths_for(&data, &[10]), &cfg(1), &AlgorithmSpec::rigl(0.3).unwrap()).unwrap();
    let trained_acc = evaluate(&r.model, &data.test).unwrap().accuracy;
    let zero = SparseModel::from_layers(
        r.model
            .layers()
            .iter()
            .map(|l| {
                let (rows, cols) = l.weights().shape();
                LayerState::new(Matrix::zeros(rows, cols), l.bias().to_vec(), l.mask().clone()).unwrap()
            })
            .collect(),
    )
    .unwrap();
    let zero_acc = evaluate(&zero, &data.test).unwrap().accuracy;
    let nnz: Vec<usize> = r.final_masks.iter().map(Mask::nnz).collect();

    for order in [RemovalOrder::AscendingMagnitude, RemovalOrder::Random] {
        let curve = sensitivity_sweep(&r.model, order, &DEFAULT_FRACTIONS, &data.test, 3).unwrap();
        assert_eq!(curve.points.len(), 11);
        assert_eq!(curve.points[0].accuracy, trained_acc);
        assert_eq!(curve.points[0].removed, 0);
        assert_eq!(curve.points[10].accuracy, zero_acc);
        assert_eq!(curve.points[10].removed, nnz.iter().sum::<usize>());
        let want: usize = nnz.iter().map(|&n| (0.3 * n as f64).floor() as usize).sum();
        assert_eq!(curve.points[3].removed, want);
        assert!((0.0..=1.0).contains(&curve_area(&curve).unwrap()));
    }
    // The trained model is not touched.
    assert_eq!(evaluate(&r.model, &data.test).unwrap().accuracy, trained_acc);
}

#[test]
fn removal_prefixes_nest() {
    let mut rng = rng(5);
    let model = random_model(&mut rng, &[6, 5, 3], 0.6);
    for order in [RemovalOrder::AscendingMagnitude, RemovalOrder::Random] {
        let orders = removal_orders(&model, order, 11).unwrap();
        let mut prev: Option<SparseModel> = None;
        for &f in &DEFAULT_FRACTIONS {
            let (pruned, _) = prune_copy(&model, &orders, f);
            if let Some(p) = &prev {
                for (a, b) in p.layers().iter().zip(pruned.layers()) {
                    for (x, y) in a.weights().values().iter().zip(b.weights().values()) {
                        // zeroed earlier ⇒ still zeroed
                        assert!(*x != 0.0 || *y == 0.0);
                    }
                }
            }
            prev = Some(pruned);
        }
        for (layer, ord) in model.layers().iter().zip(&orders) {
            let mut sorted = ord.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, layer.mask().active_indices());
        }
    }
    let by_mag = removal_orders(&model, RemovalOrder::AscendingMagnitude, 0).unwrap();
    let w = model.layers()[0].weights().values();
    assert!(by_mag[0].windows(2).all(|p| w[p[0]].abs() <= w[p[1]].abs()));
    assert_eq!(
        removal_orders(&model, RemovalOrder::Random, 1).unwrap(),
        removal_orders(&model, RemovalOrder::Random, 1).unwrap()
    );
}

#[test]
fn bad_fraction_lists_rejected() {
    let mut rng = rng(6);
    let model = random_model(&mut rng, &[3, 3, 2], 1.0);
    let test = sparselab::Dataset::new(Matrix::zeros(2, 3), vec![0, 1], 2).unwrap();
    for bad in [&[0.1, 0.5][..], &[0.0, 0.5, 0.5], &[0.0, 1.5], &[]] {
        assert!(sensitivity_sweep(&model, RemovalOrder::Random, bad, &test, 0).is_err(), "{bad:?}");
    }
}

#[test]
fn degree_trace_of_dnw_is_conserved_and_correlated_with_itself() {
    let data = small_split(7);
    let r = train(&data, &widths_for(&data, &[10]), &cfg(2), &AlgorithmSpec::dnw(0.3).unwrap()).unwrap();
    let hidden = &r.degree_trace[0];
    assert_eq!(hidden.nodes(), 10);
    assert_eq!(hidden.epochs(), 2);
    let last = hidden.epochs();
    if let Some(rho) = degree_correlation(hidden, last, last).unwrap() {
        assert_eq!(rho, 1.0);
    }
    if let Some(rho) = degree_correlation(hidden, 1, last).unwrap() {
        assert!((-1.0..=1.0).contains(&rho));
    }
}

#[test]
fn static_random_trace_never_changes() {
    let data = small_split(8);
    let r = train(&data, &widths_for(&data, &[10]), &cfg(2), &AlgorithmSpec::random(0.3).unwrap()).unwrap();
    for trace in &r.degree_trace {
        assert!(trace.rows().windows(2).all(|w| w[0] == w[1]));
    }
}
