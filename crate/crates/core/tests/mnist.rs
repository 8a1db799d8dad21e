//! Short training runs on the bundled MNIST subset.

use std::path::Path;

use sparselab::algorithms::{train, widths_for, AlgorithmSpec};
use sparselab::io::load_mnist_dir;
use sparselab::{density_to_k, model_sparsity, TrainConfig};

#[test]
fn sparse_random_and_dnw_mlps_on_mnist() {
    let data = load_mnist_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-10k")).unwrap();
    let widths = widths_for(&data, &[128]);
    assert_eq!(widths, vec![784, 128, 10]);
    let cfg = TrainConfig::default().with_seed(1);

    let random = train(&data, &widths, &cfg, &AlgorithmSpec::random(0.095).unwrap()).unwrap();
    let acc = random.final_accuracy().unwrap();
    assert!(acc > 0.85, "random 90.5%-sparse accuracy {acc}");
    assert!((model_sparsity(&random.model) - 0.905).abs() < 1e-3);

    let dnw = train(&data, &widths, &cfg, &AlgorithmSpec::dnw(0.095).unwrap()).unwrap();
    let nnz: Vec<usize> = dnw.final_masks.iter().map(|m| m.nnz()).collect();
    assert_eq!(nnz, vec![density_to_k(128, 784, 0.095).unwrap(), density_to_k(10, 128, 0.095).unwrap()]);
    assert_eq!(nnz, vec![9533, 122]);
}
