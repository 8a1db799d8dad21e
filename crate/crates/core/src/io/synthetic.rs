use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::train::{stream_rng, RngStream};

/// Spherical unit-variance Gaussian blobs; class `c` is centred at
/// `separation · e_c`. Samples cycle through the classes in order.
pub fn synthetic_gaussians(
    n_per_class: usize,
    n_classes: usize,
    n_features: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 || n_classes == 0 || n_features == 0 {
        return Err(Error::input("synthetic dataset counts must be at least 1"));
    }
    if n_classes > n_features {
        return Err(Error::input(format!(
            "{n_classes} class centres need at least as many features, got {n_features}"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::input(format!("separation {separation} must be >= 0")));
    }
    let mut rng = stream_rng(seed, RngStream::Data);
    let n = n_per_class * n_classes;
    let mut values = Vec::with_capacity(n * n_features);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % n_classes;
        for f in 0..n_features {
            let noise: f64 = StandardNormal.sample(&mut rng);
            values.push(if f == c { separation + noise } else { noise });
        }
        labels.push(c);
    }
    Dataset::new(Matrix::from_vec(n, n_features, values)?, labels, n_classes)
}
