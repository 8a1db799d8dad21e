//! Masked multilayer perceptron: layers, initialization, forward and backward passes.
//!
//! Every layer computes `z = (W ⊙ M) x + b`. Hidden layers apply ReLU, the
//! last layer feeds a softmax cross-entropy head. Backward always produces the
//! gradient with respect to the full weight matrix so the caller can choose
//! between a masked update and a straight-through (dense) update.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{axpy, Matrix, WeightMatrix};
use crate::sparsity::Mask;

/// Uniform He initialization: entries drawn from `[−√(6/cols), √(6/cols))`.
pub fn kaiming_init<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<WeightMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::shape(format!("cannot initialize a {rows}x{cols} layer")));
    }
    let bound = (6.0 / cols as f64).sqrt();
    let values = (0..rows * cols)
        .map(|_| bound * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    Matrix::from_vec(rows, cols, values)
}

/// One linear layer together with its mask and the weights it started from.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    weights: WeightMatrix,
    bias: Vec<f64>,
    init_weights: WeightMatrix,
    mask: Mask,
}

impl LayerState {
    /// Creates a layer; `weights` also becomes the immutable init snapshot.
    pub fn new(weights: WeightMatrix, bias: Vec<f64>, mask: Mask) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::shape(format!(
                "bias length {} for {} output rows",
                bias.len(),
                weights.rows()
            )));
        }
        if mask.shape() != weights.shape() {
            return Err(Error::shape(format!(
                "mask {:?} vs weights {:?}",
                mask.shape(),
                weights.shape()
            )));
        }
        if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::input("non-finite parameters"));
        }
        Ok(LayerState {
            init_weights: weights.clone(),
            weights,
            bias,
            mask,
        })
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut WeightMatrix {
        &mut self.weights
    }

    pub(crate) fn weights_and_mask_mut(&mut self) -> (&mut WeightMatrix, &Mask) {
        (&mut self.weights, &self.mask)
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn init_weights(&self) -> &WeightMatrix {
        &self.init_weights
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn set_mask(&mut self, mask: Mask) -> Result<()> {
        if mask.shape() != self.weights.shape() {
            return Err(Error::shape(format!(
                "mask {:?} vs weights {:?}",
                mask.shape(),
                self.weights.shape()
            )));
        }
        self.mask = mask;
        Ok(())
    }

    /// Overwrites the active weights with their init snapshot.
    pub fn reset_active_to_init(&mut self) {
        let init = self.init_weights.values();
        let mask = self.mask.bits();
        for (i, w) in self.weights.values_mut().iter_mut().enumerate() {
            if mask[i] == 1 {
                *w = init[i];
            }
        }
    }

    /// `W ⊙ M`, with masked-out entries exactly `+0.0`.
    pub fn effective_weights(&self) -> WeightMatrix {
        let mut eff = self.weights.clone();
        for (w, &m) in eff.values_mut().iter_mut().zip(self.mask.bits()) {
            if m == 0 {
                *w = 0.0;
            }
        }
        eff
    }

    pub fn out_features(&self) -> usize {
        self.weights.rows()
    }

    pub fn in_features(&self) -> usize {
        self.weights.cols()
    }
}

/// A stack of masked linear layers: ReLU between layers, softmax at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    layers: Vec<LayerState>,
}

impl SparseModel {
    /// Fresh dense model (all-ones masks, zero biases) for the given widths,
    /// e.g. `[784, 128, 10]`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::shape("need at least input and output widths"));
        }
        let layers = widths
            .windows(2)
            .map(|w| {
                let weights = kaiming_init(w[1], w[0], rng)?;
                LayerState::new(weights, vec![0.0; w[1]], Mask::ones(w[1], w[0]))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SparseModel { layers })
    }

    pub fn from_layers(layers: Vec<LayerState>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("model has no layers"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].in_features() != pair[0].out_features() {
                return Err(Error::shape(format!(
                    "layer {} expects {} inputs but layer {i} produces {}",
                    i + 1,
                    pair[1].in_features(),
                    pair[0].out_features()
                )));
            }
        }
        Ok(SparseModel { layers })
    }

    pub fn layers(&self) -> &[LayerState] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerState] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_features()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_features()
    }

    /// `(rows, cols)` of every weight matrix.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weights.shape()).collect()
    }

    pub fn masks(&self) -> Vec<Mask> {
        self.layers.iter().map(|l| l.mask.clone()).collect()
    }

    pub fn set_masks(&mut self, masks: Vec<Mask>) -> Result<()> {
        if masks.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "{} masks for {} layers",
                masks.len(),
                self.layers.len()
            )));
        }
        for (layer, mask) in self.layers.iter_mut().zip(masks) {
            layer.set_mask(mask)?;
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    /// `post[0]` is the input batch, `post[i + 1]` the output of layer `i`
    /// (ReLU for hidden layers, softmax probabilities for the last).
    pub post: Vec<Matrix>,
    /// Pre-activations `z` of every layer.
    pub pre: Vec<Matrix>,
    /// The masked weights used in this pass.
    effective: Vec<WeightMatrix>,
}

impl Activations {
    pub fn probabilities(&self) -> &Matrix {
        &self.post[self.post.len() - 1]
    }

    pub fn logits(&self) -> &Matrix {
        &self.pre[self.pre.len() - 1]
    }
}

/// `out[s, o] = bias[o] + Σ_i x[s, i] · w[o, i]`, four samples at a time.
///
/// Each output is summed serially over `i`, so a sample's result does not
/// depend on where it sits in the batch.
fn affine(x: &Matrix, w: &WeightMatrix, bias: &[f64]) -> Matrix {
    let (n, k) = x.shape();
    let m = w.rows();
    debug_assert_eq!(k, w.cols());
    let mut out = Matrix::zeros(n, m);
    let mut s = 0;
    while s + 4 <= n {
        let (x0, x1, x2, x3) = (x.row(s), x.row(s + 1), x.row(s + 2), x.row(s + 3));
        for o in 0..m {
            let wr = w.row(o);
            let mut acc = [0.0f64; 4];
            for i in 0..k {
                let wi = wr[i];
                acc[0] += x0[i] * wi;
                acc[1] += x1[i] * wi;
                acc[2] += x2[i] * wi;
                acc[3] += x3[i] * wi;
            }
            for (j, a) in acc.iter().enumerate() {
                out.set(s + j, o, bias[o] + a);
            }
        }
        s += 4;
    }
    for s in s..n {
        let xr = x.row(s);
        for o in 0..m {
            let mut acc = 0.0;
            for (xi, wi) in xr.iter().zip(w.row(o)) {
                acc += xi * wi;
            }
            out.set(s, o, bias[o] + acc);
        }
    }
    out
}

fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut probs = logits.clone();
    for s in 0..probs.rows() {
        let row = probs.row_mut(s);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    probs
}

/// Forward pass over a batch (`n_samples × input_dim`).
pub fn forward(model: &SparseModel, batch: &Matrix) -> Result<Activations> {
    if batch.cols() != model.input_dim() {
        return Err(Error::shape(format!(
            "batch has {} features, model expects {}",
            batch.cols(),
            model.input_dim()
        )));
    }
    let n_layers = model.layers.len();
    let mut post = Vec::with_capacity(n_layers + 1);
    let mut pre = Vec::with_capacity(n_layers);
    let mut effective = Vec::with_capacity(n_layers);
    post.push(batch.clone());
    for (i, layer) in model.layers.iter().enumerate() {
        let eff = layer.effective_weights();
        let z = affine(&post[i], &eff, &layer.bias);
        let a = if i + 1 == n_layers {
            softmax_rows(&z)
        } else {
            let mut a = z.clone();
            a.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            a
        };
        pre.push(z);
        post.push(a);
        effective.push(eff);
    }
    Ok(Activations {
        post,
        pre,
        effective,
    })
}

/// Mean softmax cross-entropy of `probs` against integer labels.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} rows vs {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::input("empty batch"));
    }
    let mut total = 0.0;
    for (s, &y) in labels.iter().enumerate() {
        if y >= probs.cols() {
            return Err(Error::input(format!("label {y} >= {} classes", probs.cols())));
        }
        total -= probs.get(s, y).max(f64::MIN_POSITIVE).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Per-layer gradients of the mean cross-entropy loss.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Straight-through gradient: `∂L/∂(W ⊙ M)` at every position, mask ignored.
    pub dense_weights: Vec<Matrix>,
    /// `dense_weights ⊙ M`, the true gradient with respect to `W`.
    pub masked_weights: Vec<Matrix>,
    pub bias: Vec<Vec<f64>>,
    /// Mean loss of the batch.
    pub loss: f64,
}

/// Backpropagates the softmax cross-entropy loss through a recorded forward pass.
pub fn backward(model: &SparseModel, acts: &Activations, labels: &[usize]) -> Result<Gradients> {
    let n_layers = model.layers.len();
    if acts.pre.len() != n_layers
        || acts.post.len() != n_layers + 1
        || acts.effective.len() != n_layers
        || acts
            .effective
            .iter()
            .zip(&model.layers)
            .any(|(e, l)| e.shape() != l.weights.shape())
    {
        return Err(Error::InvalidState(
            "activation record does not belong to this model".into(),
        ));
    }
    let probs = acts.probabilities();
    let loss = cross_entropy(probs, labels)?;
    let n = labels.len();
    let scale = 1.0 / n as f64;

    // dL/dz for the output layer: (p − onehot) / n
    let mut delta = probs.clone();
    for (s, &y) in labels.iter().enumerate() {
        let row = delta.row_mut(s);
        row[y] -= 1.0;
        row.iter_mut().for_each(|v| *v *= scale);
    }

    let mut dense_weights = vec![Matrix::zeros(0, 0); n_layers];
    let mut bias = vec![Vec::new(); n_layers];
    for i in (0..n_layers).rev() {
        let input = &acts.post[i];
        let eff = &acts.effective[i];
        let (m, k) = eff.shape();

        let mut gw = Matrix::zeros(m, k);
        let mut gb = vec![0.0; m];
        for s in 0..n {
            let d = delta.row(s);
            let x = input.row(s);
            for o in 0..m {
                if d[o] != 0.0 {
                    axpy(d[o], x, gw.row_mut(o));
                }
                gb[o] += d[o];
            }
        }

        if i > 0 {
            let mut prev = Matrix::zeros(n, k);
            for s in 0..n {
                let d = delta.row(s);
                let pr = prev.row_mut(s);
                for o in 0..m {
                    if d[o] != 0.0 {
                        axpy(d[o], eff.row(o), pr);
                    }
                }
            }
            let z_prev = &acts.pre[i - 1];
            for (g, z) in prev.values_mut().iter_mut().zip(z_prev.values()) {
                if *z <= 0.0 {
                    *g = 0.0;
                }
            }
            delta = prev;
        }
        dense_weights[i] = gw;
        bias[i] = gb;
    }

    let masked_weights = dense_weights
        .iter()
        .zip(&model.layers)
        .map(|(g, l)| {
            let mut gm = g.clone();
            for (v, &b) in gm.values_mut().iter_mut().zip(l.mask.bits()) {
                if b == 0 {
                    *v = 0.0;
                }
            }
            gm
        })
        .collect();

    Ok(Gradients {
        dense_weights,
        masked_weights,
        bias,
        loss,
    })
}

/// Mean loss of the model on a batch (forward only).
pub fn loss(model: &SparseModel, batch: &Matrix, labels: &[usize]) -> Result<f64> {
    let acts = forward(model, batch)?;
    cross_entropy(acts.probabilities(), labels)
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn kaiming_bound_and_determinism() {
        let a = kaiming_init(1, 6, &mut rng(7)).unwrap();
        assert!(a.values().iter().all(|v| v.abs() <= 1.0));
        let b = kaiming_init(1, 6, &mut rng(7)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(kaiming_init(0, 3, &mut rng(1)), Err(Error::InvalidShape(_))));
        assert!(matches!(kaiming_init(3, 0, &mut rng(1)), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn kaiming_mean_is_centered() {
        let w = kaiming_init(128, 784, &mut rng(11)).unwrap();
        let mean = w.values().iter().sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn zero_model_gives_uniform_softmax() {
        let layers = vec![
            LayerState::new(Matrix::zeros(3, 4), vec![0.0; 3], Mask::ones(3, 4)).unwrap(),
            LayerState::new(Matrix::zeros(5, 3), vec![0.0; 5], Mask::ones(5, 3)).unwrap(),
        ];
        let model = SparseModel::from_layers(layers).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0, 0.5]]).unwrap();
        let acts = forward(&model, &x).unwrap();
        for &p in acts.probabilities().values() {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_computed_two_layer_forward() {
        // z1 = [1 - 2 + 0.5, -0.5 + 1 + 1] = [-0.5, 1.5]; relu -> [0, 1.5]
        // z2 = [2*0 + 1*1.5 + 0, -1*0 + 0.5*1.5 + 0.25] = [1.5, 1.0]
        let l1 = LayerState::new(
            Matrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, -1.0]]).unwrap(),
            vec![0.5, 1.0],
            Mask::ones(2, 2),
        )
        .unwrap();
        let l2 = LayerState::new(
            Matrix::from_rows(&[vec![2.0, 1.0], vec![-1.0, 0.5]]).unwrap(),
            vec![0.0, 0.25],
            Mask::ones(2, 2),
        )
        .unwrap();
        let model = SparseModel::from_layers(vec![l1, l2]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let acts = forward(&model, &x).unwrap();
        assert_eq!(acts.pre[0].values(), &[-0.5, 1.5]);
        assert_eq!(acts.post[1].values(), &[0.0, 1.5]);
        assert_eq!(acts.logits().values(), &[1.5, 1.0]);
        let e = (0.5f64).exp();
        let p0 = e / (e + 1.0);
        assert!((acts.probabilities().get(0, 0) - p0).abs() < 1e-12);
        assert!((acts.probabilities().get(0, 1) - (1.0 - p0)).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let model = SparseModel::new(&[3, 2], &mut rng(0)).unwrap();
        let x = Matrix::zeros(1, 4);
        assert!(matches!(forward(&model, &x), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn masked_gradient_zero_dense_gradient_not() {
        // 2-2-2 model where the masked-out weight (0,1) of the first layer
        // sees input x1 = 1 and a nonzero upstream signal.
        let mut l1 = LayerState::new(
            Matrix::from_rows(&[vec![1.0, 0.7], vec![0.3, 1.0]]).unwrap(),
            vec![0.1, 0.1],
            Mask::ones(2, 2),
        )
        .unwrap();
        l1.set_mask(Mask::from_bits(2, 2, vec![1, 0, 1, 1]).unwrap()).unwrap();
        let l2 = LayerState::new(
            Matrix::from_rows(&[vec![1.0, -1.0], vec![-0.5, 2.0]]).unwrap(),
            vec![0.0, 0.0],
            Mask::ones(2, 2),
        )
        .unwrap();
        let model = SparseModel::from_layers(vec![l1, l2]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let acts = forward(&model, &x).unwrap();
        let g = backward(&model, &acts, &[0]).unwrap();
        assert_eq!(g.masked_weights[0].get(0, 1), 0.0);
        assert!(g.dense_weights[0].get(0, 1).abs() > 1e-3);
        // active positions agree between the two variants
        assert_eq!(g.masked_weights[0].get(0, 0), g.dense_weights[0].get(0, 0));
    }

    #[test]
    fn backward_rejects_foreign_record() {
        let a = SparseModel::new(&[3, 2], &mut rng(0)).unwrap();
        let b = SparseModel::new(&[3, 4, 2], &mut rng(0)).unwrap();
        let acts = forward(&a, &Matrix::zeros(1, 3)).unwrap();
        assert!(matches!(backward(&b, &acts, &[0]), Err(Error::InvalidState(_))));
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.1, 0.1, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
    }

    #[test]
    fn from_layers_checks_chaining() {
        let l1 = LayerState::new(Matrix::zeros(3, 2), vec![0.0; 3], Mask::ones(3, 2)).unwrap();
        let l2 = LayerState::new(Matrix::zeros(2, 4), vec![0.0; 2], Mask::ones(2, 4)).unwrap();
        assert!(SparseModel::from_layers(vec![l1, l2]).is_err());
    }
}
