//! Central finite-difference gradients, computed from the forward pass only.
//!
//! This is the test oracle for [`crate::model::backward`]: it shares no code
//! with the backward pass. Derivatives are taken with respect to the
//! effective weights `W ⊙ M`, which is what the straight-through gradient
//! reports at every position.

use crate::error::Result;
use crate::matrix::Matrix;
use crate::model::{loss, LayerState, SparseModel};
use crate::sparsity::Mask;

#[derive(Debug, Clone, PartialEq)]
pub struct NumericalGradient {
    pub weights: Vec<Matrix>,
    pub bias: Vec<Vec<f64>>,
}

/// Dense copy of the model whose weights are the effective weights.
fn effective_dense(model: &SparseModel) -> Result<SparseModel> {
    let layers = model
        .layers()
        .iter()
        .map(|l| {
            let (r, c) = l.weights().shape();
            LayerState::new(l.effective_weights(), l.bias().to_vec(), Mask::ones(r, c))
        })
        .collect::<Result<Vec<_>>>()?;
    SparseModel::from_layers(layers)
}

/// `(L(θ + ε) − L(θ − ε)) / 2ε` for every weight and bias.
pub fn finite_difference_gradient(
    model: &SparseModel,
    batch: &Matrix,
    labels: &[usize],
    eps: f64,
) -> Result<NumericalGradient> {
    let mut probe = effective_dense(model)?;
    let mut weights = Vec::new();
    let mut bias = Vec::new();
    for l in 0..probe.layers().len() {
        let (r, c) = probe.layers()[l].weights().shape();
        let mut gw = Matrix::zeros(r, c);
        for i in 0..r * c {
            let orig = probe.layers()[l].weights().values()[i];
            probe.layers_mut()[l].weights_mut().values_mut()[i] = orig + eps;
            let plus = loss(&probe, batch, labels)?;
            probe.layers_mut()[l].weights_mut().values_mut()[i] = orig - eps;
            let minus = loss(&probe, batch, labels)?;
            probe.layers_mut()[l].weights_mut().values_mut()[i] = orig;
            gw.values_mut()[i] = (plus - minus) / (2.0 * eps);
        }
        let mut gb = vec![0.0; r];
        for (o, g) in gb.iter_mut().enumerate() {
            let orig = probe.layers()[l].bias()[o];
            probe.layers_mut()[l].bias_mut()[o] = orig + eps;
            let plus = loss(&probe, batch, labels)?;
            probe.layers_mut()[l].bias_mut()[o] = orig - eps;
            let minus = loss(&probe, batch, labels)?;
            probe.layers_mut()[l].bias_mut()[o] = orig;
            *g = (plus - minus) / (2.0 * eps);
        }
        weights.push(gw);
        bias.push(gb);
    }
    Ok(NumericalGradient { weights, bias })
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
