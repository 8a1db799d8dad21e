//! Masks, magnitude ranking and degree bookkeeping.
//!
//! All rankings use absolute value. Ties are broken by flat row-major index,
//! the lower index ranking first in both directions, so every selection here
//! is a pure function of its inputs.

use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::SparseModel;

/// Binary connectivity pattern of one layer, congruent to its weight matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl Mask {
    pub fn ones(rows: usize, cols: usize) -> Self {
        Mask {
            rows,
            cols,
            bits: vec![1; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mask {
            rows,
            cols,
            bits: vec![0; rows * cols],
        }
    }

    /// Builds a mask from 0/1 entries.
    pub fn from_bits(rows: usize, cols: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} bits for a {rows}x{cols} mask",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::input("mask entries must be 0 or 1"));
        }
        Ok(Mask { rows, cols, bits })
    }

    /// Builds a mask whose active positions are the given flat indices.
    pub fn from_indices(rows: usize, cols: usize, indices: &[usize]) -> Result<Self> {
        let mut mask = Mask::zeros(rows, cols);
        for &i in indices {
            if i >= rows * cols {
                return Err(Error::input(format!(
                    "index {i} out of bounds for {rows}x{cols}"
                )));
            }
            mask.bits[i] = 1;
        }
        Ok(mask)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn is_active(&self, flat: usize) -> bool {
        self.bits[flat] == 1
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c] == 1
    }

    #[inline]
    pub fn set(&mut self, flat: usize, active: bool) {
        self.bits[flat] = u8::from(active);
    }

    pub fn nnz(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Active flat indices in ascending order.
    pub fn active_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (b == 1).then_some(i))
            .collect()
    }

    pub fn density(&self) -> f64 {
        self.nnz() as f64 / self.len() as f64
    }
}

/// Fraction of weights kept in every layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsitySpec {
    density: f64,
}

impl SparsitySpec {
    pub fn new(density: f64) -> Result<Self> {
        check_density(density)?;
        Ok(SparsitySpec { density })
    }

    pub fn from_sparsity(sparsity: f64) -> Result<Self> {
        SparsitySpec::new(1.0 - sparsity)
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn sparsity(&self) -> f64 {
        1.0 - self.density
    }

    /// Sparsity is always allocated per layer.
    pub fn per_layer(&self) -> bool {
        true
    }
}

fn check_density(density: f64) -> Result<()> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::input(format!("density {density} not in (0, 1]")));
    }
    Ok(())
}

/// Number of weights kept in a `rows × cols` layer at the given density:
/// `max(1, round_half_up(density · rows · cols))`.
pub fn density_to_k(rows: usize, cols: usize, density: f64) -> Result<usize> {
    check_density(density)?;
    let total = rows * cols;
    if total == 0 {
        return Err(Error::shape("zero-sized layer"));
    }
    let k = (density * total as f64 + 0.5).floor() as usize;
    Ok(k.clamp(1, total))
}

/// Larger magnitude first, then lower index.
#[inline]
fn by_magnitude_desc(values: &[f64], a: usize, b: usize) -> Ordering {
    values[b]
        .abs()
        .total_cmp(&values[a].abs())
        .then(a.cmp(&b))
}

/// Smaller magnitude first, then lower index.
#[inline]
fn by_magnitude_asc(values: &[f64], a: usize, b: usize) -> Ordering {
    values[a]
        .abs()
        .total_cmp(&values[b].abs())
        .then(a.cmp(&b))
}

/// The `k` largest-magnitude positions among `candidates` (unordered).
fn select_largest(values: &[f64], mut candidates: Vec<usize>, k: usize) -> Vec<usize> {
    if k < candidates.len() {
        if k > 0 {
            candidates.select_nth_unstable_by(k - 1, |&a, &b| by_magnitude_desc(values, a, b));
        }
        candidates.truncate(k);
    }
    candidates
}

/// The `k` smallest-magnitude positions among `candidates`, ascending.
fn select_smallest_sorted(values: &[f64], mut candidates: Vec<usize>, k: usize) -> Vec<usize> {
    if k < candidates.len() {
        if k > 0 {
            candidates.select_nth_unstable_by(k - 1, |&a, &b| by_magnitude_asc(values, a, b));
        }
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(|&a, &b| by_magnitude_asc(values, a, b));
    candidates
}

/// Mask keeping the `k` entries of largest magnitude.
pub fn top_k_mask(values: &Matrix, k: usize) -> Result<Mask> {
    let total = values.len();
    if k == 0 || k > total {
        return Err(Error::input(format!("k = {k} outside 1..={total}")));
    }
    let winners = select_largest(values.values(), (0..total).collect(), k);
    let mut mask = Mask::zeros(values.rows(), values.cols());
    for i in winners {
        mask.bits[i] = 1;
    }
    Ok(mask)
}

/// The `floor(fraction · nnz)` active positions of smallest magnitude,
/// ordered by ascending magnitude.
pub fn bottom_fraction_indices(
    values: &Matrix,
    restrict_to: &Mask,
    fraction: f64,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::input(format!("fraction {fraction} not in [0, 1]")));
    }
    let nnz = restrict_to.nnz();
    if nnz == 0 {
        return Err(Error::input("mask has no active entries"));
    }
    let count = (fraction * nnz as f64).floor() as usize;
    bottom_k_active(values, restrict_to, count)
}

/// The `count` active positions of smallest magnitude, ascending.
pub fn bottom_k_active(values: &Matrix, restrict_to: &Mask, count: usize) -> Result<Vec<usize>> {
    if values.shape() != restrict_to.shape() {
        return Err(Error::shape(format!(
            "values {:?} vs mask {:?}",
            values.shape(),
            restrict_to.shape()
        )));
    }
    let active = restrict_to.active_indices();
    if count > active.len() {
        return Err(Error::input(format!(
            "asked for {count} of {} active entries",
            active.len()
        )));
    }
    Ok(select_smallest_sorted(values.values(), active, count))
}

/// Up to `count` inactive positions with the largest `|scores|`, in
/// descending order of score.
pub fn top_k_inactive(scores: &Matrix, mask: &Mask, count: usize) -> Result<Vec<usize>> {
    if scores.shape() != mask.shape() {
        return Err(Error::shape(format!(
            "scores {:?} vs mask {:?}",
            scores.shape(),
            mask.shape()
        )));
    }
    let inactive: Vec<usize> = (0..mask.len()).filter(|&i| !mask.is_active(i)).collect();
    let count = count.min(inactive.len());
    let mut chosen = select_largest(scores.values(), inactive, count);
    chosen.sort_unstable_by(|&a, &b| by_magnitude_desc(scores.values(), a, b));
    Ok(chosen)
}

/// Uniformly random mask with exactly `k` active entries.
pub fn random_mask<R: Rng + ?Sized>(rows: usize, cols: usize, k: usize, rng: &mut R) -> Result<Mask> {
    let total = rows * cols;
    if k == 0 || k > total {
        return Err(Error::input(format!("k = {k} outside 1..={total}")));
    }
    let mut mask = Mask::zeros(rows, cols);
    for i in index::sample(rng, total, k) {
        mask.bits[i] = 1;
    }
    Ok(mask)
}

/// Active incoming connections of each output node (row counts).
pub fn in_degree(mask: &Mask) -> Vec<usize> {
    mask.bits
        .chunks(mask.cols.max(1))
        .take(mask.rows)
        .map(|row| row.iter().map(|&b| b as usize).sum())
        .collect()
}

/// `1 − nnz / total` over all layer masks; biases are not counted.
pub fn model_sparsity(model: &SparseModel) -> f64 {
    let (nnz, total) = model.layers().iter().fold((0, 0), |(n, t), l| {
        (n + l.mask().nnz(), t + l.mask().len())
    });
    if total == 0 {
        return 0.0;
    }
    1.0 - nnz as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn density_to_k_examples() {
        assert_eq!(density_to_k(10, 10, 1.0).unwrap(), 100);
        assert_eq!(density_to_k(10, 10, 0.095).unwrap(), 10);
        assert_eq!(density_to_k(1, 3, 0.01).unwrap(), 1);
        assert!(density_to_k(3, 3, 0.0).is_err());
        assert!(density_to_k(3, 3, 1.5).is_err());
        assert!(density_to_k(3, 3, f64::NAN).is_err());
    }

    #[test]
    fn top_k_by_magnitude() {
        let mask = top_k_mask(&m(&[vec![3.0, -1.0], vec![0.5, 2.0]]), 2).unwrap();
        assert_eq!(mask.bits(), &[1, 0, 0, 1]);
        let neg = top_k_mask(&m(&[vec![0.1, -5.0], vec![0.5, 2.0]]), 1).unwrap();
        assert_eq!(neg.active_indices(), vec![1]);
    }

    #[test]
    fn top_k_ties_go_to_lower_index() {
        let mask = top_k_mask(&m(&[vec![1.0, 1.0], vec![-1.0, 1.0]]), 2).unwrap();
        assert_eq!(mask.active_indices(), vec![0, 1]);
    }

    #[test]
    fn top_k_rejects_bad_k() {
        let v = m(&[vec![1.0, 2.0]]);
        assert!(top_k_mask(&v, 0).is_err());
        assert!(top_k_mask(&v, 3).is_err());
    }

    #[test]
    fn bottom_fraction_examples() {
        let v = m(&[vec![3.0, -1.0], vec![0.5, 2.0]]);
        let all = Mask::ones(2, 2);
        assert!(bottom_fraction_indices(&v, &all, 0.0).unwrap().is_empty());
        assert_eq!(bottom_fraction_indices(&v, &all, 0.5).unwrap(), vec![2, 1]);
        assert_eq!(bottom_fraction_indices(&v, &all, 1.0).unwrap(), vec![2, 1, 3, 0]);
    }

    #[test]
    fn bottom_fraction_respects_mask() {
        let v = m(&[vec![3.0, -1.0], vec![0.5, 2.0]]);
        let mask = Mask::from_bits(2, 2, vec![1, 1, 0, 1]).unwrap();
        assert_eq!(bottom_fraction_indices(&v, &mask, 0.7).unwrap(), vec![1, 3]);
        assert!(bottom_fraction_indices(&v, &Mask::zeros(2, 2), 0.5).is_err());
    }

    #[test]
    fn top_k_inactive_orders_by_score() {
        let g = m(&[vec![0.1, -0.9, 0.3], vec![0.9, 0.0, 0.2]]);
        let mask = Mask::from_bits(2, 3, vec![1, 0, 0, 0, 1, 0]).unwrap();
        assert_eq!(top_k_inactive(&g, &mask, 2).unwrap(), vec![1, 3]);
        // more requested than available
        assert_eq!(top_k_inactive(&g, &mask, 10).unwrap().len(), 4);
    }

    #[test]
    fn in_degree_examples() {
        assert_eq!(in_degree(&Mask::ones(3, 4)), vec![4, 4, 4]);
        let row0 = Mask::from_indices(3, 4, &[0, 2, 3]).unwrap();
        assert_eq!(in_degree(&row0), vec![3, 0, 0]);
    }

    #[test]
    fn random_mask_has_exact_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mask = random_mask(16, 16, 25, &mut rng).unwrap();
        assert_eq!(mask.nnz(), 25);
        let mut naive = vec![0; 16];
        for r in 0..16 {
            for c in 0..16 {
                naive[r] += mask.get(r, c) as usize;
            }
        }
        assert_eq!(in_degree(&mask), naive);
        assert_eq!(in_degree(&mask).iter().sum::<usize>(), 25);
    }
}
