//! Small numeric building blocks shared by the models: parameter traversal,
//! initialization, softmax cross-entropy and dropout.

use ndarray::{Array1, Array2, ArrayView1, ArrayViewD, ArrayViewMutD, Dimension};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Range of the uniform weight initialization.
pub const INIT_RANGE: f64 = 0.1;

/// A model whose weights can be enumerated in a stable order.
///
/// Gradients are stored in a value of the same type, so that the optimizer
/// can zip parameters and gradients tensor by tensor.
pub trait Parameters: Clone {
    /// Named views of every tensor, in a fixed order.
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)>;

    /// Mutable views in the same order as [`Parameters::tensors`].
    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>>;

    fn zeros_like(&self) -> Self {
        let mut zero = self.clone();
        for mut t in zero.tensors_mut() {
            t.fill(0.0);
        }
        zero
    }

    fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Adds `scale * other` to every tensor.
    fn scaled_add(&mut self, scale: f64, other: &Self) {
        let src = other.tensors();
        for (mut dst, (_, src)) in self.tensors_mut().into_iter().zip(src) {
            dst.scaled_add(scale, &src);
        }
    }

    /// Flattens all tensors into one vector.
    fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter().copied().collect::<Vec<_>>())
            .collect()
    }

    /// Mutable access to the `k`-th scalar in [`Parameters::flatten`] order.
    fn with_scalar_mut<F: FnOnce(&mut f64)>(&mut self, mut k: usize, f: F) {
        for mut t in self.tensors_mut() {
            if k < t.len() {
                let slot = t.iter_mut().nth(k).expect("index within tensor");
                f(slot);
                return;
            }
            k -= t.len();
        }
        panic!("scalar index out of range");
    }
}

pub(crate) fn view<'a, D: Dimension>(name: &str, a: &'a ndarray::Array<f64, D>) -> (String, ArrayViewD<'a, f64>) {
    (name.to_owned(), a.view().into_dyn())
}

pub(crate) fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-INIT_RANGE..INIT_RANGE))
}

pub(crate) fn uniform_vector(rng: &mut ChaCha8Rng, len: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(len, || rng.random_range(-INIT_RANGE..INIT_RANGE))
}

/// Index of the maximum entry. Ties go to the lowest index; NaN never wins.
pub fn argmax(scores: ArrayView1<f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Softmax cross-entropy for one example.
///
/// Entries equal to `-inf` are masked classes with zero probability. Returns
/// the loss and the gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: ArrayView1<f64>, gold: usize) -> (f64, Array1<f64>) {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exp = logits.mapv(|x| (x - max).exp());
    let z: f64 = exp.sum();
    let log_z = max + z.ln();
    let loss = log_z - logits[gold];
    let mut grad = exp / z;
    grad[gold] -= 1.0;
    (loss, grad)
}

/// Inverted dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`. A rate of zero draws nothing from the generator.
pub fn dropout_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rate: f64) -> Option<Array2<f64>> {
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(Array2::from_shape_simple_fn((rows, cols), || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}
