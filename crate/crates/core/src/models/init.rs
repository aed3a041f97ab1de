//! Parameter initialisation schemes.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::ndnum::Matrix;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar>(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Matrix<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| T::lit(rng.gen_range(-limit..limit)))
}

/// Square orthogonal matrix from the QR factorisation of a Gaussian draw.
///
/// Modified Gram-Schmidt on the columns; column signs follow `diag(R) > 0`.
pub fn orthogonal<T: Scalar>(n: usize, rng: &mut Rng) -> Matrix<T> {
    loop {
        let g: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
        if let Some(q) = gram_schmidt(n, g) {
            return Matrix::from_fn(n, n, |i, j| T::lit(q[i * n + j]));
        }
    }
}

// Returns None when the draw is numerically rank deficient.
fn gram_schmidt(n: usize, mut a: Vec<f64>) -> Option<Vec<f64>> {
    for j in 0..n {
        for k in 0..j {
            let dot: f64 = (0..n).map(|i| a[i * n + j] * a[i * n + k]).sum();
            for i in 0..n {
                a[i * n + j] -= dot * a[i * n + k];
            }
        }
        let norm = (0..n).map(|i| a[i * n + j].powi(2)).sum::<f64>().sqrt();
        if norm < 1e-10 {
            return None;
        }
        for i in 0..n {
            a[i * n + j] /= norm;
        }
    }
    Some(a)
}
