//! Numerical gradient verification helpers.
//!
//! Central finite differences against a scalar-valued function; shared by
//! the unit tests and the acceptance suite.

use ndarray::ArrayD;

/// Central-difference gradient of `f` at `x`.
pub fn finite_difference<F>(f: F, x: &ArrayD<f64>, eps: f64) -> ArrayD<f64>
where
    F: Fn(&ArrayD<f64>) -> f64,
{
    let mut grad = ArrayD::zeros(x.raw_dim());
    let mut probe = x.clone();
    for idx in 0..x.len() {
        let orig = probe.as_slice_mut().expect("contiguous")[idx];
        probe.as_slice_mut().expect("contiguous")[idx] = orig + eps;
        let hi = f(&probe);
        probe.as_slice_mut().expect("contiguous")[idx] = orig - eps;
        let lo = f(&probe);
        probe.as_slice_mut().expect("contiguous")[idx] = orig;
        grad.as_slice_mut().expect("contiguous")[idx] = (hi - lo) / (2.0 * eps);
    }
    grad
}

/// Relative error between two gradient tensors: ||a - b|| / max(||a||, ||b||),
/// with 0 when both are (near) zero.
pub fn relative_error(a: &ArrayD<f64>, b: &ArrayD<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "relative_error shape mismatch");
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    let na = a.mapv(|v| v * v).sum().sqrt();
    let nb = b.mapv(|v| v * v).sum().sqrt();
    let denom = na.max(nb);
    if denom < 1e-12 {
        0.0
    } else {
        diff / denom
    }
}
