//! Central finite-difference gradient checking.

use rand::Rng;

use super::tensor::Tensor;

/// Perturbation used for central differences.
pub const STEP: f64 = 1e-6;
/// Denominator floor for the relative error, so entries whose true gradient is
/// zero are judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-5;

/// `∂f/∂t` by central differences, one entry at a time.
pub fn numeric_grad<F: Fn(&Tensor) -> f64>(t: &Tensor, f: F) -> Vec<f64> {
    let mut probe = t.clone();
    (0..t.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + STEP;
            let up = f(&probe);
            probe.data_mut()[i] = orig - STEP;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

/// `max_i |a_i − n_i| / max(|a_i|, |n_i|, REL_FLOOR)`.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

/// Uniform entries in `[-1, 1)`.
pub fn random_tensor<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("shape matches")
}
