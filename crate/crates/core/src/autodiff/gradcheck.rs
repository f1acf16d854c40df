use super::Tensor;

/// Central finite-difference gradient of a scalar function of one tensor.
pub fn central_difference(f: impl Fn(&Tensor) -> f64, at: &Tensor, step: f64) -> Tensor {
    let mut grad = Tensor::zeros(at.rows(), at.cols());
    let mut probe = at.clone();
    for k in 0..at.len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + step;
        let plus = f(&probe);
        probe.data_mut()[k] = orig - step;
        let minus = f(&probe);
        probe.data_mut()[k] = orig;
        grad.data_mut()[k] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// `max|a - b| / max(max|b|, floor)`; the floor keeps near-zero references
/// from blowing up the ratio.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(floor);
    diff / scale
}
