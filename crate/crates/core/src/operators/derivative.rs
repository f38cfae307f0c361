use alloc::vec;
use alloc::vec::Vec;

use super::OperatorError;

/// `x[i] = sin(i / n)` for `i in 0..n`.
pub fn sine_grid(n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    (0..n).map(|i| libm::sin(i as f64 * h)).collect()
}

/// Writes `out[j] = (x[i+1] - x[i-1]) / 2h` for interior points `i = first + j + 1`.
pub fn central_differences_into(x: &[f64], h: f64, first: usize, out: &mut [f64]) {
    let scale = 1.0 / (2.0 * h);
    for (j, d) in out.iter_mut().enumerate() {
        let i = first + j + 1;
        *d = (x[i + 1] - x[i - 1]) * scale;
    }
}

/// Central differences at the `n - 2` interior points.
pub fn central_differences(x: &[f64], h: f64) -> Result<Vec<f64>, OperatorError> {
    if x.len() < 3 {
        return Err(OperatorError::InvalidSize(alloc::format!("need at least 3 samples, got {}", x.len())));
    }
    let mut out = vec![0.0; x.len() - 2];
    central_differences_into(x, h, 0, &mut out);
    Ok(out)
}
