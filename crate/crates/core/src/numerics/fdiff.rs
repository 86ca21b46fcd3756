use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::input("finite_diff_grad: step must be positive"));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::numeric(
                "finite_diff_grad",
                format!("non-finite objective at coordinate {i}"),
            ));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Largest coordinate-wise relative error between two gradients.
///
/// Coordinates where both magnitudes are below `floor` are compared on an
/// absolute scale of `floor`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
