use ndarray::Array2;

/// Forward-fill each column of `raw` (`None` = missing).
///
/// Cells before the first observation in a column take `cold_start[col]`.
/// Returns the filled values and the observation mask.
pub fn forward_fill(raw: &Array2<Option<f64>>, cold_start: &[f64]) -> (Array2<f64>, Array2<bool>) {
    let (t_len, f_len) = raw.dim();
    let mut values = Array2::zeros((t_len, f_len));
    let mask = raw.mapv(|v| v.is_some());
    for j in 0..f_len {
        let mut carry = cold_start[j];
        for t in 0..t_len {
            if let Some(v) = raw[[t, j]] {
                carry = v;
            }
            values[[t, j]] = carry;
        }
    }
    (values, mask)
}

/// Re-insert missing markers where `mask` is false.
pub fn with_missing(values: &Array2<f64>, mask: &Array2<bool>) -> Array2<Option<f64>> {
    let mut out = Array2::from_elem(values.raw_dim(), None);
    ndarray::Zip::from(&mut out)
        .and(values)
        .and(mask)
        .for_each(|o, &v, &m| *o = m.then_some(v));
    out
}

/// Median of the finite values in `xs`, or `None` when there are none.
pub fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    })
}
