//! Dense batch layouts consumed by the recurrent models.

use ndarray::Array2;

use super::cohort::PatientRecord;

/// One `B×2F` matrix per time step: values followed by mask bits.
pub fn step_inputs(records: &[&PatientRecord]) -> Vec<Array2<f64>> {
    let (t_len, f) = records[0].values.dim();
    (0..t_len)
        .map(|t| {
            let mut m = Array2::zeros((records.len(), 2 * f));
            for (b, r) in records.iter().enumerate() {
                r.write_input_row(t, m.row_mut(b).as_slice_mut().expect("standard layout"));
            }
            m
        })
        .collect()
}

/// `B×(T·F)` matrix of values, time-major within each row.
pub fn flat_values(records: &[&PatientRecord]) -> Array2<f64> {
    let (t_len, f) = records[0].values.dim();
    Array2::from_shape_fn((records.len(), t_len * f), |(b, k)| records[b].values[[k / f, k % f]])
}

/// `B×(T·F)` 0/1 mask matrix in the same layout as [`flat_values`].
pub fn flat_mask(records: &[&PatientRecord]) -> Array2<f64> {
    let (t_len, f) = records[0].values.dim();
    Array2::from_shape_fn((records.len(), t_len * f), |(b, k)| {
        if records[b].mask[[k / f, k % f]] {
            1.0
        } else {
            0.0
        }
    })
}
