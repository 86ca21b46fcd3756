//! Minibatch scheduling and loss guards shared by the trainers.

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Shuffle `0..n` and cut it into batches of `batch_size`. A trailing batch of
/// a single item is merged into its predecessor so every batch has at least
/// two members whenever `n >= 2`.
pub fn minibatches(n: usize, batch_size: usize, rng: &mut RngStream) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if batches.len() >= 2 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(last);
    }
    batches
}

/// Fail with a numeric error naming `term` when `value` is not finite.
pub fn ensure_finite(stage: &str, term: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(stage, format!("{term} is {value}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_everything_once() {
        let mut rng = RngStream::new(3);
        let b = minibatches(129, 64, &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![64, 65]);
        let mut all: Vec<usize> = b.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..129).collect::<Vec<_>>());
    }

    #[test]
    fn non_finite_is_reported() {
        assert!(ensure_finite("s", "t", 1.0).is_ok());
        let e = ensure_finite("train", "kld", f64::NAN).unwrap_err();
        assert!(e.to_string().contains("kld"));
    }
}
