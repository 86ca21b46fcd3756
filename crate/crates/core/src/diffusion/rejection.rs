use crate::data::Condition;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Accepted draw and the number of draws it took.
#[derive(Clone, Debug, PartialEq)]
pub struct Accepted<R> {
    pub record: R,
    pub tries: usize,
}

/// Draw from `sampler` until `attributes` of a draw equal `target`.
///
/// After `max_tries` failures the error carries the observed acceptance rate
/// (zero) and the exact one-sided 95% upper bound `1 − 0.05^(1/n)`.
pub fn rejection_sample_conditional<R, S, A>(
    mut sampler: S,
    attributes: A,
    target: &Condition,
    max_tries: usize,
    rng: &mut RngStream,
) -> Result<Accepted<R>>
where
    S: FnMut(&mut RngStream) -> Result<R>,
    A: Fn(&R) -> Condition,
{
    for tries in 1..=max_tries {
        let record = sampler(rng)?;
        if attributes(&record) == *target {
            return Ok(Accepted { record, tries });
        }
    }
    let upper = if max_tries == 0 {
        1.0
    } else {
        1.0 - 0.05f64.powf(1.0 / max_tries as f64)
    };
    Err(Error::RareCondition {
        target: target.to_string(),
        tries: max_tries,
        rate: 0.0,
        upper,
    })
}
