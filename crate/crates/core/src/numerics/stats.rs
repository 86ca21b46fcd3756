use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Mean with a two-sided 95% Student-t interval over independent runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n_runs: usize,
}

impl ConfidenceInterval {
    pub fn half_width(&self) -> f64 {
        self.hi - self.mean
    }

    /// The interval of the negated quantity.
    pub fn negated(&self) -> Self {
        ConfidenceInterval {
            mean: -self.mean,
            lo: -self.hi,
            hi: -self.lo,
            n_runs: self.n_runs,
        }
    }

    /// Orient the interval so its mean is non-negative; used for gaps that
    /// are reported as absolute differences.
    pub fn oriented_abs(&self) -> Self {
        if self.mean < 0.0 {
            self.negated()
        } else {
            *self
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Two-sided 97.5% quantile of Student's t with `dof` degrees of freedom.
pub fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

pub fn mean_ci95(values: &[f64]) -> Result<ConfidenceInterval> {
    if values.is_empty() {
        return Err(Error::input("mean_ci95: no values"));
    }
    let n = values.len();
    let m = mean(values);
    if n == 1 {
        return Ok(ConfidenceInterval {
            mean: m,
            lo: m,
            hi: m,
            n_runs: 1,
        });
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    let half = t_quantile_975(n - 1) * var.sqrt() / (n as f64).sqrt();
    Ok(ConfidenceInterval {
        mean: m,
        lo: m - half,
        hi: m + half,
        n_runs: n,
    })
}
