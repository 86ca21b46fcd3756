use crate::error::{Error, Result};

/// Gaussian RBF kernel `exp(-|x - y|^2 / (2 bandwidth^2))`.
pub fn rbf_kernel(x: &[f64], y: &[f64], bandwidth: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::input(format!(
            "rbf_kernel: dimension mismatch {} vs {}",
            x.len(),
            y.len()
        )));
    }
    check_bandwidth(bandwidth)?;
    Ok(rbf_unchecked(x, y, bandwidth))
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub(crate) fn rbf_unchecked(x: &[f64], y: &[f64], bandwidth: f64) -> f64 {
    (-sq_dist(x, y) / (2.0 * bandwidth * bandwidth)).exp()
}

fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::input(format!("bandwidth must be positive, got {bandwidth}")));
    }
    Ok(())
}

fn check_sets<X: AsRef<[f64]>>(xs: &[X], ys: &[X]) -> Result<usize> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::input("mmd: empty sample set"));
    }
    if xs.len() != ys.len() {
        return Err(Error::input(format!(
            "mmd: sample sets must have equal size, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let dim = xs[0].as_ref().len();
    if xs.iter().chain(ys).any(|v| v.as_ref().len() != dim) {
        return Err(Error::input("mmd: vectors differ in dimension"));
    }
    Ok(dim)
}

/// Biased (V-statistic) squared MMD between two equally sized sample sets:
///
/// `1/B² Σ k(x_i,x_j) + 1/B² Σ k(y_i,y_j) - 2/B² Σ k(x_i,y_j)`.
///
/// Sequences should be flattened to one vector per sample by the caller.
pub fn mmd_biased<X: AsRef<[f64]>>(xs: &[X], ys: &[X], bandwidth: f64) -> Result<f64> {
    check_sets(xs, ys)?;
    check_bandwidth(bandwidth)?;
    let value = mmd_unchecked(xs, ys, bandwidth);
    if value < -1e-12 {
        return Err(Error::numeric("mmd", format!("negative statistic {value}")));
    }
    Ok(value.max(0.0))
}

pub(crate) fn mmd_unchecked<X: AsRef<[f64]>>(xs: &[X], ys: &[X], bandwidth: f64) -> f64 {
    let b2 = (xs.len() * xs.len()) as f64;
    let mut sxx = 0.0;
    for xi in xs {
        for xj in xs {
            sxx += rbf_unchecked(xi.as_ref(), xj.as_ref(), bandwidth);
        }
    }
    let mut syy = 0.0;
    for yi in ys {
        for yj in ys {
            syy += rbf_unchecked(yi.as_ref(), yj.as_ref(), bandwidth);
        }
    }
    let mut sxy = 0.0;
    for xi in xs {
        for yj in ys {
            sxy += rbf_unchecked(xi.as_ref(), yj.as_ref(), bandwidth);
        }
    }
    sxx / b2 + syy / b2 - 2.0 * sxy / b2
}

/// Median heuristic: the median Euclidean distance over all distinct pairs of
/// the pooled sample. Falls back to 1.0 when the pool is degenerate.
pub fn median_bandwidth<X: AsRef<[f64]>>(xs: &[X], ys: &[X]) -> f64 {
    let pool: Vec<&[f64]> = xs.iter().chain(ys).map(|v| v.as_ref()).collect();
    let mut dists = Vec::with_capacity(pool.len() * pool.len().saturating_sub(1) / 2);
    for i in 0..pool.len() {
        for j in (i + 1)..pool.len() {
            dists.push(sq_dist(pool[i], pool[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    let med = if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    };
    if med > 1e-8 && med.is_finite() {
        med
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_identity_is_one() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.5).unwrap(), 1.0);
        assert_eq!(rbf_kernel(&[-3.0], &[-3.0], 7.0).unwrap(), 1.0);
    }

    #[test]
    fn kernel_at_sqrt2_sigma() {
        let s = 0.8;
        let k = rbf_kernel(&[0.0], &[s * 2f64.sqrt()], s).unwrap();
        assert!((k - (-1f64).exp()).abs() < 1e-12);
        assert!((k - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn kernel_rejects_bad_input() {
        assert!(matches!(rbf_kernel(&[0.0], &[0.0, 1.0], 1.0), Err(Error::Input(_))));
        assert!(rbf_kernel(&[0.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn mmd_single_point_closed_form() {
        let (d, s) = (1.3, 0.7);
        let got = mmd_biased(&[vec![0.0]], &[vec![d]], s).unwrap();
        let want = 2.0 * (1.0 - (-d * d / (2.0 * s * s)).exp());
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn mmd_identical_is_zero() {
        let xs = vec![vec![0.1, 0.4], vec![-1.0, 2.0], vec![3.0, 0.0]];
        assert!(mmd_biased(&xs, &xs, 1.5).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mmd_rejects_unequal_and_empty() {
        let a = vec![vec![0.0], vec![1.0]];
        let b = vec![vec![0.0]];
        assert!(mmd_biased(&a, &b, 1.0).is_err());
        let e: Vec<Vec<f64>> = vec![];
        assert!(mmd_biased(&e, &e, 1.0).is_err());
        assert!(mmd_biased(&[vec![0.0]], &[vec![0.0, 1.0]], 1.0).is_err());
    }

    #[test]
    fn median_of_pairs() {
        // pooled points 0, 1, 3 -> distances 1, 2, 3
        let xs = vec![vec![0.0], vec![1.0]];
        let ys = vec![vec![3.0]];
        assert_eq!(median_bandwidth(&xs, &ys), 2.0);
        assert_eq!(median_bandwidth(&[vec![1.0]], &[vec![1.0]]), 1.0);
    }
}
