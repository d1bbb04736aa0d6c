//! Mardia's multivariate skewness and kurtosis tests, specialized to the
//! bivariate case used for test/retest score pairs.
//!
//! Skewness: b1 = (1/n^2) sum_ij d_ij^3 with d_ij the Mahalanobis inner
//! product; n*b1/6 is compared against chi-square with p(p+1)(p+2)/6 = 4
//! degrees of freedom. Kurtosis: b2 = (1/n) sum_i d_ii^2, compared against a
//! normal approximation with mean p(p+2) = 8 and variance 8p(p+2)/n = 64/n.
//! The sample is called bivariate normal iff both tests exceed alpha.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use super::StatsError;

/// Minimum sample size; the chi-square/normal approximations are asymptotic.
pub const MARDIA_MIN_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MardiaResult {
    pub skewness_stat: f64,
    pub skewness_p: f64,
    pub kurtosis_stat: f64,
    pub kurtosis_p: f64,
    pub normal: bool,
}

/// Run both Mardia tests on paired observations.
pub fn mardia_bivariate(x: &[f64], y: &[f64], alpha: f64) -> Result<MardiaResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::MismatchedLengths { x: x.len(), y: y.len() });
    }
    let n = x.len();
    if n < MARDIA_MIN_N {
        return Err(StatsError::OutOfRangeN { n, min: MARDIA_MIN_N, max: usize::MAX });
    }
    let nf = n as f64;

    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let dx: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let dy: Vec<f64> = y.iter().map(|v| v - my).collect();

    // Covariance with the maximum-likelihood (1/n) normalization.
    let sxx = dx.iter().map(|v| v * v).sum::<f64>() / nf;
    let syy = dy.iter().map(|v| v * v).sum::<f64>() / nf;
    let sxy = dx.iter().zip(dy.iter()).map(|(a, b)| a * b).sum::<f64>() / nf;

    let det = sxx * syy - sxy * sxy;
    let scale = (sxx * syy).max(f64::MIN_POSITIVE);
    if det <= 1e-12 * scale {
        return Err(StatsError::SingularCovariance);
    }
    // inverse of the 2x2 covariance
    let ixx = syy / det;
    let iyy = sxx / det;
    let ixy = -sxy / det;

    // d_ij = (z_i)' S^-1 (z_j); accumulate b1 over all pairs, b2 over the
    // diagonal.
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for i in 0..n {
        let gx = ixx * dx[i] + ixy * dy[i];
        let gy = ixy * dx[i] + iyy * dy[i];
        for j in 0..n {
            let d = gx * dx[j] + gy * dy[j];
            b1 += d * d * d;
        }
        let dii = gx * dx[i] + gy * dy[i];
        b2 += dii * dii;
    }
    b1 /= nf * nf;
    b2 /= nf;

    let skewness_stat = nf * b1 / 6.0;
    let chi = ChiSquared::new(4.0).expect("fixed df");
    let skewness_p = 1.0 - chi.cdf(skewness_stat);

    let kurtosis_stat = (b2 - 8.0) / (64.0 / nf).sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let kurtosis_p = 2.0 * (1.0 - std_normal.cdf(kurtosis_stat.abs()));

    Ok(MardiaResult {
        skewness_stat,
        skewness_p,
        kurtosis_stat,
        kurtosis_p,
        normal: skewness_p > alpha && kurtosis_p > alpha,
    })
}
