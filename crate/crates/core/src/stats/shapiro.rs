//! Shapiro-Wilk W test for normality.
//!
//! Implements Royston's AS R94 refinement of AS 181: approximate weights from
//! expected normal order statistics, the W statistic computed in its
//! cancellation-safe form, and p-values from Royston's normalizing
//! transformations (exact for n = 3). Supported range is 3 <= n <= 5000.

use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p_value: f64,
}

const MIN_N: usize = 3;
const MAX_N: usize = 5000;
const SMALL: f64 = 1e-19;

// Polynomial coefficients from AS R94, ascending order.
const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

fn poly(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// Shapiro-Wilk test. The verdict convention used elsewhere in this crate is
/// "normal" iff `p_value > alpha`.
pub fn shapiro_wilk(x: &[f64]) -> Result<ShapiroWilk, StatsError> {
    let n = x.len();
    if !(MIN_N..=MAX_N).contains(&n) {
        return Err(StatsError::OutOfRangeN { n, min: MIN_N, max: MAX_N });
    }

    let mut y = x.to_vec();
    y.sort_by(|a, b| a.partial_cmp(b).expect("sample must not contain NaN"));
    // Center on the median for numerical stability; W is location invariant.
    let center = y[n / 2];
    for v in &mut y {
        *v -= center;
    }

    if y[n - 1] - y[0] < SMALL {
        return Err(StatsError::ZeroVariance);
    }

    let a = weights(n);
    let w = w_statistic(&y, &a);
    let p_value = p_value(w, n);
    Ok(ShapiroWilk { w, p_value })
}

/// First half of the (antisymmetric) weight vector. `weights(n)[i]`
/// corresponds to order statistic i+1; the mirror weight is its negation.
fn weights(n: usize) -> Vec<f64> {
    let nn2 = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let an = n as f64;
    let an25 = an + 0.25;
    let mut m = Vec::with_capacity(nn2);
    let mut summ2 = 0.0;
    for i in 0..nn2 {
        let q = (i as f64 + 1.0 - 0.375) / an25;
        let v = normal_quantile(q);
        m.push(v);
        summ2 += v * v;
    }
    summ2 *= 2.0;
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;

    let (start, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        let num = summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1];
        let den = 1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2;
        m[1] = a2;
        (2, (num / den).sqrt())
    } else {
        let num = summ2 - 2.0 * m[0] * m[0];
        let den = 1.0 - 2.0 * a1 * a1;
        (1, (num / den).sqrt())
    };
    m[0] = a1;
    for v in m.iter_mut().skip(start) {
        *v = -*v / fac;
    }
    m
}

/// W in the cancellation-safe form: W = 1 - (ss - sax^2/ssa...)/..., computed
/// as in AS R94 so that 1 - W stays accurate when W is close to 1.
fn w_statistic(y: &[f64], a: &[f64]) -> f64 {
    let n = y.len();
    let range = y[n - 1] - y[0];
    // full antisymmetric weight at position i
    let weight = |i: usize| -> f64 {
        let j = n - 1 - i;
        if i < j {
            -a[i]
        } else if i > j {
            a[j]
        } else {
            0.0
        }
    };

    let mut sx = 0.0;
    let mut sa = 0.0;
    for i in 0..n {
        sx += y[i] / range;
        sa += weight(i);
    }
    sa /= n as f64;
    sx /= n as f64;

    let mut ssa = 0.0;
    let mut ssx = 0.0;
    let mut sax = 0.0;
    for i in 0..n {
        let asa = weight(i) - sa;
        let xsx = y[i] / range - sx;
        ssa += asa * asa;
        ssx += xsx * xsx;
        sax += asa * xsx;
    }
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    1.0 - w1
}

fn p_value(w: f64, n: usize) -> f64 {
    let an = n as f64;
    if n == 3 {
        // exact distribution
        let w = w.max(0.75);
        let p = 1.0 - (6.0 / std::f64::consts::PI) * (w.sqrt().acos());
        return p.clamp(0.0, 1.0);
    }

    let w1 = 1.0 - w;
    let y = w1.ln();
    if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return SMALL;
        }
        let y = -(gamma - y).ln();
        let mu = poly(&C3, an);
        let sigma = poly(&C4, an).exp();
        normal_sf((y - mu) / sigma)
    } else {
        let xx = an.ln();
        let mu = poly(&C5, xx);
        let sigma = poly(&C6, xx).exp();
        normal_sf((y - mu) / sigma)
    }
}

/// Upper tail of the standard normal distribution (AS 66).
fn normal_sf(x: f64) -> f64 {
    let upper = x > 0.0;
    let z = x.abs();

    let ltone = 7.0;
    let utzero = 38.0;
    if z > ltone && (!upper || z > utzero) {
        return if upper { 0.0 } else { 1.0 };
    }

    let y = 0.5 * z * z;
    let temp = if z <= 1.28 {
        0.5 - z * (0.398942280444
            - 0.399903438504 * y
                / (y + 5.75885480458
                    - 29.8213557808 / (y + 2.62433121679 + 48.6959930692 / (y + 5.92885724438))))
    } else {
        0.398942280385 * (-y).exp()
            / (z - 3.8052e-8
                + 1.00000615302
                    / (z + 3.98064794e-4
                        + 1.98615381364
                            / (z - 0.151679116635
                                + 5.29330324926
                                    / (z + 4.8385912808
                                        - 15.1508972451
                                            / (z + 0.742380924027
                                                + 30.789933034 / (z + 3.99019417011))))))
    };

    if upper {
        temp
    } else {
        1.0 - temp
    }
}

/// Standard normal quantile (AS 111, Beasley-Springer).
fn normal_quantile(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.42 {
        let r = q * q;
        return q * (((-25.44106049637 * r + 41.39119773534) * r - 18.61500062529) * r
            + 2.50662823884)
            / ((((3.13082909833 * r - 21.06224101826) * r + 23.08336743743) * r
                - 8.47351093090)
                * r
                + 1.0);
    }
    let mut r = p;
    if q > 0.0 {
        r = 1.0 - p;
    }
    if r <= 0.0 {
        return 0.0;
    }
    r = (-r.ln()).sqrt();
    let value = (((2.32121276858 * r + 4.85014127135) * r - 2.29796479134) * r - 2.78718931138)
        / ((1.63706781897 * r + 3.54388924762) * r + 1.0);
    if q < 0.0 {
        -value
    } else {
        value
    }
}
