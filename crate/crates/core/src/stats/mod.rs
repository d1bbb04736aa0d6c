//! Descriptive statistics and the reliability/validity battery: Spearman
//! rank correlation with exact small-sample permutation p-values, the
//! Spearman-Brown split-half correction, Shapiro-Wilk and Mardia normality
//! tests, test-retest reliability rows, and the cross-measure validity
//! matrix.
//!
//! All summations run in a fixed left-to-right order so results are bit
//! reproducible regardless of how callers parallelize across measures.

mod mardia;
mod shapiro;

pub use mardia::{mardia_bivariate, MardiaResult};
pub use shapiro::{shapiro_wilk, ShapiroWilk};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

/// Tolerance used when counting permutations at least as extreme as the
/// observed statistic; absorbs floating-point jitter between algebraically
/// equal correlation values.
pub const PERMUTATION_EPS: f64 = 1e-9;

/// Largest pair count for which the exact permutation p-value is used.
pub const EXACT_P_MAX_N: usize = 9;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired vectors differ in length ({x} vs {y})")]
    MismatchedLengths { x: usize, y: usize },
    #[error("need at least 3 complete pairs, found {n_used}")]
    TooFewPairs { n_used: usize },
    #[error("input has zero variance; rank correlation is undefined")]
    ZeroVariance,
    #[error("sample size {n} outside supported range {min}..={max}")]
    OutOfRangeN { n: usize, min: usize, max: usize },
    #[error("split-half needs at least 2 items per half, found {per_half}")]
    TooFewItems { per_half: usize },
    #[error("split-half needs at least 3 personas with both half-scores, found {n}")]
    TooFewPersonas { n: usize },
    #[error("covariance matrix is singular")]
    SingularCovariance,
    #[error("Spearman-Brown correction is undefined at r_half = {r_half}")]
    UndefinedCorrection { r_half: f64 },
}

// ---------------------------------------------------------------------------
// Descriptive statistics
// ---------------------------------------------------------------------------

/// Summary statistics over the non-missing entries of a vector. Fields that
/// need more data than is present are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptives {
    pub n: usize,
    pub n_missing: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation (n-1 denominator); needs n >= 2.
    pub sd: Option<f64>,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Moment skewness g1 = m3 / m2^(3/2).
    pub skewness: Option<f64>,
    /// Excess kurtosis g2 = m4 / m2^2 - 3.
    pub excess_kurtosis: Option<f64>,
}

/// Compute descriptives over the non-missing entries of `x`.
pub fn descriptives(x: &[Option<f64>]) -> Descriptives {
    let mut values: Vec<f64> = x.iter().filter_map(|v| *v).collect();
    let n_missing = x.len() - values.len();
    values.sort_by(|a, b| a.partial_cmp(b).expect("scores must not be NaN"));
    let n = values.len();

    if n == 0 {
        return Descriptives {
            n,
            n_missing,
            mean: None,
            sd: None,
            median: None,
            q1: None,
            q3: None,
            min: None,
            max: None,
            skewness: None,
            excess_kurtosis: None,
        };
    }

    let mean = values.iter().sum::<f64>() / n as f64;
    let m2 = central_moment(&values, mean, 2);
    let sd = if n >= 2 {
        Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt())
    } else {
        None
    };
    let (skewness, excess_kurtosis) = if n >= 2 && m2 > 0.0 {
        let m3 = central_moment(&values, mean, 3);
        let m4 = central_moment(&values, mean, 4);
        (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2) - 3.0))
    } else {
        (None, None)
    };

    Descriptives {
        n,
        n_missing,
        mean: Some(mean),
        sd,
        median: Some(quantile_sorted(&values, 0.5)),
        q1: Some(quantile_sorted(&values, 0.25)),
        q3: Some(quantile_sorted(&values, 0.75)),
        min: Some(values[0]),
        max: Some(values[n - 1]),
        skewness,
        excess_kurtosis,
    }
}

fn central_moment(values: &[f64], mean: f64, order: i32) -> f64 {
    values.iter().map(|v| (v - mean).powi(order)).sum::<f64>() / values.len() as f64
}

/// Quantile with linear interpolation between order statistics; `values`
/// must be sorted.
fn quantile_sorted(values: &[f64], p: f64) -> f64 {
    let n = values.len();
    if n == 1 {
        return values[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        values[lo] + frac * (values[lo + 1] - values[lo])
    } else {
        values[n - 1]
    }
}

// ---------------------------------------------------------------------------
// Ranking and Spearman correlation
// ---------------------------------------------------------------------------

/// Ranks 1..=n with tied values receiving the mean of their rank positions.
pub fn rank_average_ties(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("ranks need non-NaN input"));

    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the mean of ranks i+1..=j+1
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// How the Spearman p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Exhaustive permutation distribution (n <= 9).
    ExactPermutation,
    /// Two-sided t approximation with n-2 degrees of freedom.
    TApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rho: f64,
    pub p_value: f64,
    pub n_used: usize,
    pub method: PValueMethod,
}

/// Spearman rank correlation over complete paired vectors.
///
/// The coefficient is the Pearson correlation of average-tie ranks. The
/// p-value is two-sided: the exact permutation distribution for n <= 9, the
/// t approximation `t = rho * sqrt((n-2)/(1-rho^2))` otherwise. A perfect
/// |rho| = 1 under the t branch reports the smallest positive double rather
/// than dividing by zero.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::MismatchedLengths { x: x.len(), y: y.len() });
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewPairs { n_used: n });
    }

    let rx = rank_average_ties(x);
    let ry = rank_average_ties(y);

    let mean = (n + 1) as f64 / 2.0;
    let ssx: f64 = rx.iter().map(|r| (r - mean) * (r - mean)).sum();
    let ssy: f64 = ry.iter().map(|r| (r - mean) * (r - mean)).sum();
    if ssx == 0.0 || ssy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }

    let rho = if rx == ry {
        1.0
    } else if rx
        .iter()
        .zip(ry.iter())
        .all(|(a, b)| a + b == (n + 1) as f64)
    {
        // ranks exactly mirrored
        -1.0
    } else {
        let num: f64 = rx
            .iter()
            .zip(ry.iter())
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum();
        (num / (ssx.sqrt() * ssy.sqrt())).clamp(-1.0, 1.0)
    };

    let (p_value, method) = if n <= EXACT_P_MAX_N {
        (permutation_p(&rx, &ry, rho), PValueMethod::ExactPermutation)
    } else if rho.abs() == 1.0 {
        (f64::MIN_POSITIVE, PValueMethod::TApproximation)
    } else {
        let df = (n - 2) as f64;
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        let p = 2.0 * dist.cdf(-t.abs());
        (p.clamp(f64::MIN_POSITIVE, 1.0), PValueMethod::TApproximation)
    };

    Ok(SpearmanResult { rho, p_value, n_used: n, method })
}

/// Spearman with pairwise deletion: positions where either entry is missing
/// are dropped before correlating.
pub fn spearman_pairwise(
    x: &[Option<f64>],
    y: &[Option<f64>],
) -> Result<SpearmanResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::MismatchedLengths { x: x.len(), y: y.len() });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (a, b) in x.iter().zip(y.iter()) {
        if let (Some(a), Some(b)) = (a, b) {
            xs.push(*a);
            ys.push(*b);
        }
    }
    spearman(&xs, &ys)
}

/// Two-sided exact permutation p-value: the fraction of all n! pairings of
/// the rank vectors whose |rho| is at least the observed |rho| (within
/// [`PERMUTATION_EPS`]).
fn permutation_p(rx: &[f64], ry: &[f64], rho_obs: f64) -> f64 {
    let n = rx.len();
    let mean = (n + 1) as f64 / 2.0;
    let xc: Vec<f64> = rx.iter().map(|r| r - mean).collect();
    let mut yc: Vec<f64> = ry.iter().map(|r| r - mean).collect();
    let ssx: f64 = xc.iter().map(|v| v * v).sum();
    let ssy: f64 = yc.iter().map(|v| v * v).sum();
    let den = ssx.sqrt() * ssy.sqrt();
    // |rho_perm| >= |rho_obs| - eps  <=>  |num_perm| >= (|rho_obs| - eps) * den
    let threshold = (rho_obs.abs() - PERMUTATION_EPS) * den;

    let mut extreme: u64 = 0;
    let mut total: u64 = 0;
    let mut count = |yc: &[f64]| {
        let num: f64 = xc.iter().zip(yc.iter()).map(|(a, b)| a * b).sum();
        if num.abs() >= threshold {
            extreme += 1;
        }
        total += 1;
    };

    // Heap's algorithm, iterative form.
    count(&yc);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                yc.swap(0, i);
            } else {
                yc.swap(c[i], i);
            }
            count(&yc);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }

    extreme as f64 / total as f64
}

// ---------------------------------------------------------------------------
// Split-half reliability
// ---------------------------------------------------------------------------

/// Spearman-Brown correction projecting a half-test correlation to the full
/// test length: `2r / (1 + r)`.
pub fn spearman_brown(r_half: f64) -> Result<f64, StatsError> {
    if !(r_half > -1.0 && r_half <= 1.0) {
        return Err(StatsError::UndefinedCorrection { r_half });
    }
    Ok(2.0 * r_half / (1.0 + r_half))
}

/// How items are assigned to halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitScheme {
    /// Items 1,3,5,... vs items 2,4,6,... by instrument position.
    OddEven,
    /// First half of the items vs the second half.
    FirstSecond,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitHalfResult {
    /// Spearman correlation between the per-persona half scores.
    pub r_half: f64,
    /// Spearman-Brown corrected full-length reliability.
    pub corrected: f64,
    pub n_personas: usize,
}

/// Split-half reliability over an item-score matrix (rows: personas, columns:
/// items in instrument order; `None` marks an unscored item).
pub fn split_half(
    item_scores: &[Vec<Option<f64>>],
    scheme: SplitScheme,
) -> Result<SplitHalfResult, StatsError> {
    let n_items = item_scores.first().map(|row| row.len()).unwrap_or(0);
    let (first, second): (Vec<usize>, Vec<usize>) = match scheme {
        SplitScheme::OddEven => (0..n_items).partition(|i| i % 2 == 0),
        SplitScheme::FirstSecond => (0..n_items).partition(|i| *i < n_items.div_ceil(2)),
    };
    let per_half = first.len().min(second.len());
    if per_half < 2 {
        return Err(StatsError::TooFewItems { per_half });
    }

    let half_mean = |row: &[Option<f64>], cols: &[usize]| -> Option<f64> {
        let vals: Vec<f64> = cols.iter().filter_map(|&c| row[c]).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };

    let mut a = Vec::new();
    let mut b = Vec::new();
    for row in item_scores {
        if let (Some(ha), Some(hb)) = (half_mean(row, &first), half_mean(row, &second)) {
            a.push(ha);
            b.push(hb);
        }
    }
    if a.len() < 3 {
        return Err(StatsError::TooFewPersonas { n: a.len() });
    }

    let r = spearman(&a, &b)?;
    let corrected = spearman_brown(r.rho)?;
    Ok(SplitHalfResult { r_half: r.rho, corrected, n_personas: a.len() })
}

// ---------------------------------------------------------------------------
// Reliability rows and validity matrix
// ---------------------------------------------------------------------------

/// Decision thresholds used across the analysis. Defaults are printed in
/// every report so readers can see what the verdicts mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Test-retest rho at or above this is High reliability.
    pub high: f64,
    /// Test-retest rho at or above this (but below `high`) is Moderate.
    pub moderate: f64,
    /// Same-construct pairs with rho at or above this count as convergent.
    pub convergent: f64,
    /// Significance level for the normality tests.
    pub alpha: f64,
    /// A persona's measure score is withheld when the fraction of unscored
    /// items exceeds this.
    pub missing: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { high: 0.8, moderate: 0.6, convergent: 0.5, alpha: 0.05, missing: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReliabilityInterpretation {
    High,
    Moderate,
    Low,
}

impl ReliabilityInterpretation {
    /// Phrasing used in the rendered reliability table.
    pub fn as_table_text(self) -> &'static str {
        match self {
            ReliabilityInterpretation::High => "High test-retest reliability",
            ReliabilityInterpretation::Moderate => "Moderate test-retest reliability",
            ReliabilityInterpretation::Low => "Low test-retest reliability",
        }
    }
}

/// Interpretation is a pure threshold function of rho.
pub fn interpret_reliability(rho: f64, thresholds: &Thresholds) -> ReliabilityInterpretation {
    if rho >= thresholds.high {
        ReliabilityInterpretation::High
    } else if rho >= thresholds.moderate {
        ReliabilityInterpretation::Moderate
    } else {
        ReliabilityInterpretation::Low
    }
}

/// One measure's row of the reliability summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub measure_id: String,
    pub spearman_rho: f64,
    pub p_value: f64,
    pub n_used: usize,
    pub bivariate_normal: bool,
    pub test_normal: bool,
    pub retest_normal: bool,
    pub interpretation: ReliabilityInterpretation,
}

/// Build a reliability row from paired test/retest measure scores.
///
/// Scores are paired by position (one slot per persona) with pairwise
/// deletion of missing entries. Normality tests that cannot run on the data
/// (constant input, singular covariance) count as "not normal".
pub fn test_retest_report(
    measure_id: &str,
    test: &[Option<f64>],
    retest: &[Option<f64>],
    thresholds: &Thresholds,
) -> Result<ReliabilityRow, StatsError> {
    if test.len() != retest.len() {
        return Err(StatsError::MismatchedLengths { x: test.len(), y: retest.len() });
    }
    let mut t = Vec::new();
    let mut r = Vec::new();
    for (a, b) in test.iter().zip(retest.iter()) {
        if let (Some(a), Some(b)) = (a, b) {
            t.push(*a);
            r.push(*b);
        }
    }
    let sp = spearman(&t, &r)?;
    let normal_of = |v: &[f64]| match shapiro_wilk(v) {
        Ok(res) => res.p_value > thresholds.alpha,
        Err(_) => false,
    };
    let bivariate_normal = match mardia_bivariate(&t, &r, thresholds.alpha) {
        Ok(res) => res.normal,
        Err(_) => false,
    };

    Ok(ReliabilityRow {
        measure_id: measure_id.to_string(),
        spearman_rho: sp.rho,
        p_value: sp.p_value,
        n_used: sp.n_used,
        bivariate_normal,
        test_normal: normal_of(&t),
        retest_normal: normal_of(&r),
        interpretation: interpret_reliability(sp.rho, thresholds),
    })
}

/// What a pair of measures is expected to measure relative to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedRelation {
    SameConstruct,
    DifferentConstruct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityVerdict {
    Convergent,
    NotConvergent,
    DiscriminantOk,
    /// A different-construct pair correlates strongly; evidence against
    /// discriminant validity.
    DiscriminantFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityCell {
    pub measure_a: String,
    pub measure_b: String,
    pub rho: f64,
    pub p_value: f64,
    pub n_used: usize,
    pub relation: ExpectedRelation,
    pub verdict: ValidityVerdict,
}

/// Pairwise Spearman correlations between measure scores, with a verdict per
/// pair. Symmetric by construction; the diagonal is rho = 1 by definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityMatrix {
    pub measure_ids: Vec<String>,
    /// Upper-triangle cells in (a, b) order with a before b in `measure_ids`.
    pub cells: Vec<ValidityCell>,
}

impl ValidityMatrix {
    /// Correlation between two measures; 1 on the diagonal, symmetric.
    pub fn rho(&self, a: &str, b: &str) -> Option<f64> {
        if a == b {
            return self.measure_ids.iter().any(|m| m == a).then_some(1.0);
        }
        self.cells
            .iter()
            .find(|c| (c.measure_a == a && c.measure_b == b) || (c.measure_a == b && c.measure_b == a))
            .map(|c| c.rho)
    }
}

/// Compute the validity matrix over aligned per-persona measure scores.
///
/// `scores` holds, per measure, one slot per persona (same persona order in
/// every vector). `relation_of` declares what each pair is expected to
/// measure.
pub fn validity_matrix(
    measure_ids: &[String],
    scores: &[Vec<Option<f64>>],
    relation_of: impl Fn(&str, &str) -> ExpectedRelation,
    thresholds: &Thresholds,
) -> Result<ValidityMatrix, StatsError> {
    assert_eq!(measure_ids.len(), scores.len(), "one score vector per measure");
    let mut cells = Vec::new();
    for i in 0..measure_ids.len() {
        for j in (i + 1)..measure_ids.len() {
            let sp = spearman_pairwise(&scores[i], &scores[j])?;
            let relation = relation_of(&measure_ids[i], &measure_ids[j]);
            let verdict = match relation {
                ExpectedRelation::SameConstruct => {
                    if sp.rho >= thresholds.convergent {
                        ValidityVerdict::Convergent
                    } else {
                        ValidityVerdict::NotConvergent
                    }
                }
                ExpectedRelation::DifferentConstruct => {
                    if sp.rho.abs() >= thresholds.convergent {
                        ValidityVerdict::DiscriminantFailure
                    } else {
                        ValidityVerdict::DiscriminantOk
                    }
                }
            };
            cells.push(ValidityCell {
                measure_a: measure_ids[i].clone(),
                measure_b: measure_ids[j].clone(),
                rho: sp.rho,
                p_value: sp.p_value,
                n_used: sp.n_used,
                relation,
                verdict,
            });
        }
    }
    Ok(ValidityMatrix { measure_ids: measure_ids.to_vec(), cells })
}
