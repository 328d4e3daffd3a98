//! Chi-squared characterization of clusters against demographic attributes.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::demographics::{Attribute, DemographicTable};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Significance levels for one to four stars, applied to corrected p-values.
pub const STAR_LEVELS: [f64; 4] = [0.1, 0.05, 0.01, 0.001];

pub const SMALL_EXPECTED_COUNT: f64 = 5.0;

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_TERMS: usize = 10_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_TERMS {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_q domain: a > 0, x >= 0");
    if x == 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

/// Upper tail `P(X ≥ x)` of a chi-squared variable with `dof` degrees of freedom.
pub fn chi2_sf(x: f64, dof: usize) -> f64 {
    assert!(dof > 0, "dof must be positive");
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(dof as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Number of stars for a corrected p-value.
pub fn stars(p_corrected: f64, levels: &[f64]) -> usize {
    levels.iter().filter(|&&l| p_corrected < l).count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    /// Each cluster against fixed population shares.
    VsNull,
    /// Two or more clusters against each other (row × column / total).
    Pairwise,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContingencyTable {
    pub kind: TestKind,
    pub categories: Vec<String>,
    pub clusters: Vec<usize>,
    /// categories × clusters.
    pub observed: Matrix,
    pub expected: Matrix,
    /// Labeled users without a demographic record.
    pub excluded_users: usize,
}

impl ContingencyTable {
    /// Expected counts from row and column totals.
    pub fn pairwise_from_counts(observed: Matrix) -> Result<Self> {
        check_counts(&observed)?;
        let (r, c) = observed.shape();
        let total: f64 = observed.as_slice().iter().sum();
        let rows: Vec<f64> = (0..r).map(|i| observed.row(i).iter().sum()).collect();
        let cols: Vec<f64> = (0..c).map(|j| observed.column(j).iter().sum()).collect();
        let expected = Matrix::from_fn(r, c, |i, j| if total > 0.0 { rows[i] * cols[j] / total } else { 0.0 });
        Ok(Self::bare(TestKind::Pairwise, observed, expected))
    }

    /// Expected counts `n_m · share_ℓ` for fixed category shares.
    pub fn vs_null_from_counts(observed: Matrix, shares: &[f64]) -> Result<Self> {
        check_counts(&observed)?;
        let (r, c) = observed.shape();
        if shares.len() != r {
            return Err(Error::arg(format!("{} shares for {r} categories", shares.len())));
        }
        if shares.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::arg("shares must be finite and non-negative"));
        }
        let cols: Vec<f64> = (0..c).map(|j| observed.column(j).iter().sum()).collect();
        let expected = Matrix::from_fn(r, c, |i, j| cols[j] * shares[i]);
        Ok(Self::bare(TestKind::VsNull, observed, expected))
    }

    fn bare(kind: TestKind, observed: Matrix, expected: Matrix) -> Self {
        let (r, c) = observed.shape();
        ContingencyTable {
            kind,
            categories: (0..r).map(|i| i.to_string()).collect(),
            clusters: (0..c).collect(),
            observed,
            expected,
            excluded_users: 0,
        }
    }

    /// Observed counts divided by cluster size; columns of empty clusters are 0.
    pub fn column_shares(&self) -> Matrix {
        let (r, c) = self.observed.shape();
        let cols: Vec<f64> = (0..c).map(|j| self.observed.column(j).iter().sum()).collect();
        Matrix::from_fn(r, c, |i, j| if cols[j] > 0.0 { self.observed[(i, j)] / cols[j] } else { 0.0 })
    }
}

fn check_counts(m: &Matrix) -> Result<()> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::arg("empty contingency table"));
    }
    if m.as_slice().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::arg("counts must be finite and non-negative"));
    }
    Ok(())
}

/// Counts per (category, cluster) for the users in `clusters`.
fn count_table(
    user_ids: &[impl AsRef<str>],
    labels: &[usize],
    demo: &DemographicTable,
    attr: Attribute,
    clusters: &[usize],
) -> Result<(Matrix, usize)> {
    if user_ids.len() != labels.len() {
        return Err(Error::arg(format!("{} user ids for {} labels", user_ids.len(), labels.len())));
    }
    let r = attr.categories().len();
    let mut counts = Matrix::zeros(r, clusters.len());
    let mut excluded = 0;
    for (u, &l) in user_ids.iter().zip(labels) {
        let Some(col) = clusters.iter().position(|&c| c == l) else { continue };
        match demo.get(u.as_ref()) {
            Some(d) => counts.row_mut(attr.category_of(d))[col] += 1.0,
            None => excluded += 1,
        }
    }
    Ok((counts, excluded))
}

fn label_table(mut t: ContingencyTable, attr: Attribute, clusters: Vec<usize>, excluded: usize) -> ContingencyTable {
    t.categories = attr.categories().iter().map(|s| s.to_string()).collect();
    t.clusters = clusters;
    t.excluded_users = excluded;
    if excluded > 0 {
        warn!("{excluded} labeled users have no demographic record and were excluded");
    }
    t
}

/// Every cluster against the category shares of all labeled users with
/// demographics.
pub fn contingency(
    user_ids: &[impl AsRef<str>],
    labels: &[usize],
    demo: &DemographicTable,
    attr: Attribute,
) -> Result<ContingencyTable> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let clusters: Vec<usize> = (0..k).collect();
    let (counts, excluded) = count_table(user_ids, labels, demo, attr, &clusters)?;
    let total: f64 = counts.as_slice().iter().sum();
    if total == 0.0 {
        return Err(Error::UndefinedTest("no labeled user has demographics".into()));
    }
    let shares: Vec<f64> = (0..counts.rows()).map(|i| counts.row(i).iter().sum::<f64>() / total).collect();
    let t = ContingencyTable::vs_null_from_counts(counts, &shares)?;
    Ok(label_table(t, attr, clusters, excluded))
}

/// Two-cluster table for clusters `x` and `y`.
pub fn pairwise_table(
    user_ids: &[impl AsRef<str>],
    labels: &[usize],
    demo: &DemographicTable,
    attr: Attribute,
    x: usize,
    y: usize,
) -> Result<ContingencyTable> {
    let clusters = vec![x, y];
    let (counts, excluded) = count_table(user_ids, labels, demo, attr, &clusters)?;
    let t = ContingencyTable::pairwise_from_counts(counts)?;
    Ok(label_table(t, attr, clusters, excluded))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquaredResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// `min(1, p · factor)`; equals `p_value` for a single test.
    pub p_corrected: f64,
    pub stars: usize,
    /// Cells with zero expected count, left out of the sum.
    pub dropped_cells: Vec<(usize, usize)>,
    /// Cells with expected count below 5.
    pub small_expected_cells: Vec<(usize, usize)>,
}

impl ChiSquaredResult {
    pub fn star_string(&self) -> String {
        "*".repeat(self.stars)
    }

    pub fn with_correction(mut self, factor: usize, levels: &[f64]) -> Self {
        self.p_corrected = (self.p_value * factor.max(1) as f64).min(1.0);
        self.stars = stars(self.p_corrected, levels);
        self
    }
}

/// `Σ (D − E)² / E` over cells with `E > 0`.
pub fn chi_squared(table: &ContingencyTable) -> Result<ChiSquaredResult> {
    let (r, c) = table.observed.shape();
    let mut statistic = 0.0;
    let mut dropped = Vec::new();
    let mut small = Vec::new();
    for i in 0..r {
        for j in 0..c {
            let (d, e) = (table.observed[(i, j)], table.expected[(i, j)]);
            if e <= 0.0 {
                dropped.push((i, j));
                continue;
            }
            if e < SMALL_EXPECTED_COUNT {
                small.push((i, j));
            }
            statistic += (d - e) * (d - e) / e;
        }
    }
    if dropped.len() == r * c {
        return Err(Error::UndefinedTest("every expected count is zero".into()));
    }
    if !small.is_empty() {
        warn!("{} cells have expected count below {SMALL_EXPECTED_COUNT}", small.len());
    }
    let live_rows = (0..r).filter(|&i| (0..c).any(|j| table.expected[(i, j)] > 0.0)).count();
    let live_cols = (0..c).filter(|&j| (0..r).any(|i| table.expected[(i, j)] > 0.0)).count();
    let dof = match table.kind {
        TestKind::Pairwise => (live_rows - 1) * (live_cols - 1),
        TestKind::VsNull => (live_rows - 1) * live_cols,
    };
    let p_value = if dof == 0 { 1.0 } else { chi2_sf(statistic, dof) };
    Ok(ChiSquaredResult {
        statistic,
        dof,
        p_value,
        p_corrected: p_value,
        stars: stars(p_value, &STAR_LEVELS),
        dropped_cells: dropped,
        small_expected_cells: small,
    })
}

/// Multiplier applied to pairwise p-values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Bonferroni {
    /// Number of cluster pairs tested for the attribute.
    #[default]
    Pairs,
    /// Number of clusters.
    Clusters,
    None,
}

impl Bonferroni {
    pub fn factor(self, k: usize) -> usize {
        match self {
            Bonferroni::Pairs => k * k.saturating_sub(1) / 2,
            Bonferroni::Clusters => k,
            Bonferroni::None => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub attribute: Attribute,
    pub x: usize,
    pub y: usize,
    pub result: ChiSquaredResult,
}

/// One two-cluster test per unordered pair `x < y`, corrected by `correction`.
pub fn pairwise_tests(
    user_ids: &[impl AsRef<str>],
    labels: &[usize],
    demo: &DemographicTable,
    attr: Attribute,
    levels: &[f64],
    correction: Bonferroni,
) -> Result<Vec<PairwiseTest>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::arg("pairwise tests need at least two clusters"));
    }
    let factor = correction.factor(k);
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for x in 0..k {
        for y in x + 1..k {
            let t = pairwise_table(user_ids, labels, demo, attr, x, y)?;
            let result = chi_squared(&t)?.with_correction(factor, levels);
            out.push(PairwiseTest { attribute: attr, x, y, result });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_two_by_two() {
        let t = ContingencyTable::pairwise_from_counts(Matrix::from_rows(&[[10.0, 20.0], [30.0, 40.0]]).unwrap()).unwrap();
        assert_eq!(t.expected, Matrix::from_rows(&[[12.0, 18.0], [28.0, 42.0]]).unwrap());
        let r = chi_squared(&t).unwrap();
        let want = 4.0 / 12.0 + 4.0 / 18.0 + 4.0 / 28.0 + 4.0 / 42.0;
        assert!((r.statistic - want).abs() < 1e-12);
        assert_eq!(r.dof, 1);
        assert!((r.p_value - 0.373).abs() < 1e-3);
    }

    #[test]
    fn equal_tables_give_zero() {
        let t = ContingencyTable::pairwise_from_counts(Matrix::from_rows(&[[5.0, 10.0], [15.0, 30.0]]).unwrap()).unwrap();
        let r = chi_squared(&t).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert_eq!(r.stars, 0);
    }

    #[test]
    fn single_category_vs_null() {
        let t = ContingencyTable::vs_null_from_counts(Matrix::from_rows(&[[3.0, 4.0], [0.0, 0.0]]).unwrap(), &[1.0, 0.0]).unwrap();
        let r = chi_squared(&t).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dropped_cells.len(), 2);
        assert_eq!(r.dof, 0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn all_cells_dropped_is_undefined() {
        let t = ContingencyTable::pairwise_from_counts(Matrix::zeros(2, 2)).unwrap();
        assert!(matches!(chi_squared(&t), Err(Error::UndefinedTest(_))));
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn star_scheme() {
        assert_eq!(stars(0.2, &STAR_LEVELS), 0);
        assert_eq!(stars(0.1, &STAR_LEVELS), 0);
        assert_eq!(stars(0.07, &STAR_LEVELS), 1);
        assert_eq!(stars(0.02, &STAR_LEVELS), 2);
        assert_eq!(stars(0.005, &STAR_LEVELS), 3);
        assert_eq!(stars(0.0001, &STAR_LEVELS), 4);
        assert_eq!(Bonferroni::Pairs.factor(5), 10);
        assert_eq!(Bonferroni::Clusters.factor(5), 5);
    }
}
