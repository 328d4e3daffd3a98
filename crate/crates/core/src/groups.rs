//! Representative users per component and the overlap between groups.

use serde::{Deserialize, Serialize};

use crate::clustering::PointSet;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_FRACTION: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeGroups {
    pub fraction: f64,
    /// Share threshold `h_r` per component.
    pub thresholds: Vec<f64>,
    /// Row indices of the users in each group, ascending.
    pub members: Vec<Vec<usize>>,
    /// Rows whose memberships summed to zero (given uniform shares).
    pub zero_rows: Vec<usize>,
}

impl RepresentativeGroups {
    pub fn rank(&self) -> usize {
        self.members.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

/// `⌈fraction · n⌉`, ignoring floating-point noise just above an integer.
pub fn top_count(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    ((x - 1e-9 * x.max(1.0)).ceil() as usize).clamp(1, n)
}

/// Users whose share `a_ir / Σ_r a_ir` reaches the `(1 − fraction)` lower
/// empirical quantile of component `r`. Ties at the threshold are kept.
pub fn representative_groups(a: &Matrix, fraction: f64) -> Result<RepresentativeGroups> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::arg(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    if a.as_slice().iter().any(|v| *v < 0.0) {
        return Err(Error::arg("membership matrix must be non-negative"));
    }
    let shares = PointSet::from_membership(a)?;
    let n = shares.len();
    let m = top_count(fraction, n);
    let mut thresholds = Vec::with_capacity(a.cols());
    let mut members = Vec::with_capacity(a.cols());
    for r in 0..a.cols() {
        let col = shares.points().column(r);
        let mut sorted = col.clone();
        sorted.sort_by(|x, y| y.total_cmp(x));
        let h = sorted[m - 1];
        thresholds.push(h);
        members.push((0..n).filter(|&i| col[i] >= h).collect());
    }
    Ok(RepresentativeGroups {
        fraction,
        thresholds,
        members,
        zero_rows: shares.zero_rows().to_vec(),
    })
}

/// `|G_r ∩ G_s| / |G_r ∪ G_s|`; zero when both groups are empty.
pub fn jaccard(x: &[usize], y: &[usize]) -> f64 {
    let xs: std::collections::BTreeSet<_> = x.iter().collect();
    let ys: std::collections::BTreeSet<_> = y.iter().collect();
    let union = xs.union(&ys).count();
    if union == 0 {
        0.0
    } else {
        xs.intersection(&ys).count() as f64 / union as f64
    }
}

pub fn jaccard_overlap(groups: &RepresentativeGroups) -> Matrix {
    let r = groups.rank();
    Matrix::from_fn(r, r, |i, j| jaccard(&groups.members[i], &groups.members[j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_column(shares: &[f64]) -> Matrix {
        // second column makes each row sum to 1
        Matrix::from_fn(shares.len(), 2, |i, j| if j == 0 { shares[i] } else { 1.0 - shares[i] })
    }

    #[test]
    fn top_decile_of_ten() {
        let s = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95];
        let g = representative_groups(&one_column(&s), 0.1).unwrap();
        assert_eq!(g.members[0], vec![9]);
        assert_eq!(g.thresholds[0], 0.95);
    }

    #[test]
    fn ties_are_kept() {
        let g = representative_groups(&one_column(&[0.3; 8]), 0.1).unwrap();
        assert_eq!(g.members[0].len(), 8);
    }

    #[test]
    fn half_of_four() {
        let g = representative_groups(&one_column(&[0.1, 0.7, 0.4, 0.9]), 0.5).unwrap();
        assert_eq!(g.members[0], vec![1, 3]);
    }

    #[test]
    fn fraction_bounds() {
        let a = one_column(&[0.1, 0.2]);
        assert!(representative_groups(&a, 1.0).is_err());
        assert!(representative_groups(&a, 0.0).is_err());
        assert_eq!(top_count(0.7, 10), 7);
        assert_eq!(top_count(0.1, 25), 3);
    }

    #[test]
    fn jaccard_fixtures() {
        assert_eq!(jaccard(&[1, 2, 3], &[3, 4]), 0.25);
        assert_eq!(jaccard(&[1, 2], &[1, 2]), 1.0);
        assert_eq!(jaccard(&[1], &[2]), 0.0);
        assert_eq!(jaccard(&[], &[]), 0.0);
    }
}
