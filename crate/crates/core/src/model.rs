use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Kruskal-form model: `A` (I×R) user memberships, `B` (J×R) day-of-week
/// profiles, `C` (K×R) weekly profiles, plus optional per-component weights.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub weights: Option<Vec<f64>>,
}

impl FactorModel {
    /// Validates equal column counts and non-negativity.
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let m = FactorModel {
            a,
            b,
            c,
            weights: None,
        };
        m.check_ranks()?;
        for (name, f) in [("A", &m.a), ("B", &m.b), ("C", &m.c)] {
            if let Some(v) = f.as_slice().iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(Error::arg(format!(
                    "factor {name} must be finite and non-negative, found {v}"
                )));
            }
        }
        Ok(m)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.rank() {
            return Err(Error::arg(format!(
                "{} weights for a rank-{} model",
                weights.len(),
                self.rank()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::arg("weights must be finite and non-negative"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn zeros(shape: (usize, usize, usize), rank: usize) -> Self {
        FactorModel {
            a: Matrix::zeros(shape.0, rank),
            b: Matrix::zeros(shape.1, rank),
            c: Matrix::zeros(shape.2, rank),
            weights: None,
        }
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.a.rows(), self.b.rows(), self.c.rows())
    }

    pub(crate) fn check_ranks(&self) -> Result<()> {
        let r = self.a.cols();
        if self.b.cols() != r || self.c.cols() != r {
            return Err(Error::arg(format!(
                "factor column counts differ: A has {}, B has {}, C has {}",
                r,
                self.b.cols(),
                self.c.cols()
            )));
        }
        if let Some(w) = &self.weights {
            if w.len() != r {
                return Err(Error::arg(format!("{} weights for rank {r}", w.len())));
            }
        }
        Ok(())
    }

    /// Weights, or all ones when the model carries none.
    pub fn effective_weights(&self) -> Vec<f64> {
        self.weights.clone().unwrap_or_else(|| vec![1.0; self.rank()])
    }

    /// Folds the weights into `A`, returning an unweighted model with the
    /// same reconstruction.
    pub fn absorb_weights(&self) -> FactorModel {
        let mut out = self.clone();
        if let Some(w) = out.weights.take() {
            for (r, wr) in w.into_iter().enumerate() {
                out.a.scale_column(r, wr);
            }
        }
        out
    }

    /// Reorders components: column `r` of the result is column `perm[r]` of
    /// `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<FactorModel> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::arg(format!("{perm:?} is not a permutation of 0..{r}")));
        }
        let pick = |m: &Matrix| Matrix::from_fn(m.rows(), r, |i, c| m[(i, perm[c])]);
        Ok(FactorModel {
            a: pick(&self.a),
            b: pick(&self.b),
            c: pick(&self.c),
            weights: self
                .weights
                .as_ref()
                .map(|w| perm.iter().map(|&p| w[p]).collect()),
        })
    }

    /// True when some component has an all-zero column in any mode.
    pub fn has_zero_component(&self) -> bool {
        (0..self.rank()).any(|r| self.component_is_zero(r))
    }

    pub(crate) fn component_is_zero(&self, r: usize) -> bool {
        [&self.a, &self.b, &self.c]
            .iter()
            .any(|m| (0..m.rows()).all(|i| m[(i, r)] == 0.0))
    }
}

/// Serializable snapshot of a model, used for persistence and bindings.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FactorModelData {
    pub shape: (usize, usize, usize),
    pub rank: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

impl From<&FactorModel> for FactorModelData {
    fn from(m: &FactorModel) -> Self {
        FactorModelData {
            shape: m.shape(),
            rank: m.rank(),
            a: m.a.as_slice().to_vec(),
            b: m.b.as_slice().to_vec(),
            c: m.c.as_slice().to_vec(),
            weights: m.weights.clone(),
        }
    }
}

impl TryFrom<FactorModelData> for FactorModel {
    type Error = Error;

    fn try_from(d: FactorModelData) -> Result<Self> {
        let m = FactorModel::new(
            Matrix::from_vec(d.shape.0, d.rank, d.a)?,
            Matrix::from_vec(d.shape.1, d.rank, d.b)?,
            Matrix::from_vec(d.shape.2, d.rank, d.c)?,
        )?;
        match d.weights {
            Some(w) => m.with_weights(w),
            None => Ok(m),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_factor() {
        let a = Matrix::from_rows(&[[1.0, -1.0]]).unwrap();
        let b = Matrix::zeros(1, 2);
        let c = Matrix::zeros(1, 2);
        assert!(FactorModel::new(a, b, c).is_err());
    }

    #[test]
    fn permuted_rejects_non_permutation() {
        let m = FactorModel::zeros((2, 2, 2), 3);
        assert!(m.permuted(&[0, 0, 1]).is_err());
        assert!(m.permuted(&[0, 1]).is_err());
        assert!(m.permuted(&[2, 0, 1]).is_ok());
    }

    #[test]
    fn absorb_weights_scales_a() {
        let m = FactorModel::new(
            Matrix::from_rows(&[[1.0, 2.0]]).unwrap(),
            Matrix::from_rows(&[[1.0, 1.0]]).unwrap(),
            Matrix::from_rows(&[[1.0, 1.0]]).unwrap(),
        )
        .unwrap()
        .with_weights(vec![3.0, 0.5])
        .unwrap();
        let u = m.absorb_weights();
        assert_eq!(u.a.row(0), &[3.0, 1.0]);
        assert!(u.weights.is_none());
    }
}
