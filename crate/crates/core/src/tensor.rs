//! Dense 3-way tensors and the multilinear kernels built on them.
//!
//! Storage is a flat vector with the first index varying fastest:
//! element `(i, j, k)` lives at `i + I * (j + J * k)`. Unfoldings follow the
//! same convention: the lower-numbered remaining mode varies fastest along
//! the columns, so the mode-1 column of `(j, k)` is `j + J * k`.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::FactorModel;

/// Real-valued 3-way array, signed entries allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct Array3 {
    shape: (usize, usize, usize),
    data: Vec<f64>,
}

impl Array3 {
    pub fn zeros(shape: (usize, usize, usize)) -> Self {
        Array3 {
            shape,
            data: vec![0.0; shape.0 * shape.1 * shape.2],
        }
    }

    pub fn from_vec(shape: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.0 * shape.1 * shape.2 {
            return Err(Error::arg(format!(
                "array of shape {shape:?} needs {} values, got {}",
                shape.0 * shape.1 * shape.2,
                data.len()
            )));
        }
        Ok(Array3 { shape, data })
    }

    pub fn from_fn(
        shape: (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(shape.0 * shape.1 * shape.2);
        for k in 0..shape.2 {
            for j in 0..shape.1 {
                for i in 0..shape.0 {
                    data.push(f(i, j, k));
                }
            }
        }
        Array3 { shape, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.shape.0 && j < self.shape.1 && k < self.shape.2);
        i + self.shape.0 * (j + self.shape.1 * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        unfold_raw(self.shape, &self.data, mode)
    }

    /// Mode-n product `self ×ₙ m`: the mode-n fibres are multiplied by `m`,
    /// so the mode's extent changes from `m.cols()` to `m.rows()`.
    pub fn mode_product(&self, m: &Matrix, mode: usize) -> Result<Array3> {
        let (ni, nj, nk) = self.shape;
        let extent = match mode {
            1 => ni,
            2 => nj,
            3 => nk,
            _ => return Err(invalid_mode(mode)),
        };
        if m.cols() != extent {
            return Err(Error::arg(format!(
                "mode-{mode} product: matrix has {} columns, mode extent is {extent}",
                m.cols()
            )));
        }
        let new_shape = match mode {
            1 => (m.rows(), nj, nk),
            2 => (ni, m.rows(), nk),
            _ => (ni, nj, m.rows()),
        };
        let mut out = Array3::zeros(new_shape);
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    let v = self.get(i, j, k);
                    if v == 0.0 {
                        continue;
                    }
                    let src = match mode {
                        1 => i,
                        2 => j,
                        _ => k,
                    };
                    for r in 0..m.rows() {
                        let w = m[(r, src)];
                        let o = match mode {
                            1 => out.offset(r, j, k),
                            2 => out.offset(i, r, k),
                            _ => out.offset(i, j, r),
                        };
                        out.data[o] += w * v;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Non-negative dense 3-way tensor of shape `(I, J, K)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor3 {
    inner: Array3,
}

impl DenseTensor3 {
    pub fn zeros(shape: (usize, usize, usize)) -> Result<Self> {
        check_shape(shape)?;
        Ok(DenseTensor3 {
            inner: Array3::zeros(shape),
        })
    }

    /// Wraps flat storage (first index fastest). Rejects negative or
    /// non-finite values.
    pub fn from_vec(shape: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        check_shape(shape)?;
        check_values(&data)?;
        Ok(DenseTensor3 {
            inner: Array3::from_vec(shape, data)?,
        })
    }

    pub fn from_fn(
        shape: (usize, usize, usize),
        f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_shape(shape)?;
        let inner = Array3::from_fn(shape, f);
        check_values(&inner.data)?;
        Ok(DenseTensor3 { inner })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.inner.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.inner.data
    }

    pub fn as_array(&self) -> &Array3 {
        &self.inner
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.inner.get(i, j, k)
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) -> Result<()> {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::arg(format!("tensor entries must be finite and >= 0, got {v}")));
        }
        let (ni, nj, nk) = self.shape();
        if i >= ni || j >= nj || k >= nk {
            return Err(Error::arg(format!(
                "index ({i}, {j}, {k}) out of range for shape {:?}",
                self.shape()
            )));
        }
        self.inner.set(i, j, k, v);
        Ok(())
    }

    pub(crate) fn add_at(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.inner.offset(i, j, k);
        self.inner.data[o] += v;
    }

    pub fn sum(&self) -> f64 {
        self.inner.data.iter().sum()
    }

    pub fn count_nonzero(&self) -> usize {
        self.inner.data.iter().filter(|v| **v != 0.0).count()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        self.inner.unfold(mode)
    }

    /// Inverse of [`DenseTensor3::unfold`].
    pub fn fold(m: &Matrix, mode: usize, shape: (usize, usize, usize)) -> Result<Self> {
        check_shape(shape)?;
        let (ni, nj, nk) = shape;
        let expected = match mode {
            1 => (ni, nj * nk),
            2 => (nj, ni * nk),
            3 => (nk, ni * nj),
            _ => return Err(invalid_mode(mode)),
        };
        if m.shape() != expected {
            return Err(Error::arg(format!(
                "mode-{mode} fold of {:?} into {shape:?} needs a {expected:?} matrix",
                m.shape()
            )));
        }
        DenseTensor3::from_fn(shape, |i, j, k| {
            let (r, c) = unfold_index(shape, mode, i, j, k);
            m[(r, c)]
        })
    }
}

fn check_shape(shape: (usize, usize, usize)) -> Result<()> {
    if shape.0 == 0 || shape.1 == 0 || shape.2 == 0 {
        return Err(Error::arg(format!("tensor shape components must be >= 1, got {shape:?}")));
    }
    Ok(())
}

fn check_values(data: &[f64]) -> Result<()> {
    if let Some(v) = data.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::arg(format!("tensor entries must be finite and >= 0, got {v}")));
    }
    Ok(())
}

fn invalid_mode(mode: usize) -> Error {
    Error::arg(format!("mode must be 1, 2 or 3, got {mode}"))
}

#[inline]
fn unfold_index(shape: (usize, usize, usize), mode: usize, i: usize, j: usize, k: usize) -> (usize, usize) {
    let (ni, nj, _) = shape;
    match mode {
        1 => (i, j + nj * k),
        2 => (j, i + ni * k),
        _ => (k, i + ni * j),
    }
}

fn unfold_raw(shape: (usize, usize, usize), data: &[f64], mode: usize) -> Result<Matrix> {
    let (ni, nj, nk) = shape;
    let (rows, cols) = match mode {
        1 => (ni, nj * nk),
        2 => (nj, ni * nk),
        3 => (nk, ni * nj),
        _ => return Err(invalid_mode(mode)),
    };
    let mut m = Matrix::zeros(rows, cols);
    let mut idx = 0;
    for k in 0..nk {
        for j in 0..nj {
            for i in 0..ni {
                let (r, c) = unfold_index(shape, mode, i, j, k);
                m[(r, c)] = data[idx];
                idx += 1;
            }
        }
    }
    Ok(m)
}

/// Unfolds `t` along `mode` (1, 2 or 3).
pub fn unfold(t: &DenseTensor3, mode: usize) -> Result<Matrix> {
    t.unfold(mode)
}

pub fn frobenius_norm(t: &DenseTensor3) -> f64 {
    t.frobenius_norm()
}

/// Evaluates the Kruskal form `x̂(i,j,k) = Σ_r w_r a(i,r) b(j,r) c(k,r)`.
pub fn reconstruct(m: &FactorModel) -> Result<DenseTensor3> {
    m.check_ranks()?;
    let shape = (m.a.rows(), m.b.rows(), m.c.rows());
    check_shape(shape)?;
    let r = m.rank();
    let weights = m.effective_weights();
    let mut data = vec![0.0; shape.0 * shape.1 * shape.2];
    let mut bc = vec![0.0; r];
    let mut idx = 0;
    for k in 0..shape.2 {
        let crow = m.c.row(k);
        for j in 0..shape.1 {
            let brow = m.b.row(j);
            for c in 0..r {
                bc[c] = weights[c] * brow[c] * crow[c];
            }
            for i in 0..shape.0 {
                let arow = m.a.row(i);
                data[idx] = arow.iter().zip(&bc).map(|(a, w)| a * w).sum::<f64>().max(0.0);
                idx += 1;
            }
        }
    }
    Ok(DenseTensor3 {
        inner: Array3 { shape, data },
    })
}

/// Squared Frobenius residual `‖t − reconstruct(m)‖²`, computed without
/// materializing the reconstruction.
pub fn squared_residual(t: &DenseTensor3, m: &FactorModel) -> Result<f64> {
    m.check_ranks()?;
    let shape = (m.a.rows(), m.b.rows(), m.c.rows());
    if shape != t.shape() {
        return Err(Error::arg(format!(
            "model shape {shape:?} does not match tensor shape {:?}",
            t.shape()
        )));
    }
    let r = m.rank();
    let weights = m.effective_weights();
    let data = t.as_slice();
    let mut bc = vec![0.0; r];
    let mut total = 0.0;
    let mut idx = 0;
    for k in 0..shape.2 {
        let crow = m.c.row(k);
        for j in 0..shape.1 {
            let brow = m.b.row(j);
            for c in 0..r {
                bc[c] = weights[c] * brow[c] * crow[c];
            }
            for i in 0..shape.0 {
                let xhat: f64 = m.a.row(i).iter().zip(&bc).map(|(a, w)| a * w).sum();
                let e = data[idx] - xhat;
                total += e * e;
                idx += 1;
            }
        }
    }
    Ok(total)
}

/// `‖t − reconstruct(m)‖_F / ‖t‖_F`, with 0/0 defined as 0.
pub fn relative_error(t: &DenseTensor3, m: &FactorModel) -> Result<f64> {
    let resid = squared_residual(t, m)?.sqrt();
    let norm = t.frobenius_norm();
    if norm == 0.0 {
        // A zero tensor is matched exactly only by a zero reconstruction;
        // report the absolute residual in that case.
        return Ok(resid);
    }
    Ok(resid / norm)
}
