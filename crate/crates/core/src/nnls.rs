//! Non-negative least squares with multiple right-hand sides, solved by
//! block principal pivoting on the normal equations.
//!
//! Each column `y` of the right-hand side is treated independently:
//!
//! ```text
//! minimize ½ xᵀ Q x − xᵀ y   subject to x ≥ 0,     Q = GᵀG, y = column of GᵀY
//! ```
//!
//! Variables are split into a passive set `F` (free, solved exactly) and a
//! bound set (held at zero). Infeasible variables (negative `x` in `F`,
//! negative gradient outside `F`) are exchanged between the sets until none
//! remain. A full exchange is used while the infeasible count keeps hitting
//! new minima; otherwise the exchange set is halved down to a single
//! variable (the largest infeasible index), which rules out cycling.

use crate::error::{Error, Result};
use crate::matrix::{cholesky_solve, pseudoinverse, Matrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NnlsOptions {
    /// KKT tolerance, relative to the largest diagonal entry of the Gram matrix.
    pub kkt_tol: f64,
    /// Exchange cap per column is `max_exchange_factor * q`.
    pub max_exchange_factor: usize,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        NnlsOptions {
            kkt_tol: 1e-10,
            max_exchange_factor: 5,
        }
    }
}

/// Normal-equation form of an NNLS problem: `gram` is q×q, `rhs` is q×n.
#[derive(Clone, Debug)]
pub struct NnlsProblem {
    gram: Matrix,
    rhs: Matrix,
}

impl NnlsProblem {
    pub fn new(gram: Matrix, rhs: Matrix) -> Result<Self> {
        let q = gram.rows();
        if gram.cols() != q {
            return Err(Error::arg(format!("gram must be square, got {:?}", gram.shape())));
        }
        if rhs.rows() != q {
            return Err(Error::arg(format!(
                "rhs has {} rows, gram is {q}x{q}",
                rhs.rows()
            )));
        }
        let scale = gram.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if !gram.is_symmetric(1e-10 * scale) {
            return Err(Error::arg("gram matrix is not symmetric"));
        }
        if gram.as_slice().iter().chain(rhs.as_slice()).any(|v| !v.is_finite()) {
            return Err(Error::arg("non-finite entry in NNLS problem"));
        }
        Ok(NnlsProblem { gram, rhs })
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn rhs(&self) -> &Matrix {
        &self.rhs
    }

    pub fn size(&self) -> usize {
        self.gram.rows()
    }

    /// `½ xᵀQx − xᵀy` for column `col` of the right-hand side.
    pub fn objective(&self, x: &[f64], col: usize) -> f64 {
        let q = self.size();
        let mut quad = 0.0;
        let mut lin = 0.0;
        for a in 0..q {
            let qa: f64 = (0..q).map(|b| self.gram[(a, b)] * x[b]).sum();
            quad += x[a] * qa;
            lin += x[a] * self.rhs[(a, col)];
        }
        0.5 * quad - lin
    }

    /// Absolute KKT tolerance: `kkt_tol` times the largest Gram diagonal.
    pub fn absolute_tolerance(&self, kkt_tol: f64) -> f64 {
        let d = (0..self.size()).map(|i| self.gram[(i, i)]).fold(0.0, f64::max);
        kkt_tol * if d > 0.0 { d } else { 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct NnlsSolution {
    /// q×n solution, every entry ≥ 0.
    pub x: Matrix,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
    /// Set when the Gram matrix was singular and a ridge was added.
    pub regularized: bool,
}

impl NnlsSolution {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|c| *c)
    }
}

/// Checks the KKT conditions for column `col` at absolute tolerance `eps`:
/// `x ≥ 0`, `g = Qx − y ≥ −eps` and `xᵀg ≤ eps‖x‖‖g‖ + eps`.
pub fn kkt_satisfied(problem: &NnlsProblem, x: &[f64], col: usize, eps: f64) -> bool {
    let q = problem.size();
    if x.iter().any(|v| *v < 0.0) {
        return false;
    }
    let g: Vec<f64> = (0..q)
        .map(|a| (0..q).map(|b| problem.gram[(a, b)] * x[b]).sum::<f64>() - problem.rhs[(a, col)])
        .collect();
    if g.iter().any(|v| *v < -eps) {
        return false;
    }
    let xg: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
    let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    xg <= eps * xn * gn + eps
}

pub fn solve(problem: &NnlsProblem) -> NnlsSolution {
    solve_with(problem, &NnlsOptions::default())
}

pub fn solve_with(problem: &NnlsProblem, opts: &NnlsOptions) -> NnlsSolution {
    let q = problem.size();
    let n = problem.rhs.cols();
    let trace = problem.gram.trace();

    if q == 0 || trace <= 0.0 {
        // Q = 0: every x ≥ 0 with xᵀy maximal is unbounded unless y ≤ 0; the
        // only meaningful answer is x = 0.
        let converged = (0..n)
            .map(|c| (0..q).all(|a| problem.rhs[(a, c)] <= 0.0))
            .collect();
        return NnlsSolution {
            x: Matrix::zeros(q, n),
            converged,
            iterations: vec![0; n],
            regularized: q > 0,
        };
    }

    let mut gram = problem.gram.clone();
    let regularized = cholesky_solve(gram.as_slice(), q, &vec![0.0; q]).is_none();
    if regularized {
        let ridge = 1e-12 * trace / q as f64;
        for i in 0..q {
            gram[(i, i)] += ridge;
        }
    }

    let eps = problem.absolute_tolerance(opts.kkt_tol);
    let cap = opts.max_exchange_factor.max(1) * q;
    let mut x = Matrix::zeros(q, n);
    let mut converged = vec![false; n];
    let mut iterations = vec![0; n];
    let mut b = vec![0.0; q];
    for col in 0..n {
        for (a, v) in b.iter_mut().enumerate() {
            *v = problem.rhs[(a, col)];
        }
        let res = solve_column(&gram, &b, eps, cap);
        x.set_column(col, &res.x);
        converged[col] = res.converged;
        iterations[col] = res.iterations;
    }
    NnlsSolution {
        x,
        converged,
        iterations,
        regularized,
    }
}

struct ColumnResult {
    x: Vec<f64>,
    converged: bool,
    iterations: usize,
}

fn solve_column(gram: &Matrix, b: &[f64], eps: f64, cap: usize) -> ColumnResult {
    let q = b.len();
    let mut passive = vec![false; q];
    let mut x: Vec<f64> = vec![0.0; q];
    let mut y: Vec<f64> = b.iter().map(|v| -v).collect();

    let mut best = q + 1;
    let mut budget = q;
    let mut iterations = 0;
    let mut infeasible = Vec::with_capacity(q);
    let converged = loop {
        let x_scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let x_tol = 1e-12 * x_scale;
        infeasible.clear();
        infeasible.extend(
            (0..q).filter(|&i| if passive[i] { x[i] < -x_tol } else { y[i] < -eps }),
        );
        if infeasible.is_empty() {
            break true;
        }
        if iterations >= cap {
            break false;
        }
        iterations += 1;

        if infeasible.len() < best {
            best = infeasible.len();
            budget = infeasible.len();
        } else {
            budget = (budget.min(infeasible.len()) / 2).max(1);
        }
        // Exchange the `budget` largest infeasible indices.
        for &i in infeasible.iter().rev().take(budget) {
            passive[i] = !passive[i];
        }

        solve_passive(gram, b, &passive, &mut x);
        for i in 0..q {
            y[i] = if passive[i] {
                0.0
            } else {
                (0..q).filter(|&j| passive[j]).map(|j| gram[(i, j)] * x[j]).sum::<f64>() - b[i]
            };
        }
    };

    for v in &mut x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    ColumnResult {
        x,
        converged,
        iterations,
    }
}

/// Solves `Q_FF x_F = b_F` for the passive set, zeroing the rest of `x`.
fn solve_passive(gram: &Matrix, b: &[f64], passive: &[bool], x: &mut [f64]) {
    let idx: Vec<usize> = (0..b.len()).filter(|&i| passive[i]).collect();
    x.iter_mut().for_each(|v| *v = 0.0);
    if idx.is_empty() {
        return;
    }
    let m = idx.len();
    let mut sub = Vec::with_capacity(m * m);
    for &i in &idx {
        for &j in &idx {
            sub.push(gram[(i, j)]);
        }
    }
    let rhs: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let sol = cholesky_solve(&sub, m, &rhs).unwrap_or_else(|| {
        let (pinv, _) = pseudoinverse(&Matrix::from_vec(m, m, sub).expect("square"), 1e-12);
        (0..m)
            .map(|r| (0..m).map(|c| pinv[(r, c)] * rhs[c]).sum())
            .collect()
    });
    for (&i, v) in idx.iter().zip(sol) {
        x[i] = v;
    }
}
