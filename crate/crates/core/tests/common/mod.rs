//! Test-only oracles, independent of the library's solver paths.
#![allow(dead_code)]

use msntf::{DenseTensor3, FactorModel, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
}

pub fn random_signed_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: (usize, usize, usize)) -> DenseTensor3 {
    DenseTensor3::from_fn(shape, |_, _, _| rng.random::<f64>()).unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng, shape: (usize, usize, usize), rank: usize) -> FactorModel {
    FactorModel::new(
        random_matrix(rng, shape.0, rank),
        random_matrix(rng, shape.1, rank),
        random_matrix(rng, shape.2, rank),
    )
    .unwrap()
}

/// Dense Gaussian elimination with partial pivoting; `None` if singular.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())?;
        if m[piv][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}

/// Exhaustive active-set enumeration for `min ½xᵀQx − xᵀy, x ≥ 0`:
/// solve every passive subset, keep the feasible one with least objective.
pub fn brute_force_nnls(q: &Matrix, y: &[f64]) -> (Vec<f64>, f64) {
    let n = y.len();
    let obj = |x: &[f64]| {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += 0.5 * x[a] * q[(a, b)] * x[b];
            }
            s -= x[a] * y[a];
        }
        s
    };
    let mut best = (vec![0.0; n], 0.0);
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let sub: Vec<Vec<f64>> = idx.iter().map(|&i| idx.iter().map(|&j| q[(i, j)]).collect()).collect();
        let rhs: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        if let Some(xs) = gauss_solve(&sub, &rhs) {
            if xs.iter().all(|v| *v >= 0.0) {
                let mut x = vec![0.0; n];
                for (&i, v) in idx.iter().zip(xs) {
                    x[i] = v;
                }
                let o = obj(&x);
                if o < best.1 {
                    best = (x, o);
                }
            }
        }
    }
    best
}

/// Triple-loop evaluation of the Kruskal sum.
pub fn naive_reconstruct(m: &FactorModel) -> Vec<Vec<Vec<f64>>> {
    let (ni, nj, nk) = m.shape();
    let w = m.effective_weights();
    let mut out = vec![vec![vec![0.0; nk]; nj]; ni];
    for i in 0..ni {
        for j in 0..nj {
            for k in 0..nk {
                for r in 0..m.rank() {
                    out[i][j][k] += w[r] * m.a[(i, r)] * m.b[(j, r)] * m.c[(k, r)];
                }
            }
        }
    }
    out
}

/// All permutations of 0..n in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..n {
        for rest in permutations(n - 1) {
            let mut p = vec![first];
            p.extend(rest.into_iter().map(|v| if v >= first { v + 1 } else { v }));
            out.push(p);
        }
    }
    out
}
