mod common;

use common::*;
use msntf::nnls::{kkt_satisfied, solve, NnlsProblem};
use msntf::Matrix;
use proptest::prelude::*;

/// Random q×q Gram `GᵀG + δI` from a tall Gaussian-ish G, and q×n rhs `GᵀY`.
fn random_problem(seed: u64, q: usize, n: usize) -> NnlsProblem {
    let mut r = rng(seed);
    let g = random_signed_matrix(&mut r, q + 4, q);
    let y = random_signed_matrix(&mut r, q + 4, n);
    let gram = g.gram();
    let rhs = g.transpose().matmul(&y).unwrap();
    NnlsProblem::new(gram, rhs).unwrap()
}

#[test]
fn matches_exhaustive_enumeration_4x4_three_rhs() {
    let p = random_problem(2024, 4, 3);
    let s = solve(&p);
    assert!(s.all_converged());
    for col in 0..3 {
        let y = p.rhs().column(col);
        let (xb, _) = brute_force_nnls(p.gram(), &y);
        for a in 0..4 {
            assert!((s.x[(a, col)] - xb[a]).abs() < 1e-8, "col {col}: {:?} vs {xb:?}", s.x.column(col));
        }
    }
}

#[test]
fn deterministic_bitwise() {
    let p = random_problem(77, 6, 20);
    let a = solve(&p);
    let b = solve(&p);
    assert_eq!(a.x.as_slice(), b.x.as_slice());
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn exchange_cap_is_rarely_hit() {
    let mut hits = 0;
    let mut total = 0;
    for seed in 0..300 {
        let q = 1 + (seed as usize % 6);
        let p = random_problem(seed, q, 8);
        let s = solve(&p);
        hits += s.converged.iter().filter(|c| !**c).count();
        total += s.converged.len();
    }
    assert_eq!(hits, 0, "{hits} of {total} columns hit the exchange cap");
}

#[test]
fn non_converged_columns_are_still_non_negative() {
    // A cap of one exchange cannot finish this problem.
    let p = random_problem(3, 6, 4);
    let s = msntf::nnls::solve_with(
        &p,
        &msntf::nnls::NnlsOptions {
            kkt_tol: 1e-10,
            max_exchange_factor: 0,
        },
    );
    assert!(s.x.as_slice().iter().all(|v| *v >= 0.0));
    let wide = Matrix::zeros(6, 4);
    assert_eq!(s.x.shape(), wide.shape());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn solution_is_kkt_and_optimal(seed in any::<u64>(), q in 1usize..=6, n in 1usize..4) {
        let p = random_problem(seed, q, n);
        let s = solve(&p);
        let eps = p.absolute_tolerance(1e-10);
        for col in 0..n {
            let x = s.x.column(col);
            prop_assert!(x.iter().all(|v| *v >= 0.0));
            if s.converged[col] {
                prop_assert!(kkt_satisfied(&p, &x, col, eps * 100.0));
            }
            let (_, best) = brute_force_nnls(p.gram(), &p.rhs().column(col));
            prop_assert!(p.objective(&x, col) <= best + 1e-8);
        }
    }
}
