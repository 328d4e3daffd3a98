mod common;

use common::*;
use msntf::{khatri_rao, reconstruct, relative_error, unfold, DenseTensor3, FactorModel, Matrix};
use proptest::prelude::*;

#[test]
fn fold_inverts_unfold_on_3x7x5() {
    let mut r = rng(11);
    let t = random_tensor(&mut r, (3, 7, 5));
    for mode in 1..=3 {
        let m = unfold(&t, mode).unwrap();
        let back = DenseTensor3::fold(&m, mode, t.shape()).unwrap();
        assert_eq!(back, t, "mode {mode}");
    }
}

#[test]
fn khatri_rao_columns_are_flattened_outer_products() {
    let mut r = rng(5);
    let p = random_matrix(&mut r, 3, 2);
    let q = random_matrix(&mut r, 4, 2);
    let kr = khatri_rao(&p, &q).unwrap();
    assert_eq!(kr.shape(), (12, 2));
    for c in 0..2 {
        for a in 0..3 {
            for b in 0..4 {
                assert_eq!(kr[(a * 4 + b, c)], p[(a, c)] * q[(b, c)]);
            }
        }
    }
}

#[test]
fn reconstruct_matches_triple_loop() {
    let mut r = rng(7);
    let m = random_model(&mut r, (4, 7, 6), 3);
    let t = reconstruct(&m).unwrap();
    let naive = naive_reconstruct(&m);
    for i in 0..4 {
        for j in 0..7 {
            for k in 0..6 {
                assert!((t.get(i, j, k) - naive[i][j][k]).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn zero_component_contributes_nothing() {
    let mut r = rng(8);
    let m = random_model(&mut r, (3, 7, 4), 2);
    let widen = |f: &Matrix| Matrix::from_fn(f.rows(), 3, |i, c| if c < 2 { f[(i, c)] } else { 0.0 });
    let mut b3 = widen(&m.b);
    for j in 0..7 {
        b3[(j, 2)] = 1.0;
    }
    let wide = FactorModel::new(widen(&m.a), b3, widen(&m.c)).unwrap();
    assert_eq!(reconstruct(&wide).unwrap(), reconstruct(&m).unwrap());
}

#[test]
fn frobenius_norm_matches_direct_sum() {
    let mut r = rng(9);
    let t = random_tensor(&mut r, (5, 7, 3));
    let direct: f64 = t.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((t.frobenius_norm() - direct).abs() < 1e-14);
}

#[test]
fn relative_error_of_random_perturbation() {
    let mut r = rng(10);
    let m = random_model(&mut r, (2, 2, 1), 1);
    let base = reconstruct(&m).unwrap();
    let noise = random_tensor(&mut r, (2, 2, 1));
    let t = DenseTensor3::from_fn((2, 2, 1), |i, j, k| base.get(i, j, k) + noise.get(i, j, k)).unwrap();
    let e: f64 = noise.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    let n: f64 = t.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((relative_error(&t, &m).unwrap() - e / n).abs() < 1e-14);
}

proptest! {
    #[test]
    fn fold_unfold_identity(ni in 1usize..5, nj in 1usize..8, nk in 1usize..5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = random_tensor(&mut r, (ni, nj, nk));
        for mode in 1..=3 {
            let m = unfold(&t, mode).unwrap();
            prop_assert_eq!(&DenseTensor3::fold(&m, mode, t.shape()).unwrap(), &t);
            // Frobenius norm is preserved by unfolding.
            prop_assert!((m.frobenius_norm() - t.frobenius_norm()).abs() <= 1e-12 * (1.0 + t.frobenius_norm()));
        }
    }

    #[test]
    fn khatri_rao_hadamard_identity(pr in 1usize..6, qr in 1usize..6, cols in 1usize..5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_signed_matrix(&mut r, pr, cols);
        let q = random_signed_matrix(&mut r, qr, cols);
        let kr = khatri_rao(&p, &q).unwrap();
        let lhs = kr.gram();
        let rhs = p.gram().hadamard(&q.gram()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
    }

    #[test]
    fn reconstruct_is_multilinear(seed in any::<u64>(), alpha in 0.01f64..100.0, comp in 0usize..3) {
        let mut r = rng(seed);
        let m = random_model(&mut r, (4, 7, 3), 3);
        let mut scaled = m.clone();
        scaled.a.scale_column(comp, alpha);
        scaled.c.scale_column(comp, 1.0 / alpha);
        let (t1, t2) = (reconstruct(&m).unwrap(), reconstruct(&scaled).unwrap());
        for (x, y) in t1.as_slice().iter().zip(t2.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }
}
