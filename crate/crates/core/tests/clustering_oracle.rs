mod common;

use common::{random_signed_matrix, rng};
use msntf::clustering::{elbow_curve, elbow_point, kmeans, kmedoids, silhouette, Centers, PointSet};
use msntf::synth::{generate_synthetic, SyntheticSpec};
use msntf::Matrix;
use proptest::prelude::*;

/// Minimum k-medoids cost over every medoid subset.
fn brute_force_medoids(p: &PointSet, k: usize) -> f64 {
    fn rec(p: &PointSet, k: usize, start: usize, chosen: &mut Vec<usize>, best: &mut f64) {
        if chosen.len() == k {
            let cost: f64 = (0..p.len())
                .map(|i| chosen.iter().map(|&m| p.distance(i, m)).fold(f64::INFINITY, f64::min))
                .sum();
            *best = best.min(cost);
            return;
        }
        for m in start..p.len() {
            chosen.push(m);
            rec(p, k, m + 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(p, k, 0, &mut Vec::new(), &mut best);
    best
}

fn nearest_center_labels(p: &PointSet, centers: &[Vec<f64>]) -> Vec<usize> {
    (0..p.len())
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for (c, x) in centers.iter().enumerate() {
                let d: f64 = p.point(i).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if d < best.1 {
                    best = (c, d);
                }
            }
            best.0
        })
        .collect()
}

#[test]
fn kmedoids_matches_exhaustive_search_on_most_seeds() {
    let (mut hits, mut trials) = (0, 0);
    for seed in 0..200u64 {
        let n = 6 + (seed as usize % 7);
        let d = 1 + (seed as usize / 7) % 2;
        let k = 2 + (seed as usize / 14) % 3;
        let p = PointSet::new(random_signed_matrix(&mut rng(seed), n, d)).unwrap();
        let best = brute_force_medoids(&p, k);
        let r = kmedoids(&p, k, seed).unwrap();
        assert!(r.total_cost >= best - 1e-9);
        trials += 1;
        if r.total_cost <= best + 1e-9 {
            hits += 1;
        }
    }
    eprintln!("{hits}/{trials}");
    assert!(hits * 10 >= trials * 9, "{hits}/{trials}");
}

#[test]
fn kmedoids_result_invariants() {
    let p = PointSet::new(random_signed_matrix(&mut rng(5), 50, 3)).unwrap();
    let r = kmedoids(&p, 3, 9).unwrap();
    assert!((r.total_cost - r.recompute_cost(&p)).abs() < 1e-9);
    let Centers::Medoids(m) = &r.centers else { panic!() };
    for (c, &idx) in m.iter().enumerate() {
        assert_eq!(r.labels[idx], c);
    }
    assert!(r.cluster_sizes().iter().all(|&s| s > 0));
    let centers: Vec<Vec<f64>> = m.iter().map(|&i| p.point(i).to_vec()).collect();
    assert_eq!(r.labels, nearest_center_labels(&p, &centers));
}

#[test]
fn kmeans_result_invariants() {
    let p = PointSet::new(random_signed_matrix(&mut rng(6), 80, 3)).unwrap();
    let r = kmeans(&p, 4, 2).unwrap();
    assert!((r.total_cost - r.recompute_cost(&p)).abs() < 1e-9);
    assert!(r.cluster_sizes().iter().all(|&s| s > 0));
    let centers: Vec<Vec<f64>> = (0..4).map(|c| r.center(c, &p)).collect();
    assert_eq!(r.labels, nearest_center_labels(&p, &centers));
    for c in 0..4 {
        let members: Vec<usize> = (0..80).filter(|&i| r.labels[i] == c).collect();
        for j in 0..3 {
            let mean = members.iter().map(|&i| p.point(i)[j]).sum::<f64>() / members.len() as f64;
            assert!((mean - centers[c][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn clustering_is_deterministic() {
    let p = PointSet::new(random_signed_matrix(&mut rng(7), 60, 3)).unwrap();
    assert_eq!(kmedoids(&p, 5, 3).unwrap(), kmedoids(&p, 5, 3).unwrap());
    assert_eq!(kmeans(&p, 5, 3).unwrap(), kmeans(&p, 5, 3).unwrap());
}

#[test]
fn planted_five_groups_give_elbow_at_five() {
    let data = generate_synthetic(&SyntheticSpec::three_patterns(200, 12, 4)).unwrap();
    let p = PointSet::from_membership(&data.truth.a).unwrap();
    let ks: Vec<usize> = (1..=9).collect();
    let curve = elbow_curve(&p, &ks, 0).unwrap();
    assert_eq!(elbow_point(&curve), Some(5), "{curve:?}");
    let r = kmedoids(&p, 5, 0).unwrap();
    // clusters recover the planted groups
    for g in 0..5 {
        let ls: std::collections::BTreeSet<usize> =
            (0..200).filter(|&i| data.labels[i] == g).map(|i| r.labels[i]).collect();
        assert_eq!(ls.len(), 1);
    }
}

fn rotate(m: &Matrix, theta: f64, shift: [f64; 3]) -> Matrix {
    let (s, c) = theta.sin_cos();
    Matrix::from_fn(m.rows(), 3, |i, j| {
        let (x, y, z) = (m[(i, 0)], m[(i, 1)], m[(i, 2)]);
        [c * x - s * y, s * x + c * y, z][j] + shift[j]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn silhouette_bounded_and_isometry_invariant(
        seed in 0u64..10_000,
        k in 2usize..5,
        theta in 0.0f64..6.28,
        shift in proptest::array::uniform3(-5.0f64..5.0),
    ) {
        let m = random_signed_matrix(&mut rng(seed), 20, 3);
        let p = PointSet::new(m.clone()).unwrap();
        let r = kmedoids(&p, k, seed).unwrap();
        let s = silhouette(&p, &r.labels).unwrap();
        prop_assert!(s.coefficients.iter().all(|c| (-1.0..=1.0).contains(c)));
        let q = PointSet::new(rotate(&m, theta, shift)).unwrap();
        let t = silhouette(&q, &r.labels).unwrap();
        for (a, b) in s.coefficients.iter().zip(&t.coefficients) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn kmedoids_never_worse_than_initial_medoids(seed in 0u64..10_000, k in 1usize..6) {
        let p = PointSet::new(random_signed_matrix(&mut rng(seed), 25, 2)).unwrap();
        let init = msntf::clustering::initial_indices(25, k, seed);
        let init_cost: f64 = (0..25)
            .map(|i| init.iter().map(|&m| p.distance(i, m)).fold(f64::INFINITY, f64::min))
            .sum();
        prop_assert!(kmedoids(&p, k, seed).unwrap().total_cost <= init_cost + 1e-12);
    }

    #[test]
    fn kmeans_never_worse_than_initial_centroids(seed in 0u64..10_000, k in 1usize..6) {
        let p = PointSet::new(random_signed_matrix(&mut rng(seed), 25, 2)).unwrap();
        let init = msntf::clustering::initial_indices(25, k, seed);
        let init_cost: f64 = (0..25)
            .map(|i| init.iter().map(|&m| p.distance(i, m).powi(2)).fold(f64::INFINITY, f64::min))
            .sum();
        prop_assert!(kmeans(&p, k, seed).unwrap().total_cost <= init_cost + 1e-12);
    }
}
