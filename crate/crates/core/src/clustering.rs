//! Clustering of user membership rows: k-medoids (PAM), k-means (Lloyd),
//! silhouette coefficients and the elbow curve.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAX_KMEANS_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    points: Matrix,
    /// Rows that summed to zero and were replaced by the uniform share vector.
    zero_rows: Vec<usize>,
}

impl PointSet {
    pub fn new(points: Matrix) -> Result<Self> {
        if points.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("point coordinates must be finite"));
        }
        if points.rows() == 0 || points.cols() == 0 {
            return Err(Error::arg("point set is empty"));
        }
        Ok(PointSet {
            points,
            zero_rows: Vec::new(),
        })
    }

    /// Rows of a non-negative membership matrix scaled to unit sum.
    pub fn from_membership(a: &Matrix) -> Result<Self> {
        let d = a.cols();
        let mut zero_rows = Vec::new();
        let data = Matrix::from_fn(a.rows(), d, |i, r| {
            let s: f64 = a.row(i).iter().sum();
            if s > 0.0 {
                a[(i, r)] / s
            } else {
                if r == 0 {
                    zero_rows.push(i);
                }
                1.0 / d as f64
            }
        });
        let mut ps = PointSet::new(data)?;
        ps.zero_rows = zero_rows;
        Ok(ps)
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn zero_rows(&self) -> &[usize] {
        &self.zero_rows
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(self.point(i), self.point(j))
    }
}

pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    KMedoids,
    KMeans,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::KMedoids => "k-medoids",
            Method::KMeans => "k-means",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Centers {
    /// Point indices, one per cluster.
    Medoids(Vec<usize>),
    /// k×d centroid coordinates.
    Centroids(Matrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    pub centers: Centers,
    /// k-medoids: Σ distance to medoid. k-means: Σ squared distance to centroid.
    pub total_cost: f64,
    pub method: Method,
    pub seed: u64,
    pub iterations: usize,
}

impl ClusteringResult {
    pub fn k(&self) -> usize {
        match &self.centers {
            Centers::Medoids(m) => m.len(),
            Centers::Centroids(c) => c.rows(),
        }
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k()];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    pub fn center(&self, cluster: usize, points: &PointSet) -> Vec<f64> {
        match &self.centers {
            Centers::Medoids(m) => points.point(m[cluster]).to_vec(),
            Centers::Centroids(c) => c.row(cluster).to_vec(),
        }
    }

    /// Cost recomputed from labels and centers.
    pub fn recompute_cost(&self, points: &PointSet) -> f64 {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let d = euclidean(points.point(i), &self.center(l, points));
                match self.method {
                    Method::KMedoids => d,
                    Method::KMeans => d * d,
                }
            })
            .sum()
    }
}

fn check_k(points: &PointSet, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::arg("k must be >= 1"));
    }
    if k > points.len() {
        return Err(Error::arg(format!("k = {k} exceeds the number of points {}", points.len())));
    }
    Ok(())
}

/// `k` distinct point indices drawn uniformly without replacement.
pub fn initial_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, n, k).into_vec()
}

fn nearest(dists: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, d) in dists.enumerate() {
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

struct MedoidState {
    nearest: Vec<(usize, f64)>,
    second: Vec<f64>,
    cost: f64,
}

fn medoid_state(points: &PointSet, medoids: &[usize]) -> MedoidState {
    let n = points.len();
    let mut nearest_v = Vec::with_capacity(n);
    let mut second = Vec::with_capacity(n);
    for p in 0..n {
        let (mut b1, mut d1, mut d2) = (0, f64::INFINITY, f64::INFINITY);
        for (c, &m) in medoids.iter().enumerate() {
            let d = points.distance(p, m);
            if d < d1 {
                d2 = d1;
                b1 = c;
                d1 = d;
            } else if d < d2 {
                d2 = d;
            }
        }
        nearest_v.push((b1, d1));
        second.push(d2);
    }
    let cost = nearest_v.iter().map(|x| x.1).sum();
    MedoidState {
        nearest: nearest_v,
        second,
        cost,
    }
}

/// PAM k-medoids with best-improvement swaps and Euclidean distance.
pub fn kmedoids(points: &PointSet, k: usize, seed: u64) -> Result<ClusteringResult> {
    check_k(points, k)?;
    let n = points.len();
    let mut medoids = initial_indices(n, k, seed);
    let mut state = medoid_state(points, &medoids);
    let mut iterations = 0;
    loop {
        let is_medoid = {
            let mut v = vec![false; n];
            for &m in &medoids {
                v[m] = true;
            }
            v
        };
        // Cost of every (slot, candidate) swap; minimum picked in index order.
        let best = (0..n)
            .into_par_iter()
            .filter(|&o| !is_medoid[o])
            .map(|o| {
                let mut per_slot = vec![0.0; k];
                for p in 0..n {
                    let dpo = points.distance(p, o);
                    let (c1, d1) = state.nearest[p];
                    for (slot, acc) in per_slot.iter_mut().enumerate() {
                        *acc += if slot == c1 {
                            dpo.min(state.second[p])
                        } else {
                            dpo.min(d1)
                        };
                    }
                }
                let (slot, cost) = nearest(per_slot.into_iter());
                (cost, o, slot)
            })
            .reduce_with(|a, b| {
                if b.0 < a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
                    b
                } else {
                    a
                }
            });
        match best {
            Some((cost, o, slot)) if cost < state.cost - 1e-12 * state.cost.max(1.0) => {
                medoids[slot] = o;
                state = medoid_state(points, &medoids);
                iterations += 1;
            }
            _ => break,
        }
    }
    let mut labels: Vec<usize> = state.nearest.iter().map(|x| x.0).collect();
    // Coincident medoids would otherwise leave a cluster empty.
    for (c, &m) in medoids.iter().enumerate() {
        labels[m] = c;
    }
    let mut res = ClusteringResult {
        labels,
        centers: Centers::Medoids(medoids),
        total_cost: 0.0,
        method: Method::KMedoids,
        seed,
        iterations,
    };
    res.total_cost = res.recompute_cost(points);
    Ok(res)
}

fn assign(points: &PointSet, centroids: &Matrix) -> Vec<(usize, f64)> {
    (0..points.len())
        .map(|p| {
            let (c, d) = nearest((0..centroids.rows()).map(|c| euclidean(points.point(p), centroids.row(c))));
            (c, d * d)
        })
        .collect()
}

/// Lloyd k-means seeded with the same sampled points as [`kmedoids`].
pub fn kmeans(points: &PointSet, k: usize, seed: u64) -> Result<ClusteringResult> {
    check_k(points, k)?;
    let (n, d) = (points.len(), points.dim());
    let init = initial_indices(n, k, seed);
    let mut centroids = Matrix::from_fn(k, d, |c, j| points.point(init[c])[j]);
    let mut labels: Vec<usize> = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_KMEANS_ITERATIONS {
        let assigned = assign(points, &centroids);
        let mut new_labels: Vec<usize> = assigned.iter().map(|x| x.0).collect();
        repair_empty(points, &mut new_labels, &assigned, &mut centroids);
        if new_labels == labels {
            break;
        }
        labels = new_labels;
        centroids = means(points, &labels, k);
        iterations += 1;
    }
    let mut res = ClusteringResult {
        labels,
        centers: Centers::Centroids(centroids),
        total_cost: 0.0,
        method: Method::KMeans,
        seed,
        iterations,
    };
    res.total_cost = res.recompute_cost(points);
    Ok(res)
}

/// Moves the point farthest from its centroid (among clusters of size ≥ 2)
/// into each empty cluster.
fn repair_empty(points: &PointSet, labels: &mut [usize], assigned: &[(usize, f64)], centroids: &mut Matrix) {
    let k = centroids.rows();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    let mut taken = vec![false; labels.len()];
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let far = (0..labels.len())
            .filter(|&p| !taken[p] && sizes[labels[p]] >= 2)
            .fold(None::<usize>, |best, p| match best {
                Some(b) if assigned[b].1 >= assigned[p].1 => Some(b),
                _ => Some(p),
            })
            .expect("n >= k leaves a cluster with two or more points");
        sizes[labels[far]] -= 1;
        labels[far] = c;
        sizes[c] = 1;
        taken[far] = true;
        for (j, v) in points.point(far).iter().enumerate() {
            centroids.as_mut_slice()[c * points.dim() + j] = *v;
        }
    }
}

fn means(points: &PointSet, labels: &[usize], k: usize) -> Matrix {
    let d = points.dim();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (p, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(points.point(p)) {
            *s += v;
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        for s in sums.row_mut(c) {
            *s /= n as f64;
        }
    }
    sums
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Silhouette {
    pub coefficients: Vec<f64>,
    pub mean: f64,
}

/// Silhouette coefficients; singleton clusters get 0.
pub fn silhouette(points: &PointSet, labels: &[usize]) -> Result<Silhouette> {
    let n = points.len();
    if labels.len() != n {
        return Err(Error::arg(format!("{} labels for {n} points", labels.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if k < 2 {
        return Err(Error::arg("silhouette needs at least two clusters"));
    }
    if sizes.contains(&0) {
        return Err(Error::arg("cluster ids must be contiguous with no empty cluster"));
    }
    let coefficients: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|p| {
            let own = labels[p];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for q in 0..n {
                if q != p {
                    sums[labels[q]] += points.distance(p, q);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect();
    let mean = coefficients.iter().sum::<f64>() / n as f64;
    Ok(Silhouette { coefficients, mean })
}

/// k-medoids cost for each k.
pub fn elbow_curve(points: &PointSet, ks: &[usize], seed: u64) -> Result<Vec<(usize, f64)>> {
    ks.par_iter()
        .map(|&k| kmedoids(points, k, seed).map(|r| (k, r.total_cost)))
        .collect()
}

/// The k after which the cost decrease slows the most: the argmax over
/// interior points of `drop(k−1→k) / drop(k→k+1)`. Requires consecutive ks.
pub fn elbow_point(curve: &[(usize, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for w in curve.windows(3) {
        let (before, after) = (w[0].1 - w[1].1, w[1].1 - w[2].1);
        let ratio = if after > 0.0 { before / after } else if before > 0.0 { f64::INFINITY } else { continue };
        if best.is_none_or(|b| ratio > b.1) {
            best = Some((w[1].0, ratio));
        }
    }
    best.map(|b| b.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> PointSet {
        PointSet::new(Matrix::from_vec(xs.len(), 1, xs.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn kmedoids_pairs() {
        let p = line(&[0.0, 1.0, 10.0, 11.0]);
        for seed in 0..10 {
            let r = kmedoids(&p, 2, seed).unwrap();
            assert_eq!(r.total_cost, 2.0);
            assert_eq!(r.labels[0], r.labels[1]);
            assert_eq!(r.labels[2], r.labels[3]);
            assert_ne!(r.labels[0], r.labels[2]);
        }
    }

    #[test]
    fn k_equals_n_costs_zero() {
        let p = line(&[0.0, 1.0, 10.0, 11.0]);
        assert_eq!(kmedoids(&p, 4, 3).unwrap().total_cost, 0.0);
        assert_eq!(kmeans(&p, 4, 3).unwrap().total_cost, 0.0);
        assert!(kmedoids(&p, 5, 0).is_err());
        assert!(kmeans(&p, 5, 0).is_err());
    }

    #[test]
    fn kmeans_pairs_and_k1() {
        let p = line(&[0.0, 1.0, 10.0, 11.0]);
        let r = kmeans(&p, 2, 1).unwrap();
        let Centers::Centroids(c) = &r.centers else { panic!() };
        let mut cs = vec![c[(0, 0)], c[(1, 0)]];
        cs.sort_by(f64::total_cmp);
        assert_eq!(cs, vec![0.5, 10.5]);
        let r = kmeans(&p, 1, 1).unwrap();
        let Centers::Centroids(c) = &r.centers else { panic!() };
        assert_eq!(c[(0, 0)], 5.5);
    }

    #[test]
    fn identical_points() {
        let p = line(&[2.0; 6]);
        for k in 1..=6 {
            let r = kmeans(&p, k, 0).unwrap();
            assert_eq!(r.total_cost, 0.0);
            assert!(r.cluster_sizes().iter().all(|&s| s > 0));
            let r = kmedoids(&p, k, 0).unwrap();
            assert_eq!(r.total_cost, 0.0);
            assert!(r.cluster_sizes().iter().all(|&s| s > 0));
        }
    }

    #[test]
    fn silhouette_hand_values() {
        let p = line(&[0.0, 1.0, 10.0, 11.0]);
        let s = silhouette(&p, &[0, 0, 1, 1]).unwrap();
        assert!((s.coefficients[0] - 9.5 / 10.5).abs() < 1e-12);
        let q = line(&[0.0, 0.0, 1.0, 1.0]);
        assert!(silhouette(&q, &[0, 0, 1, 1]).unwrap().coefficients.iter().all(|&c| c == 1.0));
        assert!(silhouette(&p, &[0, 1, 0, 1]).unwrap().mean < 0.0);
        assert!(silhouette(&p, &[0, 0, 0, 0]).is_err());
        assert_eq!(silhouette(&p, &[0, 0, 0, 1]).unwrap().coefficients[3], 0.0);
    }

    #[test]
    fn elbow_on_pairs() {
        let p = line(&[0.0, 1.0, 10.0, 11.0]);
        let c = elbow_curve(&p, &[1, 2, 3, 4], 0).unwrap();
        // best single medoid is 1 or 10: 1 + 0 + 9 + 10
        assert_eq!(c[0], (1, 20.0));
        assert_eq!(c[1], (2, 2.0));
        assert_eq!(c[3], (4, 0.0));
        assert_eq!(elbow_point(&c), Some(2));
    }

    #[test]
    fn membership_rows_normalized() {
        let a = Matrix::from_rows(&[[1.0, 3.0], [0.0, 0.0]]).unwrap();
        let p = PointSet::from_membership(&a).unwrap();
        assert_eq!(p.point(0), &[0.25, 0.75]);
        assert_eq!(p.point(1), &[0.5, 0.5]);
        assert_eq!(p.zero_rows(), &[1]);
    }
}
