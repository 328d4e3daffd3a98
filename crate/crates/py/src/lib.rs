//! Python bindings for the `msntf` core: tensors, non-negative PARAFAC fits,
//! core consistency, clustering and the chi-squared helpers.
//!
//! Matrices cross the boundary as lists of rows and tensors as nested
//! `[i][j][k]` lists, so NumPy arrays work after `.tolist()` or directly.

use chrono::NaiveDate;
use msntf::clustering::{self, Centers, PointSet};
use msntf::nnls::NnlsProblem;
use msntf::parafac::{self, FitConfig};
use msntf::stats::{self, ContingencyTable};
use msntf::synth::{self, NoiseModel, SyntheticSpec};
use msntf::{corcondia, groups, ingest};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: msntf::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<msntf::Matrix> {
    msntf::Matrix::from_rows(&rows).map_err(err)
}

fn from_matrix(m: &msntf::Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Dense non-negative I×J×K tensor.
#[pyclass(frozen)]
struct Tensor {
    inner: msntf::DenseTensor3,
}

#[pymethods]
impl Tensor {
    #[new]
    fn new(data: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        let i = data.len();
        let j = data.first().map_or(0, Vec::len);
        let k = data.first().and_then(|d| d.first()).map_or(0, Vec::len);
        if data.iter().any(|s| s.len() != j || s.iter().any(|f| f.len() != k)) {
            return Err(PyValueError::new_err("ragged nested list"));
        }
        let inner = msntf::DenseTensor3::from_fn((i, j, k), |a, b, c| data[a][b][c]).map_err(err)?;
        Ok(Tensor { inner })
    }

    #[staticmethod]
    fn zeros(shape: (usize, usize, usize)) -> PyResult<Self> {
        Ok(Tensor { inner: msntf::DenseTensor3::zeros(shape).map_err(err)? })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.shape()
    }

    fn get(&self, i: usize, j: usize, k: usize) -> PyResult<f64> {
        let (a, b, c) = self.inner.shape();
        if i >= a || j >= b || k >= c {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.get(i, j, k))
    }

    fn sum(&self) -> f64 {
        self.inner.sum()
    }

    fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    fn tolist(&self) -> Vec<Vec<Vec<f64>>> {
        let (a, b, c) = self.inner.shape();
        (0..a).map(|i| (0..b).map(|j| (0..c).map(|k| self.inner.get(i, j, k)).collect()).collect()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }
}

/// Rank-R factor model with factors A (I×R), B (J×R), C (K×R).
#[pyclass(frozen)]
struct Model {
    inner: msntf::FactorModel,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (a, b, c, weights=None))]
    fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, c: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> PyResult<Self> {
        let mut m = msntf::FactorModel::new(to_matrix(a)?, to_matrix(b)?, to_matrix(c)?).map_err(err)?;
        if let Some(w) = weights {
            m = m.with_weights(w).map_err(err)?;
        }
        Ok(Model { inner: m })
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        from_matrix(&self.inner.a)
    }

    #[getter]
    fn b(&self) -> Vec<Vec<f64>> {
        from_matrix(&self.inner.b)
    }

    #[getter]
    fn c(&self) -> Vec<Vec<f64>> {
        from_matrix(&self.inner.c)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.effective_weights()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.shape()
    }

    /// Unit-norm B and C columns with magnitudes moved into the weights.
    fn normalized(&self) -> Model {
        Model { inner: parafac::normalize(&self.inner) }
    }

    fn reconstruct(&self) -> PyResult<Tensor> {
        Ok(Tensor { inner: msntf::reconstruct(&self.inner).map_err(err)? })
    }

    fn relative_error(&self, t: &Tensor) -> PyResult<f64> {
        msntf::relative_error(&t.inner, &self.inner).map_err(err)
    }

    /// Per-component congruence with `other` after the best matching.
    fn congruence(&self, other: &Model) -> PyResult<Vec<f64>> {
        Ok(parafac::align(&self.inner, &other.inner).map_err(err)?.congruence)
    }

    fn __repr__(&self) -> String {
        format!("Model(shape={:?}, rank={})", self.inner.shape(), self.inner.rank())
    }
}

#[pyclass(frozen, get_all)]
struct FitResult {
    model: Py<Model>,
    objective_trace: Vec<f64>,
    relative_error: f64,
    iterations: usize,
    converged: bool,
    seed: u64,
    warnings: Vec<String>,
    /// `(seed, objective)` of every restart.
    runs: Vec<(u64, f64)>,
}

#[pymethods]
impl FitResult {
    fn __repr__(&self) -> String {
        format!(
            "FitResult(seed={}, relative_error={:.6}, iterations={}, converged={})",
            self.seed,
            self.relative_error,
            self.iterations,
            if self.converged { "True" } else { "False" }
        )
    }
}

/// Best of `n_runs` non-negative PARAFAC fits, seeds `seed..seed+n_runs`.
#[pyfunction]
#[pyo3(signature = (tensor, rank, n_runs=1, seed=0, max_iterations=None, tolerance=None))]
fn fit(
    py: Python<'_>,
    tensor: &Tensor,
    rank: usize,
    n_runs: usize,
    seed: u64,
    max_iterations: Option<usize>,
    tolerance: Option<f64>,
) -> PyResult<FitResult> {
    let mut cfg = FitConfig { rank, seed, ..FitConfig::default() };
    if let Some(m) = max_iterations {
        cfg.max_iterations = m;
    }
    if let Some(t) = tolerance {
        cfg.tolerance = t;
    }
    let t = tensor.inner.clone();
    let multi = py.detach(|| parafac::fit_multi(&t, &cfg, n_runs)).map_err(err)?;
    let best = multi.best;
    Ok(FitResult {
        model: Py::new(py, Model { inner: best.model })?,
        objective_trace: best.objective_trace,
        relative_error: best.relative_error,
        iterations: best.iterations,
        converged: best.converged,
        seed: best.seed,
        warnings: best.warnings,
        runs: multi.objectives,
    })
}

#[pyfunction]
fn core_consistency(tensor: &Tensor, model: &Model) -> PyResult<f64> {
    corcondia::core_consistency(&tensor.inner, &model.inner).map_err(err)
}

/// Core-consistency scan. Returns a dict with `selected_rank` and per-rank
/// `values`, `mean` and `ci_half_width`.
#[pyfunction]
#[pyo3(signature = (tensor, ranks, n_runs=20, seed=0, threshold=corcondia::DEFAULT_CC_THRESHOLD))]
fn cc_scan<'py>(
    py: Python<'py>,
    tensor: &Tensor,
    ranks: Vec<usize>,
    n_runs: usize,
    seed: u64,
    threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let t = tensor.inner.clone();
    let cfg = FitConfig { seed, ..FitConfig::default() };
    let rep = py.detach(|| corcondia::cc_scan(&t, &ranks, n_runs, &cfg, threshold)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("selected_rank", rep.selected_rank)?;
    out.set_item("threshold", rep.threshold)?;
    let rows = PyDict::new(py);
    for r in &rep.ranks {
        let d = PyDict::new(py);
        d.set_item("values", r.values.clone())?;
        d.set_item("mean", r.mean)?;
        d.set_item("ci_half_width", r.ci_half_width)?;
        rows.set_item(r.rank, d)?;
    }
    out.set_item("ranks", rows)?;
    out.set_item("warnings", rep.warnings.clone())?;
    Ok(out)
}

#[pyclass(frozen, get_all)]
struct Clustering {
    labels: Vec<usize>,
    total_cost: f64,
    method: String,
    iterations: usize,
    sizes: Vec<usize>,
    /// Medoid row indices (k-medoids only).
    medoids: Option<Vec<usize>>,
    /// Centroid rows (k-means only).
    centroids: Option<Vec<Vec<f64>>>,
}

#[pymethods]
impl Clustering {
    fn __repr__(&self) -> String {
        format!("Clustering(method={}, sizes={:?}, total_cost={:.6})", self.method, self.sizes, self.total_cost)
    }
}

fn point_set(points: Vec<Vec<f64>>, membership: bool) -> PyResult<PointSet> {
    let m = to_matrix(points)?;
    if membership {
        PointSet::from_membership(&m).map_err(err)
    } else {
        PointSet::new(m).map_err(err)
    }
}

fn clustering_result(r: clustering::ClusteringResult) -> Clustering {
    let (medoids, centroids) = match &r.centers {
        Centers::Medoids(m) => (Some(m.clone()), None),
        Centers::Centroids(c) => (None, Some(from_matrix(c))),
    };
    Clustering {
        sizes: r.cluster_sizes(),
        method: r.method.to_string(),
        labels: r.labels,
        total_cost: r.total_cost,
        iterations: r.iterations,
        medoids,
        centroids,
    }
}

/// k-medoids on the rows of `points`; `membership=True` first rescales rows to unit sum.
#[pyfunction]
#[pyo3(signature = (points, k, seed=0, membership=false))]
fn kmedoids(py: Python<'_>, points: Vec<Vec<f64>>, k: usize, seed: u64, membership: bool) -> PyResult<Clustering> {
    let p = point_set(points, membership)?;
    let r = py.detach(|| clustering::kmedoids(&p, k, seed)).map_err(err)?;
    Ok(clustering_result(r))
}

#[pyfunction]
#[pyo3(signature = (points, k, seed=0, membership=false))]
fn kmeans(points: Vec<Vec<f64>>, k: usize, seed: u64, membership: bool) -> PyResult<Clustering> {
    let p = point_set(points, membership)?;
    Ok(clustering_result(clustering::kmeans(&p, k, seed).map_err(err)?))
}

/// `(coefficients, mean)`.
#[pyfunction]
fn silhouette(points: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<(Vec<f64>, f64)> {
    let s = clustering::silhouette(&point_set(points, false)?, &labels).map_err(err)?;
    Ok((s.coefficients, s.mean))
}

/// Minimizes ½xᵀQx − xᵀy subject to x ≥ 0, one column of `rhs` at a time.
/// Returns the solution with one row per unknown.
#[pyfunction]
fn nnls(gram: Vec<Vec<f64>>, rhs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let p = NnlsProblem::new(to_matrix(gram)?, to_matrix(rhs)?).map_err(err)?;
    Ok(from_matrix(&msntf::nnls::solve(&p).x))
}

#[pyfunction]
fn chi2_sf(x: f64, dof: usize) -> f64 {
    stats::chi2_sf(x, dof)
}

/// Pearson chi-squared test of independence on an observed count table.
#[pyfunction]
fn chi_squared<'py>(py: Python<'py>, observed: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let t = ContingencyTable::pairwise_from_counts(to_matrix(observed)?).map_err(err)?;
    let r = stats::chi_squared(&t).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("statistic", r.statistic)?;
    d.set_item("dof", r.dof)?;
    d.set_item("p_value", r.p_value)?;
    d.set_item("expected", from_matrix(&t.expected))?;
    Ok(d)
}

/// Row indices of the users whose share of each component is in the top `fraction`.
#[pyfunction]
#[pyo3(signature = (a, fraction=groups::DEFAULT_FRACTION))]
fn representative_groups(a: Vec<Vec<f64>>, fraction: f64) -> PyResult<Vec<Vec<usize>>> {
    Ok(groups::representative_groups(&to_matrix(a)?, fraction).map_err(err)?.members)
}

#[pyfunction]
fn jaccard(x: Vec<usize>, y: Vec<usize>) -> f64 {
    let (mut x, mut y) = (x, y);
    x.sort_unstable();
    x.dedup();
    y.sort_unstable();
    y.dedup();
    groups::jaccard(&x, &y)
}

/// Synthetic tensor with three planted weekly patterns.
/// Returns `(tensor, truth, group_labels)`.
#[pyfunction]
#[pyo3(signature = (n_users, n_weeks, seed=0, noise_level=None))]
fn synthetic(n_users: usize, n_weeks: usize, seed: u64, noise_level: Option<f64>) -> PyResult<(Tensor, Model, Vec<usize>)> {
    let mut spec = SyntheticSpec::three_patterns(n_users, n_weeks, seed);
    if let Some(level) = noise_level {
        spec.noise = NoiseModel::Poisson { level };
    }
    let d = synth::generate_synthetic(&spec).map_err(err)?;
    Ok((Tensor { inner: d.tensor }, Model { inner: d.truth }, d.labels))
}

/// Builds the user × day × week count tensor from a receipts CSV.
/// Returns `(tensor, user_ids, week_start_dates)`.
#[pyfunction]
fn load_receipts(path: &str, start: &str, end: &str) -> PyResult<(Tensor, Vec<String>, Vec<String>)> {
    let date = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| PyValueError::new_err(format!("{s:?}: {e}")));
    let cal = ingest::CalendarConfig::new(date(start)?, date(end)?);
    let file = std::fs::File::open(path).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
    let (records, _) = ingest::parse_receipts(file).map_err(err)?;
    let b = ingest::build_tensor(&records, &cal).map_err(err)?;
    Ok((Tensor { inner: b.tensor }, b.users, b.week_starts.iter().map(|d| d.to_string()).collect()))
}

#[pymodule]
#[pyo3(name = "msntf")]
fn msntf_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Tensor>()?;
    m.add_class::<Model>()?;
    m.add_class::<FitResult>()?;
    m.add_class::<Clustering>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(core_consistency, m)?)?;
    m.add_function(wrap_pyfunction!(cc_scan, m)?)?;
    m.add_function(wrap_pyfunction!(kmedoids, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette, m)?)?;
    m.add_function(wrap_pyfunction!(nnls, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_sf, m)?)?;
    m.add_function(wrap_pyfunction!(chi_squared, m)?)?;
    m.add_function(wrap_pyfunction!(representative_groups, m)?)?;
    m.add_function(wrap_pyfunction!(jaccard, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(load_receipts, m)?)?;
    Ok(())
}
