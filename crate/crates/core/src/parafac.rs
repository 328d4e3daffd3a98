//! Non-negative PARAFAC by alternating non-negative least squares.
//!
//! Each sweep updates `A`, then `B`, then `C`. For mode 1 the subproblem is
//!
//! ```text
//! min_{A ≥ 0} ‖X₍₁₎ − A (C ⊙ B)ᵀ‖²
//! ```
//!
//! whose normal equations use `(BᵀB) ∗ (CᵀC)` as Gram matrix and
//! `X₍₁₎ (C ⊙ B)` as right-hand side; the other modes are symmetric.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{khatri_rao, Matrix};
use crate::model::FactorModel;
use crate::nnls::{self, NnlsOptions, NnlsProblem};
use crate::tensor::{squared_residual, DenseTensor3};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    /// Entries i.i.d. uniform on (0, 1].
    #[default]
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub rank: usize,
    pub max_iterations: usize,
    /// Stop once the relative decrease of the squared residual between
    /// sweeps drops below this.
    pub tolerance: f64,
    pub init: Initialization,
    pub seed: u64,
    pub nnls_kkt_tol: f64,
    pub nnls_max_exchange_factor: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        let nnls = NnlsOptions::default();
        FitConfig {
            rank: 3,
            max_iterations: 500,
            tolerance: 1e-8,
            init: Initialization::Uniform,
            seed: 0,
            nnls_kkt_tol: nnls.kkt_tol,
            nnls_max_exchange_factor: nnls.max_exchange_factor,
        }
    }
}

impl FitConfig {
    pub fn with_rank(rank: usize) -> Self {
        FitConfig {
            rank,
            ..FitConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::arg("rank must be >= 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::arg("tolerance must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::arg("max_iterations must be >= 1"));
        }
        Ok(())
    }

    fn nnls_options(&self) -> NnlsOptions {
        NnlsOptions {
            kkt_tol: self.nnls_kkt_tol,
            max_exchange_factor: self.nnls_max_exchange_factor,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: FactorModel,
    /// Squared Frobenius residual after each sweep.
    pub objective_trace: Vec<f64>,
    pub relative_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }
}

/// Normal equations for one mode, assembled from the cached unfoldings.
struct Unfoldings {
    modes: [Matrix; 3],
}

impl Unfoldings {
    fn new(t: &DenseTensor3) -> Result<Self> {
        Ok(Unfoldings {
            modes: [t.unfold(1)?, t.unfold(2)?, t.unfold(3)?],
        })
    }

    /// Updates factor `mode` (0 = A, 1 = B, 2 = C) in place.
    fn update(&self, factors: &mut [Matrix; 3], mode: usize, opts: &NnlsOptions) -> Result<UpdateStats> {
        let (lo, hi) = match mode {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        // Unfolding columns have the lower remaining mode fastest, which is
        // the row order of khatri_rao(higher, lower).
        let kr = khatri_rao(&factors[hi], &factors[lo])?;
        let gram = factors[hi].gram().hadamard(&factors[lo].gram())?;
        let rhs = self.modes[mode].matmul(&kr)?.transpose();
        let problem = NnlsProblem::new(gram, rhs)?;
        let sol = nnls::solve_with(&problem, opts);
        factors[mode] = sol.x.transpose();
        Ok(UpdateStats {
            non_converged: sol.converged.iter().filter(|c| !**c).count(),
            regularized: sol.regularized,
        })
    }
}

struct UpdateStats {
    non_converged: usize,
    regularized: bool,
}

fn random_factor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * (1.0 - rng.random::<f64>()))
}

fn as_model(f: &[Matrix; 3]) -> FactorModel {
    FactorModel {
        a: f[0].clone(),
        b: f[1].clone(),
        c: f[2].clone(),
        weights: None,
    }
}

fn objective(t: &DenseTensor3, f: &[Matrix; 3]) -> Result<f64> {
    squared_residual(t, &as_model(f))
}

fn zero_columns(f: &[Matrix; 3]) -> Vec<usize> {
    (0..f[0].cols())
        .filter(|&r| f.iter().any(|m| (0..m.rows()).all(|i| m[(i, r)] == 0.0)))
        .collect()
}

/// Fits a rank-`cfg.rank` non-negative CP model to `t`.
pub fn fit(t: &DenseTensor3, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let (ni, nj, nk) = t.shape();
    let rank = cfg.rank;
    let mut warnings = Vec::new();
    if rank > ni.min(nj).min(nk) {
        warnings.push(format!(
            "rank {rank} exceeds the smallest tensor dimension {}; the model is over-parameterized",
            ni.min(nj).min(nk)
        ));
    }

    let norm = t.frobenius_norm();
    if norm == 0.0 {
        return Ok(FitResult {
            model: FactorModel::zeros(t.shape(), rank),
            objective_trace: vec![0.0],
            relative_error: 0.0,
            iterations: 0,
            converged: true,
            seed: cfg.seed,
            warnings,
        });
    }

    let unf = Unfoldings::new(t)?;
    let opts = cfg.nnls_options();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut factors = [
        random_factor(&mut rng, ni, rank, 1.0),
        random_factor(&mut rng, nj, rank, 1.0),
        random_factor(&mut rng, nk, rank, 1.0),
    ];
    // Scale for reseeded columns so a fresh rank-one term is on the order of
    // the mean tensor entry.
    let reseed_scale = (t.sum() / (ni * nj * nk) as f64).cbrt().max(f64::MIN_POSITIVE);

    let mut trace: Vec<f64> = Vec::new();
    let mut reseeded = vec![false; rank];
    let mut warned_dead = vec![false; rank];
    let mut converged = false;
    let mut non_converged_cols = 0usize;
    let mut regularized = false;
    let mut iterations = 0;

    let sweep = |factors: &mut [Matrix; 3], nc: &mut usize, reg: &mut bool| -> Result<f64> {
        for mode in 0..3 {
            let s = unf.update(factors, mode, &opts)?;
            *nc += s.non_converged;
            *reg |= s.regularized;
        }
        objective(t, factors)
    };

    while iterations < cfg.max_iterations {
        let previous = factors.clone();
        let f_new = sweep(&mut factors, &mut non_converged_cols, &mut regularized)?;
        iterations += 1;

        if let Some(&f_prev) = trace.last() {
            if f_new > f_prev {
                // Round-off at the optimum; keep the better iterate.
                factors = previous;
                converged = true;
                break;
            }
        }
        trace.push(f_new);
        let f_prev = if trace.len() >= 2 { trace[trace.len() - 2] } else { f64::INFINITY };

        let dead: Vec<usize> = zero_columns(&factors);
        let mut revived = false;
        for &r in &dead {
            if reseeded[r] {
                if !warned_dead[r] {
                    warned_dead[r] = true;
                    warnings.push(format!("component {r} collapsed to zero after reseeding; left at zero"));
                }
                continue;
            }
            reseeded[r] = true;
            if iterations >= cfg.max_iterations {
                continue;
            }
            let mut trial = factors.clone();
            for (m, f) in trial.iter_mut().enumerate() {
                let col = random_factor(&mut rng, f.rows(), 1, reseed_scale);
                f.set_column(r, col.as_slice());
                debug!("reseeding component {r} in mode {m}");
            }
            let mut nc = 0;
            let mut reg = false;
            let f_trial = sweep(&mut trial, &mut nc, &mut reg)?;
            iterations += 1;
            let current = *trace.last().expect("pushed above");
            if f_trial <= current {
                factors = trial;
                non_converged_cols += nc;
                regularized |= reg;
                trace.push(f_trial);
                revived = true;
            } else {
                warned_dead[r] = true;
                warnings.push(format!(
                    "component {r} collapsed to zero; reseeding did not lower the objective, left at zero"
                ));
            }
        }
        if revived {
            continue;
        }

        let f_new = *trace.last().expect("non-empty");
        if f_new == 0.0 || (f_prev.is_finite() && (f_prev - f_new) / f_prev < cfg.tolerance) {
            converged = true;
            break;
        }
    }

    if non_converged_cols > 0 {
        warnings.push(format!(
            "{non_converged_cols} NNLS column solves hit the exchange cap"
        ));
    }
    if regularized {
        warnings.push("singular Gram matrix encountered; ridge added".to_string());
    }
    for w in &warnings {
        warn!("seed {}: {w}", cfg.seed);
    }

    let f_final = *trace.last().expect("at least one sweep");
    Ok(FitResult {
        model: as_model(&factors),
        objective_trace: trace,
        relative_error: f_final.sqrt() / norm,
        iterations,
        converged,
        seed: cfg.seed,
        warnings,
    })
}

#[derive(Clone, Debug)]
pub struct MultiFit {
    pub best: FitResult,
    /// `(seed, final objective)` for every run, in seed order.
    pub objectives: Vec<(u64, f64)>,
}

/// Runs `fit` with seeds `cfg.seed, cfg.seed + 1, …` and keeps the run with
/// the lowest final objective (ties go to the lowest seed).
pub fn fit_multi(t: &DenseTensor3, cfg: &FitConfig, n_runs: usize) -> Result<MultiFit> {
    if n_runs == 0 {
        return Err(Error::arg("n_runs must be >= 1"));
    }
    cfg.validate()?;
    let results: Vec<FitResult> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let run_cfg = FitConfig {
                seed: cfg.seed.wrapping_add(i),
                ..cfg.clone()
            };
            fit(t, &run_cfg)
        })
        .collect::<Result<_>>()?;
    let objectives = results.iter().map(|r| (r.seed, r.objective())).collect();
    let best = results
        .into_iter()
        .reduce(|best, r| if r.objective() < best.objective() { r } else { best })
        .expect("n_runs >= 1");
    Ok(MultiFit { best, objectives })
}

/// Scales every column of `B` and `C` to unit Euclidean norm and moves the
/// magnitude into the weights. `A` is left as is; zero columns keep weight 0.
pub fn normalize(m: &FactorModel) -> FactorModel {
    let mut out = m.clone();
    let mut weights = m.effective_weights();
    for r in 0..m.rank() {
        for f in [&mut out.b, &mut out.c] {
            let n = f.column_norm(r);
            if n > 0.0 {
                f.scale_column(r, 1.0 / n);
            }
            weights[r] *= n;
        }
        if weights[r] == 0.0 {
            // keep -0.0 out of serialized output
            weights[r] = 0.0;
        }
    }
    out.weights = Some(weights);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    /// `permutation[r]` is the component of `other` matched to reference
    /// component `r`.
    pub permutation: Vec<usize>,
    /// Congruence of each matched pair, in reference order.
    pub congruence: Vec<f64>,
}

impl Alignment {
    pub fn min_congruence(&self) -> f64 {
        self.congruence.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        0.0
    } else {
        dot / (nx * ny)
    }
}

/// R×R matrix of component congruences: entry `(r, s)` is the product over
/// the three modes of the cosine between reference column `r` and other
/// column `s`.
pub fn congruence_matrix(reference: &FactorModel, other: &FactorModel) -> Result<Matrix> {
    reference.check_ranks()?;
    other.check_ranks()?;
    if reference.rank() != other.rank() {
        return Err(Error::arg(format!(
            "cannot align rank {} with rank {}",
            reference.rank(),
            other.rank()
        )));
    }
    if reference.shape() != other.shape() {
        return Err(Error::arg(format!(
            "cannot align models of shapes {:?} and {:?}",
            reference.shape(),
            other.shape()
        )));
    }
    let r = reference.rank();
    let cols = |m: &Matrix| (0..r).map(|c| m.column(c)).collect::<Vec<_>>();
    let (ra, rb, rc) = (cols(&reference.a), cols(&reference.b), cols(&reference.c));
    let (oa, ob, oc) = (cols(&other.a), cols(&other.b), cols(&other.c));
    Ok(Matrix::from_fn(r, r, |i, j| {
        cosine(&ra[i], &oa[j]) * cosine(&rb[i], &ob[j]) * cosine(&rc[i], &oc[j])
    }))
}

/// Largest supported rank for exact alignment.
pub const MAX_ALIGN_RANK: usize = 20;

/// Finds the component permutation of `other` maximizing the summed
/// congruence with `reference`. Exact (dynamic programming over subsets);
/// among equal-scoring assignments the lexicographically smallest wins.
pub fn align(reference: &FactorModel, other: &FactorModel) -> Result<Alignment> {
    let scores = congruence_matrix(reference, other)?;
    let r = scores.rows();
    if r > MAX_ALIGN_RANK {
        return Err(Error::arg(format!("alignment supports rank <= {MAX_ALIGN_RANK}, got {r}")));
    }
    let full = (1usize << r) - 1;
    // best[mask]: best total for reference components popcount(mask)..r
    // given that the components of `other` in `mask` are taken.
    let mut best = vec![f64::NEG_INFINITY; 1 << r];
    best[full] = 0.0;
    for mask in (0..full).rev() {
        let pos = mask.count_ones() as usize;
        let mut b = f64::NEG_INFINITY;
        for s in 0..r {
            if mask & (1 << s) == 0 {
                b = b.max(scores[(pos, s)] + best[mask | (1 << s)]);
            }
        }
        best[mask] = b;
    }
    let mut permutation = Vec::with_capacity(r);
    let mut mask = 0usize;
    for pos in 0..r {
        let s = (0..r)
            .find(|&s| mask & (1 << s) == 0 && scores[(pos, s)] + best[mask | (1 << s)] == best[mask])
            .expect("argmax exists");
        permutation.push(s);
        mask |= 1 << s;
    }
    let congruence = permutation.iter().enumerate().map(|(i, &s)| scores[(i, s)]).collect();
    Ok(Alignment {
        permutation,
        congruence,
    })
}
