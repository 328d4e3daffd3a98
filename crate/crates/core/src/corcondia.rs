//! Core-consistency diagnostic.
//!
//! Given fixed CP factors, the least-squares Tucker3 core
//! `G = X ×₁ A⁺ ×₂ B⁺ ×₃ C⁺` is compared with the superdiagonal target `Λ`:
//!
//! ```text
//! CC = 100 · (1 − Σ_{n,m,p} (g_nmp − λ_nmp)² / R)
//! ```
//!
//! Before the solve each component is put in a canonical gauge: weights are
//! folded into `A` and every column of `A`, `B`, `C` gets the cube root of
//! the component magnitude as its norm. This leaves the CP model unchanged
//! and makes the score independent of how scale is distributed over modes.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::matrix::pseudoinverse;
use crate::model::FactorModel;
use crate::parafac::{fit, FitConfig};
use crate::tensor::{Array3, DenseTensor3};

/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_REL_TOL: f64 = 1e-12;

pub const DEFAULT_CC_THRESHOLD: f64 = 85.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CoreTensor {
    /// Least-squares core, R×R×R.
    pub g: Array3,
    /// Superdiagonal target, R×R×R.
    pub lambda: Array3,
    /// Set when some factor matrix lacked full column rank.
    pub rank_deficient: bool,
}

impl CoreTensor {
    pub fn rank(&self) -> usize {
        self.g.shape().0
    }

    /// `Σ (g − λ)²`.
    pub fn squared_distance(&self) -> f64 {
        self.g
            .as_slice()
            .iter()
            .zip(self.lambda.as_slice())
            .map(|(g, l)| (g - l) * (g - l))
            .sum()
    }

    pub fn core_consistency(&self) -> f64 {
        cc_from_distance(self.squared_distance(), self.rank())
    }
}

pub fn superdiagonal(rank: usize) -> Array3 {
    Array3::from_fn((rank, rank, rank), |n, m, p| if n == m && m == p { 1.0 } else { 0.0 })
}

pub fn cc_from_distance(squared_distance: f64, rank: usize) -> f64 {
    100.0 * (1.0 - squared_distance / rank as f64)
}

/// Rescales each component so its three factor columns share the same norm
/// (the cube root of the component magnitude). Weights are folded in.
pub fn balance_components(m: &FactorModel) -> FactorModel {
    let mut out = m.absorb_weights();
    for r in 0..out.rank() {
        let norms = [out.a.column_norm(r), out.b.column_norm(r), out.c.column_norm(r)];
        let mag = norms[0] * norms[1] * norms[2];
        if mag == 0.0 {
            continue;
        }
        let target = mag.cbrt();
        for (f, n) in [&mut out.a, &mut out.b, &mut out.c].into_iter().zip(norms) {
            f.scale_column(r, target / n);
        }
    }
    out
}

/// Least-squares Tucker3 core for the CP factors of `m`.
pub fn compute_core(t: &DenseTensor3, m: &FactorModel) -> Result<CoreTensor> {
    m.check_ranks()?;
    if m.shape() != t.shape() {
        return Err(Error::arg(format!(
            "model shape {:?} does not match tensor shape {:?}",
            m.shape(),
            t.shape()
        )));
    }
    let rank = m.rank();
    if rank == 0 {
        return Err(Error::arg("rank-0 model"));
    }
    let bal = balance_components(m);
    let mut rank_deficient = false;
    let mut g = t.as_array().clone();
    for (mode, f) in [(1, &bal.a), (2, &bal.b), (3, &bal.c)] {
        if f.as_slice().iter().all(|v| *v == 0.0) {
            return Err(Error::arg(format!("factor of mode {mode} is entirely zero")));
        }
        let (pinv, r) = pseudoinverse(f, PINV_REL_TOL);
        rank_deficient |= r < rank;
        g = g.mode_product(&pinv, mode)?;
    }
    if rank_deficient {
        warn!("core solve with rank-deficient factors; pseudoinverse drops null directions");
    }
    Ok(CoreTensor {
        g,
        lambda: superdiagonal(rank),
        rank_deficient,
    })
}

/// Core consistency of `m` on `t`; at most 100, may be negative.
pub fn core_consistency(t: &DenseTensor3, m: &FactorModel) -> Result<f64> {
    Ok(compute_core(t, m)?.core_consistency())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankCc {
    pub rank: usize,
    /// One entry per run; `None` where the fit or core solve failed.
    pub values: Vec<Option<f64>>,
    pub mean: Option<f64>,
    /// Student-t 95% half-width; absent with fewer than two valid runs.
    pub ci_half_width: Option<f64>,
    pub selected: bool,
}

impl RankCc {
    pub fn valid_values(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn ci(&self) -> Option<(f64, f64)> {
        Some((self.mean? - self.ci_half_width?, self.mean? + self.ci_half_width?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcReport {
    pub ranks: Vec<RankCc>,
    pub n_runs: usize,
    pub threshold: f64,
    pub base_seed: u64,
    pub selected_rank: Option<usize>,
    pub warnings: Vec<String>,
}

/// Mean and Student-t 95% half-width `t(0.975, n−1) · sd / √n`.
pub fn mean_and_ci(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let tq = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("dof >= 1")
        .inverse_cdf(0.975);
    (Some(mean), Some(tq * var.sqrt() / (n as f64).sqrt()))
}

/// Fits `n_runs` models per rank (seeds `base_cfg.seed + run`), scores each
/// with the core consistency and selects the largest rank whose mean reaches
/// `threshold`.
pub fn cc_scan(
    t: &DenseTensor3,
    ranks: &[usize],
    n_runs: usize,
    base_cfg: &FitConfig,
    threshold: f64,
) -> Result<CcReport> {
    if ranks.is_empty() {
        return Err(Error::arg("rank list is empty"));
    }
    if n_runs == 0 {
        return Err(Error::arg("n_runs must be >= 1"));
    }
    if ranks.contains(&0) {
        return Err(Error::arg("ranks must be >= 1"));
    }
    let jobs: Vec<(usize, usize)> = ranks
        .iter()
        .flat_map(|&r| (0..n_runs).map(move |run| (r, run)))
        .collect();
    let scores: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(rank, run)| {
            let cfg = FitConfig {
                rank,
                seed: base_cfg.seed.wrapping_add(run as u64),
                ..base_cfg.clone()
            };
            match fit(t, &cfg).and_then(|f| core_consistency(t, &f.model)) {
                Ok(cc) if cc.is_finite() => Some(cc),
                Ok(_) => None,
                Err(e) => {
                    warn!("rank {rank} run {run}: {e}");
                    None
                }
            }
        })
        .collect();

    let mut warnings = Vec::new();
    if n_runs < 2 {
        warnings.push("n_runs < 2: confidence intervals omitted".to_string());
    }
    let mut rows: Vec<RankCc> = ranks
        .iter()
        .enumerate()
        .map(|(idx, &rank)| {
            let values = scores[idx * n_runs..(idx + 1) * n_runs].to_vec();
            let valid: Vec<f64> = values.iter().flatten().copied().collect();
            if valid.is_empty() {
                warnings.push(format!("rank {rank}: every run failed"));
            }
            let (mean, ci_half_width) = mean_and_ci(&valid);
            RankCc {
                rank,
                values,
                mean,
                ci_half_width,
                selected: false,
            }
        })
        .collect();
    let selected_rank = rows
        .iter()
        .filter(|r| r.mean.is_some_and(|m| m >= threshold))
        .map(|r| r.rank)
        .max();
    for r in &mut rows {
        r.selected = Some(r.rank) == selected_rank;
    }
    Ok(CcReport {
        ranks: rows,
        n_runs,
        threshold,
        base_seed: base_cfg.seed,
        selected_rank,
        warnings,
    })
}

/// Wraps a hand-built core with its superdiagonal target.
pub fn core_from_parts(g: Array3) -> Result<CoreTensor> {
    let (a, b, c) = g.shape();
    if a != b || b != c || a == 0 {
        return Err(Error::arg(format!("core must be a non-empty cube, got {:?}", g.shape())));
    }
    Ok(CoreTensor {
        lambda: superdiagonal(a),
        g,
        rank_deficient: false,
    })
}
