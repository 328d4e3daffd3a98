//! Mining intra-week × inter-week behavioral patterns from event logs with
//! non-negative PARAFAC, core-consistency rank selection, clustering of user
//! memberships and chi-squared characterization of the clusters.

pub mod clustering;
pub mod corcondia;
pub mod demographics;
pub mod error;
pub mod groups;
pub mod ingest;
pub mod matrix;
pub mod model;
pub mod nnls;
pub mod parafac;
pub mod persist;
pub mod stats;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use matrix::{khatri_rao, Matrix};
pub use model::FactorModel;
pub use tensor::{frobenius_norm, reconstruct, relative_error, unfold, Array3, DenseTensor3};
pub use parafac::{fit, fit_multi, FitConfig, FitResult};
pub use corcondia::{cc_scan, core_consistency, CcReport};
pub use clustering::{kmeans, kmedoids, silhouette, ClusteringResult, PointSet};
