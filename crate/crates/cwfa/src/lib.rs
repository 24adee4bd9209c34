//! Cluster-weighted factor analyzers for model-based clustering and
//! semi-supervised classification.
//!
//! Each mixture component models the joint density of a covariate vector and
//! a scalar response as a linear Gaussian regression times a Gaussian whose
//! covariance carries a low-rank factor structure
//! `Sigma_g = Lambda_g Lambda_g' + Psi_g`. Constraining the response
//! variance, the loadings, and the error variances across components (and
//! optionally forcing isotropy) yields a family of sixteen models named by
//! four-letter codes from `CCCC` to `UUUU`.
//!
//! The crate provides:
//! - maximum-likelihood fitting by a two-cycle alternating ECM loop with an
//!   Aitken stopping rule ([`aecm`]),
//! - hard starting partitions, eigen-based factor starts, and a five-level
//!   hierarchical initialization over the model lattice ([`init`]),
//! - BIC model selection over a (code, G, q) grid, ARI scoring, and a
//!   plot-ready report ([`selection`]),
//! - a seeded sampler with two built-in benchmark populations ([`simulate`]).
//!
//! Independent fits run on the rayon pool when the default `parallel`
//! feature is enabled; disable it for a fully sequential build.

pub mod aecm;
pub mod constraint;
pub mod error;
pub mod exec;
pub mod init;
pub mod linalg;
pub mod model;
pub mod selection;
pub mod simulate;

pub use aecm::{aitken_stop, fit, FitConfig, FitResult};
pub use constraint::ConstraintCode;
pub use error::{CwfaError, Result};
pub use init::{eigen_init, hierarchical_fit_family, kmeans_partition, random_partition, Lattice};
pub use model::{
    component_log_density, count_free_parameters, log_likelihood, map_labels,
    posterior_responsibilities, ComponentParams, CwfaParams, Dataset, Responsibilities,
};
pub use selection::{ari, bic, grid_search, group_factor_report, render_report, SearchResult};
pub use simulate::{example1_spec, example2_spec, sample_dataset, SimSpec};
