//! Robust, sparse M-estimation of plane-wave directions of arrival from
//! multi-snapshot sensor-array data.
//!
//! The crate provides:
//! - [`geometry`]: uniform linear array steering vectors, derivatives, and a
//!   dense angular dictionary;
//! - [`loss`]: the Gauss / Huber / MVT / Tyler loss family with weights and
//!   consistency factors, plus the self-contained χ² special functions;
//! - [`datagen`]: Gaussian, MVT, and ε-contaminated snapshot models with a
//!   reproducible RNG contract, and snapshot file I/O;
//! - [`estimator`]: the iterative sparse-Bayesian DOA estimator built on a
//!   robustly weighted sample covariance;
//! - [`metrics`]: permutation-matched RMSE accumulation and Cramér-Rao
//!   bounds (Gaussian and CES/MVT) in deg².

// validation guards are written `!(x > 0.0)` so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod linalg;
pub mod loss;
pub mod metrics;

pub use datagen::{
    asnr_to_sigma2, generate, run_rng, sigma2_to_asnr_db, NoiseModel, Scenario, SnapshotMatrix,
};
pub use error::{Error, Result};
pub use estimator::{
    estimate_doas, estimate_doas_traced, EstimateResult, EstimatorConfig, IterationRecord,
};
pub use geometry::{
    build_dictionary, steering_derivative, steering_vector, ArrayGeometry, Dictionary,
};
pub use loss::{LossKind, LossSpec};
pub use metrics::{crb_ces, crb_gauss, match_and_accumulate, psi1_mvt, RmseAccumulator};

