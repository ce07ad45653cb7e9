//! Global sensitivity analysis of Bayesian and generalised posteriors via
//! score functions.
//!
//! The toolkit measures how much a posterior can move when prior or loss
//! hyperparameters vary over a neighbourhood. Sensitivity is quantified by
//! the Fisher divergence between the reference posterior and each candidate,
//! estimated from a single set of reference-posterior draws: only score
//! functions (gradients of log densities) are ever evaluated, never densities
//! or normalisation constants.
//!
//! The pieces fit together as follows:
//!
//! * [`samples`] holds posterior draws and precomputed score matrices.
//! * [`scores`] defines score-function building blocks: generic fields,
//!   natural exponential-family priors, linear-in-hyperparameter losses, and
//!   a Gaussian copula perturbation.
//! * [`estimate`] computes the empirical Fisher divergence, its loss/prior
//!   decomposition, per-dimension contributions, and an error diagnostic.
//! * [`quadratic`] builds the exact convex quadratic representation of the
//!   empirical divergence in the hyperparameters, valid for exponential-family
//!   priors and linear losses.
//! * [`neighborhoods`] optimises the quadratic (or a scalar black-box
//!   objective) over boxes, vertex lists, and intervals to obtain worst-case
//!   and best-case hyperparameters.
//! * [`gaussian`] provides closed-form conjugate Gaussian machinery used as
//!   oracles and diagnostics.
//! * [`local`] computes directional derivatives of the divergence in
//!   hyperparameter space.

// Comparisons such as `!(p > 0.0 && p < 1.0)` are deliberate: unlike the
// de-negated forms they also reject NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod gaussian;
pub mod local;
pub mod neighborhoods;
pub mod normal;
pub mod quadratic;
pub mod samples;
pub mod scores;
pub mod sum;

pub use error::{Error, Result};
pub use estimate::{
    chebyshev_error_bound, decompose_fd, estimate_fd, estimate_fd_with_mode, per_dimension_fd,
    CrossConvention, FdDecomposition, FdEstimate,
};
pub use gaussian::{
    conjugate_posterior, fd_gaussian, kl_gaussian, w2_gaussian, GaussianDist, GaussianScoreField,
};
pub use local::{directional_derivative, ScoreJacobianField};
pub use neighborhoods::{
    box_vertices, grid_points, learning_rate_sensitivity, pgd_min_box, sensitivity_box,
    sensitivity_box_with, sensitivity_scalar_search, sensitivity_separable, sup_over_vertices,
    unconstrained_min, BoxNeighborhood, PgdOutcome, PolytopeNeighborhood, SensitivityResult,
};
pub use quadratic::{
    build_joint, build_loss_only, build_loss_only_precomputed, build_prior_only, BlockLayout,
    QuadraticObjective,
};
pub use samples::{PrecomputedScores, SampleOrigin, SampleSet};
pub use scores::{
    copula_score, eval_scores_over_samples, expfam_prior_score, gaussian_moment_from_natural,
    gaussian_natural_from_moment, invgamma_natural_from_shape_rate, posterior_score,
    split_gaussian_natural, CopulaObjective, ExpFamilyPrior, FnScoreField, GaussianCopulaScore,
    LinearLoss, ScoreField, ZeroScore,
};
