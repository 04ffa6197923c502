//! Minimum-distance estimation: point sets, the limiting covariance, weight
//! policies, the continuous-updating objective and its minimizer.

pub mod fit;
pub mod objective;
pub mod optimize;
pub mod points;
pub mod sigma;

pub use fit::{
    asymptotic_covariance, fit, fit_ranks, model_jacobian, Diagnostics, FitInput, FitReport, Fitted,
};
pub use objective::{
    discrepancy, quadratic_form, weight_from_sigma, weight_matrix, Objective, WeightPolicy,
    DEFAULT_TIKHONOV_FRACTION,
};
pub use optimize::{minimize, OptimResult, OptimizerConfig};
pub use points::{extremal_coeff_point_set, grid_point_set, neighbour_pairs, PointSet};
pub use sigma::{sigma_for, sigma_matrix};
