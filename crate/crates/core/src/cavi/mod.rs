//! Coordinate-ascent variational inference.

mod elbo;
mod fit;
mod moments;
mod repair;
mod updates;

pub use elbo::{compute_elbo, ElboTerms};
pub use fit::{fit, fit_with, restart_seed, run_cavi, FitDiagnostics, FitOptions, MonotonicityLog, Step};
pub use moments::{expected_block_loglik, BlockLoglik, Component, Moments};
pub use updates::{
    refine_selection, reorder_clusters, update_clusters, update_gamma, update_node_row, update_nodes, update_noise, update_sticks, update_tau,
    update_theta1, update_theta1_bernoulli, update_theta1_normal, EdgeTable, RATE_FLOOR,
};
