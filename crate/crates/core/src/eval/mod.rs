//! Evaluation: density errors, the KDE baseline, rate experiments,
//! centered trajectories, and bootstrap bands.

pub mod bootstrap;
pub mod kde;
pub mod metrics;
pub mod rate;
pub mod trajectories;

pub use bootstrap::{bootstrap_bands, BootstrapBands};
pub use kde::{kde_time_conditional, silverman_bandwidths, Kde};
pub use metrics::{density_error, support_grid, support_grid_over, DensityErrorReport, Integration};
pub use rate::{log_log_slope, rate_experiment, RateConfig, RateReport, Regime};
pub use trajectories::{centered_trajectories, CenteredTrajectories, DEFAULT_LEVELS};
