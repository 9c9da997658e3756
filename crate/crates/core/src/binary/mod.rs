//! Binary-outcome estimators: random sampling, Stream-1 naive, Chapman, the full-table
//! CRC estimator, the condensed-table estimator, and their variances.

mod classical;
mod delta;
mod mle;
mod report;

pub use classical::{chapman_estimate, chapman_logit_ci, chapman_report, rs_estimate, stream1_naive};
pub use delta::{
    ate, crc_estimate, crc_proportion_gradient, crc_target_functional, delta_variance,
    finite_difference_gradient, multinomial_delta_variance, psi_hat_estimate, psi_hat_point,
    psi_hat_target_functional, psi_hat_variance, AteInput, AteVariance, DeltaMode,
};
pub use mle::{
    crc_means_from_counts, crc_point, mle_params, stream1_shares, MLEstimates, Proportion,
    PARAMETER_NAMES,
};
pub(crate) use mle::psi_hat_from_counts;
pub use report::{
    wald_interval, Diagnostic, EstimateReport, Interval, IntervalKind, Method, Target,
};
