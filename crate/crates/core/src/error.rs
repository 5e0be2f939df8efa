use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("element index {index} out of range for an array of {count} elements")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("point coincides with antenna element {0}")]
    CoincidentPoint(usize),

    #[error("chi2 undefined at this geometry: {0}")]
    Chi2Undefined(String),

    #[error("cluster {index}: {reason}")]
    InvalidCluster { index: usize, reason: String },

    #[error("permanent guard exceeded ({terms} terms > {limit}); use the structured path")]
    GuardExceeded { terms: u128, limit: u128 },

    #[error("columns within subarray {subarray} ({polarization}) differ; call tie_to_subarrays first")]
    Untied {
        subarray: usize,
        polarization: &'static str,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("covariance is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("infeasible per-antenna cap: q0 * 2M = {0} < 1")]
    InfeasibleCap(f64),

    #[error("non-finite objective at {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
