//! Empirical distance covariance and conditional distance covariance.
//!
//! Distance covariance of `Y` (`n x p`) and `Z` (`n x q`) is computed three
//! ways that agree to rounding:
//!
//! | Function | Route |
//! |----------|-------|
//! | [`dcov_direct`] | explicit double sums over double-centered entries |
//! | [`dcov`] | inner product of double-centered distance matrices |
//! | [`dcov_sform`] | `S1 + S2 - 2 S3` moment decomposition, O(n) memory |
//!
//! The kernel-weighted conditional statistic `S_n(Y, Z, U)` has two routes:
//! [`cdc_stat_direct`] evaluates the local statistic `D1 + D2 - 2 D3` at
//! every conditioning point, [`cdc_stat`] evaluates the same quantity through
//! products of the distance and kernel matrices.
//!
//! All routes are pure functions of their inputs and accumulate in a fixed
//! order, so repeated calls are bit-identical.

mod batch;
mod cdc;
mod dcov;
mod distance;
mod kernel;

use thiserror::Error;

pub use batch::SampleBatch;
pub use cdc::{cdc_local, cdc_stat, cdc_stat_direct, CdcResult};
pub use dcov::{dcov, dcov_direct, dcov_sform, DcovResult};
pub use distance::{double_center, pairwise_distance_matrix, CenteredDistancePair, PairwiseDistanceMatrix};
pub use kernel::{gaussian_kernel_matrix, silverman_bandwidth, KernelMatrix};
pub(crate) use kernel::distinct_kernel_columns;

pub(crate) use batch::ensure_same_n;
pub(crate) use cdc::CdcPlan;
pub(crate) use dcov::dcov_from_centered;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample batch must have at least one row and one column, got {rows}x{cols}")]
    EmptyBatch { rows: usize, cols: usize },

    #[error("non-finite value {value} at row {row}, column {col}")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("row {row} has {found} values, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },

    #[error("{what}: sample counts differ ({left} vs {right})")]
    CountMismatch { what: &'static str, left: usize, right: usize },

    #[error("matrix shape mismatch: expected {expected}x{expected}, got {rows}x{cols}")]
    ShapeMismatch { expected: usize, rows: usize, cols: usize },

    #[error("not a distance matrix: {0}")]
    InvalidDistanceMatrix(String),

    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),

    #[error("Silverman's rule needs n >= 1 and r >= 1, got n={n}, r={r}")]
    InvalidSilvermanArgs { n: usize, r: usize },

    #[error("index {index} out of range for {n} samples")]
    IndexOutOfRange { index: usize, n: usize },
}

pub type Result<T> = std::result::Result<T, StatsError>;
