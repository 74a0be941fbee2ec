//! Error taxonomy shared across the crate.

use thiserror::Error;

/// Structural validation failures for incoming datasets or size profiles.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("need at least 3 groups, found {n}")]
    TooFewGroups { n: usize },
    #[error("group {index} has {size} observations, at least 3 required")]
    GroupTooSmall { index: usize, size: usize },
    #[error("group {group} has {count} subgroups, at least 3 required")]
    SubgroupCountTooSmall { group: usize, count: usize },
    #[error("subgroup ({group}, {subgroup}) has {size} observations, at least 3 required")]
    SubgroupTooSmall {
        group: usize,
        subgroup: usize,
        size: usize,
    },
    #[error("non-finite value at group {group}{}, index {index}", .subgroup.map(|s| format!(", subgroup {s}")).unwrap_or_default())]
    NonFiniteValue {
        group: usize,
        subgroup: Option<usize>,
        index: usize,
    },
}

/// Failures raised while evaluating an estimator.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EstimatorError {
    #[error("moment order {0} unsupported, expected 2, 3 or 4")]
    UnsupportedOrder(u32),
    #[error("fourth-moment system is singular (det = {det})")]
    SingularSystem { det: String },
    #[error("fourth-moment solve requires the within fourth-moment estimates, which are unavailable")]
    MissingWithinFourth,
}
