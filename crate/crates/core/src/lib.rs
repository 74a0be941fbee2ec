//! Finite-sample unbiased estimation of central moments of latent
//! components in unbalanced two- and three-level random-effects models.
//!
//! A two-level model `y_ij = u_i + v_ij` admits closed-form unbiased
//! estimators of the second, third, and fourth central moments of both
//! components; a three-level model `y_ijk = u_i + v_ij + w_ijk` admits the
//! same for second and third moments. Between-component estimators exist
//! under two grand-mean conventions (group-level and observation-level
//! averaging). Everything is written against a generic scalar so the exact
//! rational oracle certifies the very formulas the `f64` pipeline runs.
//!
//! Modules:
//! - [`design`]: datasets, validation, exact design summaries
//! - [`kernel`]: expected powers of weighted sums, centered power sums
//! - [`twolevel`] / [`threelevel`]: the estimators
//! - [`dist`] / [`oracle`]: finite laws, exhaustive-enumeration and Monte
//!   Carlo verification
//! - [`suite`]: the runnable verification checklist

pub mod design;
pub mod dist;
pub mod error;
pub mod exec;
pub mod kernel;
pub mod numeric;
pub mod oracle;
pub mod suite;
pub mod threelevel;
pub mod twolevel;

pub use design::{
    validate_three_level, validate_two_level, DesignSummary, NestedDesignSummary, ThreeLevelData,
    TwoLevelData,
};
pub use dist::DiscreteDistribution;
pub use error::{EstimatorError, ValidationError};
pub use exec::ExecMode;
pub use numeric::Scalar;
pub use threelevel::{
    estimate_three_level, estimate_u_3l, estimate_v_3l, estimate_w, ThreeLevelEstimates,
};
pub use twolevel::{
    build_fourth_system, estimate_between_grp, estimate_between_obs, estimate_within,
    BetweenEstimates2L, FourthMomentSystem, FourthStatus, NuisanceMoments, Scheme, SystemKind,
    WithinEstimates2L,
};
