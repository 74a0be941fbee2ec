//! Verification oracles: exact expectations by exhaustive enumeration over
//! finite-support latent laws, and a seeded Monte Carlo bias tester for
//! designs where enumeration is infeasible.

mod enumerate;
mod monte_carlo;

pub use enumerate::{
    enumerate_expectation, enumerate_expectation_vec, enumerate_group_local,
    enumerate_subgroup_local, enumerate_three_level, enumerate_two_level, enumerate_two_level_vec,
    enumeration_outcomes, VarBlock, ENUMERATION_BUDGET,
};
pub use monte_carlo::{
    applicable_statistics, replication_rng, run_monte_carlo, run_monte_carlo_mode,
    sample_three_level, sample_two_level, BiasReport, DesignSpec, SimulationPlan, StatisticId,
};

use crate::error::{EstimatorError, ValidationError};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error(
        "enumeration over {variables} variables needs {outcomes} outcomes, over the budget of {budget}"
    )]
    EnumerationTooLarge {
        variables: usize,
        outcomes: u128,
        budget: u128,
    },
    #[error("estimator failed during enumeration: {0}")]
    Estimator(#[from] EstimatorError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("invalid design: {0}")]
    Design(#[from] ValidationError),
    #[error("three-level plans need a distribution for the innermost level")]
    MissingInnerDistribution,
    #[error("plans need at least one replication")]
    ZeroReps,
}
