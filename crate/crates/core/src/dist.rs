//! Finite-support zero-mean distributions for the verification oracles.

use crate::numeric::{big_ratio, rational_to_f64};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistributionError {
    #[error("distribution needs at least one atom")]
    Empty,
    #[error("atom {index} has non-positive probability {prob}")]
    NonPositiveProbability { index: usize, prob: String },
    #[error("probabilities sum to {sum}, expected exactly 1")]
    ProbabilitySumNotOne { sum: String },
    #[error("mean is {mean}, expected exactly 0")]
    NonZeroMean { mean: String },
}

/// One support point and its probability; both exact rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub value: BigRational,
    pub prob: BigRational,
}

/// Finite-support distribution with exactly zero mean.
///
/// Probabilities must sum to exactly 1 and the mean must be exactly 0,
/// matching the model assumption that every latent component is centered.
/// Atom order is preserved: Monte Carlo sampling walks the cumulative
/// probabilities in listed order.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<Atom>,
    values_f64: Vec<f64>,
    cum_prob_f64: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<(BigRational, BigRational)>) -> Result<Self, DistributionError> {
        if atoms.is_empty() {
            return Err(DistributionError::Empty);
        }
        for (index, (_, p)) in atoms.iter().enumerate() {
            if !p.is_positive() {
                return Err(DistributionError::NonPositiveProbability {
                    index,
                    prob: p.to_string(),
                });
            }
        }
        let sum: BigRational = atoms.iter().map(|(_, p)| p.clone()).sum();
        if !sum.is_one() {
            return Err(DistributionError::ProbabilitySumNotOne {
                sum: sum.to_string(),
            });
        }
        let mean: BigRational = atoms.iter().map(|(x, p)| x * p).sum();
        if !mean.is_zero() {
            return Err(DistributionError::NonZeroMean {
                mean: mean.to_string(),
            });
        }
        // A single atom with total mass and zero mean necessarily sits at 0,
        // so point masses other than at 0 are already rejected above.
        let values_f64 = atoms.iter().map(|(x, _)| rational_to_f64(x)).collect();
        let mut cum = 0.0;
        let cum_prob_f64 = atoms
            .iter()
            .map(|(_, p)| {
                cum += rational_to_f64(p);
                cum
            })
            .collect();
        let atoms = atoms
            .into_iter()
            .map(|(value, prob)| Atom { value, prob })
            .collect();
        Ok(Self {
            atoms,
            values_f64,
            cum_prob_f64,
        })
    }

    /// Convenience constructor from `(numerator, denominator)` pairs.
    pub fn from_ratios(atoms: &[((i64, i64), (i64, i64))]) -> Result<Self, DistributionError> {
        Self::new(
            atoms
                .iter()
                .map(|&((vn, vd), (pn, pd))| (big_ratio(vn, vd), big_ratio(pn, pd)))
                .collect(),
        )
    }

    /// The degenerate law concentrated at 0.
    pub fn point_mass_zero() -> Self {
        Self::from_ratios(&[((0, 1), (1, 1))]).expect("point mass at zero is valid")
    }

    /// The symmetric two-point law on {-1, +1}.
    pub fn rademacher() -> Self {
        Self::from_ratios(&[((1, 1), (1, 2)), ((-1, 1), (1, 2))]).expect("valid")
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn support_len(&self) -> usize {
        self.atoms.len()
    }

    /// Raw moment `E[x^k]`; equals the central moment since the mean is 0.
    pub fn moment(&self, k: u32) -> BigRational {
        self.atoms
            .iter()
            .map(|a| {
                let mut pow = BigRational::one();
                for _ in 0..k {
                    pow *= &a.value;
                }
                pow * &a.prob
            })
            .sum()
    }

    /// Inverse-CDF lookup: first atom whose cumulative probability exceeds
    /// `u01`, with atoms taken in listed order.
    pub fn sample_index(&self, u01: f64) -> usize {
        for (i, c) in self.cum_prob_f64.iter().enumerate() {
            if u01 < *c {
                return i;
            }
        }
        self.atoms.len() - 1
    }

    pub fn sample_f64(&self, u01: f64) -> f64 {
        self.values_f64[self.sample_index(u01)]
    }

    pub fn value_f64(&self, index: usize) -> f64 {
        self.values_f64[index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_zero_mean_laws() {
        let d = DiscreteDistribution::from_ratios(&[((2, 1), (1, 3)), ((-1, 1), (2, 3))]).unwrap();
        assert_eq!(d.support_len(), 2);
        assert_eq!(d.moment(1), big_ratio(0, 1));
        assert_eq!(d.moment(2), big_ratio(2, 1));
        assert_eq!(d.moment(3), big_ratio(2, 1));
        assert_eq!(d.moment(4), big_ratio(6, 1));
    }

    #[test]
    fn rejects_nonzero_mean() {
        let err = DiscreteDistribution::from_ratios(&[((1, 1), (1, 2)), ((-2, 1), (1, 2))])
            .unwrap_err();
        assert!(matches!(err, DistributionError::NonZeroMean { .. }));
    }

    #[test]
    fn rejects_bad_probability_mass() {
        let err = DiscreteDistribution::from_ratios(&[((1, 1), (1, 2)), ((-1, 1), (1, 3))])
            .unwrap_err();
        assert!(matches!(err, DistributionError::ProbabilitySumNotOne { .. }));
        let err =
            DiscreteDistribution::from_ratios(&[((1, 1), (3, 2)), ((-1, 1), (-1, 2))]).unwrap_err();
        assert!(matches!(
            err,
            DistributionError::NonPositiveProbability { .. }
        ));
    }

    #[test]
    fn single_atom_must_sit_at_zero() {
        assert!(DiscreteDistribution::from_ratios(&[((0, 1), (1, 1))]).is_ok());
        let err = DiscreteDistribution::from_ratios(&[((1, 1), (1, 1))]).unwrap_err();
        assert!(matches!(err, DistributionError::NonZeroMean { .. }));
    }

    #[test]
    fn inverse_cdf_walks_atoms_in_listed_order() {
        let d = DiscreteDistribution::from_ratios(&[((2, 1), (1, 4)), ((-2, 3), (3, 4))]).unwrap();
        assert_eq!(d.sample_index(0.0), 0);
        assert_eq!(d.sample_index(0.2499), 0);
        assert_eq!(d.sample_index(0.25), 1);
        assert_eq!(d.sample_index(0.999999), 1);
    }
}
