//! Datasets, design validation, and exact design summaries.
//!
//! Group sizes are held as exact integers and all reciprocal power sums as
//! exact rationals; they reach floating point only at the estimator
//! boundary. A summary is a pure function of the size profile, never of the
//! observed values.

use crate::error::ValidationError;
use crate::numeric::Scalar;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use std::sync::OnceLock;

/// Raw two-level observations `y_ij`, grouped.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelData<R> {
    groups: Vec<Vec<R>>,
}

impl<R: Scalar> TwoLevelData<R> {
    pub fn new(groups: Vec<Vec<R>>) -> Self {
        Self { groups }
    }

    pub fn groups(&self) -> &[Vec<R>] {
        &self.groups
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn map<S: Scalar>(&self, f: impl Fn(&R) -> S) -> TwoLevelData<S> {
        TwoLevelData::new(
            self.groups
                .iter()
                .map(|g| g.iter().map(&f).collect())
                .collect(),
        )
    }
}

/// Raw three-level observations `y_ijk`, grouped then subgrouped.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeLevelData<R> {
    groups: Vec<Vec<Vec<R>>>,
}

impl<R: Scalar> ThreeLevelData<R> {
    pub fn new(groups: Vec<Vec<Vec<R>>>) -> Self {
        Self { groups }
    }

    pub fn groups(&self) -> &[Vec<Vec<R>>] {
        &self.groups
    }

    pub fn sizes(&self) -> Vec<Vec<usize>> {
        self.groups
            .iter()
            .map(|g| g.iter().map(Vec::len).collect())
            .collect()
    }

    pub fn total(&self) -> usize {
        self.groups.iter().flatten().map(Vec::len).sum()
    }

    pub fn map<S: Scalar>(&self, f: impl Fn(&R) -> S) -> ThreeLevelData<S> {
        ThreeLevelData::new(
            self.groups
                .iter()
                .map(|g| g.iter().map(|s| s.iter().map(&f).collect()).collect())
                .collect(),
        )
    }
}

fn big(x: u128) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

fn recip_power_sum(sizes: &[usize], p: u32) -> BigRational {
    sizes
        .iter()
        .map(|&j| {
            let mut den: u128 = 1;
            for _ in 0..p {
                den *= j as u128;
            }
            BigRational::new(BigInt::from(1), BigInt::from(den))
        })
        .fold(BigRational::zero(), |a, b| a + b)
}

fn size_power_sum(sizes: &[usize], p: u32) -> u128 {
    sizes
        .iter()
        .map(|&j| {
            let mut v: u128 = 1;
            for _ in 0..p {
                v *= j as u128;
            }
            v
        })
        .sum()
}

/// Design constants of one grouping level: the size profile plus every power
/// sum the estimator formulas consume, all exact.
#[derive(Debug)]
pub struct DesignSummary {
    sizes: Vec<usize>,
    total: usize,
    recip: BigRational,
    recip2: BigRational,
    recip3: BigRational,
    sum_size2: u128,
    sum_size3: u128,
    sum_size4: u128,
    pub(crate) two_level: OnceLock<crate::twolevel::TwoLevelCoefficients>,
}

impl Clone for DesignSummary {
    fn clone(&self) -> Self {
        Self::from_sizes(&self.sizes)
    }
}

impl PartialEq for DesignSummary {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes
    }
}

impl DesignSummary {
    /// Build the summary for a size profile. This is deliberately not a
    /// validation gate; [`validate_two_level`] is.
    pub fn from_sizes(sizes: &[usize]) -> Self {
        assert!(
            sizes.iter().all(|&j| j >= 1),
            "group sizes must be positive"
        );
        Self {
            sizes: sizes.to_vec(),
            total: sizes.iter().sum(),
            recip: recip_power_sum(sizes, 1),
            recip2: recip_power_sum(sizes, 2),
            recip3: recip_power_sum(sizes, 3),
            sum_size2: size_power_sum(sizes, 2),
            sum_size3: size_power_sum(sizes, 3),
            sum_size4: size_power_sum(sizes, 4),
            two_level: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Total observation count `N = sum J_i`.
    pub fn total(&self) -> usize {
        self.total
    }

    /// `sum 1/J_i`
    pub fn recip_sum(&self) -> &BigRational {
        &self.recip
    }

    /// `sum 1/J_i^2`
    pub fn recip2_sum(&self) -> &BigRational {
        &self.recip2
    }

    /// `sum 1/J_i^3`
    pub fn recip3_sum(&self) -> &BigRational {
        &self.recip3
    }

    pub fn size_sum(&self) -> u128 {
        self.total as u128
    }

    pub fn size2_sum(&self) -> u128 {
        self.sum_size2
    }

    pub fn size3_sum(&self) -> u128 {
        self.sum_size3
    }

    pub fn size4_sum(&self) -> u128 {
        self.sum_size4
    }

    pub fn size2_sum_q(&self) -> BigRational {
        big(self.sum_size2)
    }

    pub fn size3_sum_q(&self) -> BigRational {
        big(self.sum_size3)
    }

    pub fn size4_sum_q(&self) -> BigRational {
        big(self.sum_size4)
    }
}

/// Nested design constants for a three-level profile.
#[derive(Debug)]
pub struct NestedDesignSummary {
    /// Per-group summaries over the subgroup sizes `K_ij` (so for group `i`,
    /// `inner[i].total()` is `K_i`).
    inner: Vec<DesignSummary>,
    /// Summary over the per-group totals `K_i`.
    outer_k: DesignSummary,
    /// Summary over the subgroup counts `J_i`.
    outer_j: DesignSummary,
    sum_kij2: u128,
    sum_kij3: u128,
    pub(crate) three_level: OnceLock<crate::threelevel::ThreeLevelCoefficients>,
}

impl Clone for NestedDesignSummary {
    fn clone(&self) -> Self {
        Self::from_sizes(&self.sizes())
    }
}

impl PartialEq for NestedDesignSummary {
    fn eq(&self, other: &Self) -> bool {
        self.sizes() == other.sizes()
    }
}

impl NestedDesignSummary {
    pub fn from_sizes(sizes: &[Vec<usize>]) -> Self {
        let inner: Vec<DesignSummary> = sizes.iter().map(|k| DesignSummary::from_sizes(k)).collect();
        let k_totals: Vec<usize> = inner.iter().map(|s| s.total()).collect();
        let j_counts: Vec<usize> = inner.iter().map(|s| s.n()).collect();
        let sum_kij2 = inner.iter().map(|s| s.size2_sum()).sum();
        let sum_kij3 = inner.iter().map(|s| s.size3_sum()).sum();
        Self {
            inner,
            outer_k: DesignSummary::from_sizes(&k_totals),
            outer_j: DesignSummary::from_sizes(&j_counts),
            sum_kij2,
            sum_kij3,
            three_level: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.inner.len()
    }

    pub fn sizes(&self) -> Vec<Vec<usize>> {
        self.inner.iter().map(|s| s.sizes().to_vec()).collect()
    }

    /// Per-group summaries over `K_ij`.
    pub fn groups(&self) -> &[DesignSummary] {
        &self.inner
    }

    /// Summary over the group totals `K_i`.
    pub fn outer_k(&self) -> &DesignSummary {
        &self.outer_k
    }

    /// Summary over the subgroup counts `J_i`.
    pub fn outer_j(&self) -> &DesignSummary {
        &self.outer_j
    }

    /// `N = sum_i K_i`
    pub fn total(&self) -> usize {
        self.outer_k.total()
    }

    /// Global `sum_{ij} K_ij^2`
    pub fn kij2_sum(&self) -> u128 {
        self.sum_kij2
    }

    /// Global `sum_{ij} K_ij^3`
    pub fn kij3_sum(&self) -> u128 {
        self.sum_kij3
    }
}

/// Validate a two-level size profile against the model assumptions
/// (`n >= 3`, every `J_i >= 3`).
pub fn validate_two_level_sizes(sizes: &[usize]) -> Result<(), ValidationError> {
    if sizes.len() < 3 {
        return Err(ValidationError::TooFewGroups { n: sizes.len() });
    }
    for (index, &size) in sizes.iter().enumerate() {
        if size < 3 {
            return Err(ValidationError::GroupTooSmall { index, size });
        }
    }
    Ok(())
}

/// Validate a three-level size profile (`n >= 3`, `J_i >= 3`, `K_ij >= 3`).
pub fn validate_three_level_sizes(sizes: &[Vec<usize>]) -> Result<(), ValidationError> {
    if sizes.len() < 3 {
        return Err(ValidationError::TooFewGroups { n: sizes.len() });
    }
    for (group, subgroups) in sizes.iter().enumerate() {
        if subgroups.len() < 3 {
            return Err(ValidationError::SubgroupCountTooSmall {
                group,
                count: subgroups.len(),
            });
        }
        for (subgroup, &size) in subgroups.iter().enumerate() {
            if size < 3 {
                return Err(ValidationError::SubgroupTooSmall {
                    group,
                    subgroup,
                    size,
                });
            }
        }
    }
    Ok(())
}

/// Validation gate for two-level data: size assumptions plus finiteness of
/// every observation. On success the returned summary carries every design
/// constant downstream estimators need.
pub fn validate_two_level<R: Scalar>(
    data: &TwoLevelData<R>,
) -> Result<DesignSummary, ValidationError> {
    let sizes = data.sizes();
    validate_two_level_sizes(&sizes)?;
    for (group, values) in data.groups().iter().enumerate() {
        for (index, v) in values.iter().enumerate() {
            if !v.is_finite_value() {
                return Err(ValidationError::NonFiniteValue {
                    group,
                    subgroup: None,
                    index,
                });
            }
        }
    }
    Ok(DesignSummary::from_sizes(&sizes))
}

/// Validation gate for three-level data.
pub fn validate_three_level<R: Scalar>(
    data: &ThreeLevelData<R>,
) -> Result<NestedDesignSummary, ValidationError> {
    let sizes = data.sizes();
    validate_three_level_sizes(&sizes)?;
    for (group, subgroups) in data.groups().iter().enumerate() {
        for (subgroup, values) in subgroups.iter().enumerate() {
            for (index, v) in values.iter().enumerate() {
                if !v.is_finite_value() {
                    return Err(ValidationError::NonFiniteValue {
                        group,
                        subgroup: Some(subgroup),
                        index,
                    });
                }
            }
        }
    }
    Ok(NestedDesignSummary::from_sizes(&sizes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::big_ratio;
    use proptest::prelude::*;

    fn data_of_sizes(sizes: &[usize]) -> TwoLevelData<f64> {
        TwoLevelData::new(sizes.iter().map(|&j| vec![0.0; j]).collect())
    }

    #[test]
    fn summary_334() {
        let s = validate_two_level(&data_of_sizes(&[3, 3, 4])).unwrap();
        assert_eq!(s.n(), 3);
        assert_eq!(s.total(), 10);
        assert_eq!(s.recip_sum(), &big_ratio(11, 12));
    }

    #[test]
    fn summary_4567() {
        let s = validate_two_level(&data_of_sizes(&[4, 5, 6, 7])).unwrap();
        assert_eq!(s.n(), 4);
        assert_eq!(s.total(), 22);
        assert_eq!(s.size2_sum(), 126);
    }

    #[test]
    fn rejects_small_group_with_index() {
        let err = validate_two_level(&data_of_sizes(&[3, 2, 4])).unwrap_err();
        assert_eq!(err, ValidationError::GroupTooSmall { index: 1, size: 2 });
    }

    #[test]
    fn rejects_too_few_groups_and_empty_input() {
        let err = validate_two_level(&data_of_sizes(&[4, 4])).unwrap_err();
        assert_eq!(err, ValidationError::TooFewGroups { n: 2 });
        let err = validate_two_level(&data_of_sizes(&[])).unwrap_err();
        assert_eq!(err, ValidationError::TooFewGroups { n: 0 });
    }

    #[test]
    fn rejects_non_finite_values_with_position() {
        let mut groups = vec![vec![0.0; 3], vec![0.0; 3], vec![0.0; 4]];
        groups[2][1] = f64::NAN;
        let err = validate_two_level(&TwoLevelData::new(groups)).unwrap_err();
        assert_eq!(
            err,
            ValidationError::NonFiniteValue {
                group: 2,
                subgroup: None,
                index: 1
            }
        );
    }

    fn nested_of_sizes(sizes: &[Vec<usize>]) -> ThreeLevelData<f64> {
        ThreeLevelData::new(
            sizes
                .iter()
                .map(|g| g.iter().map(|&k| vec![0.0; k]).collect())
                .collect(),
        )
    }

    #[test]
    fn nested_summary_balanced() {
        let sizes = vec![vec![3, 3, 3]; 3];
        let s = validate_three_level(&nested_of_sizes(&sizes)).unwrap();
        assert_eq!(s.n(), 3);
        assert_eq!(s.outer_j().sizes(), &[3, 3, 3]);
        assert_eq!(s.outer_k().sizes(), &[9, 9, 9]);
        assert_eq!(s.total(), 27);
    }

    #[test]
    fn nested_summary_unbalanced_power_sums() {
        let sizes = vec![vec![3, 4, 5], vec![3, 3, 3], vec![4, 4, 4]];
        let s = validate_three_level(&nested_of_sizes(&sizes)).unwrap();
        assert_eq!(s.outer_k().sizes(), &[12, 9, 12]);
        assert_eq!(s.total(), 33);
        assert_eq!(s.kij2_sum(), 125);
        assert_eq!(s.kij3_sum(), 489);
    }

    #[test]
    fn nested_rejects_short_subgroup_list() {
        let sizes = vec![vec![3, 3], vec![3, 3, 3], vec![3, 3, 3]];
        let err = validate_three_level(&nested_of_sizes(&sizes)).unwrap_err();
        assert_eq!(
            err,
            ValidationError::SubgroupCountTooSmall { group: 0, count: 2 }
        );
    }

    #[test]
    fn nested_rejects_small_subgroup() {
        let sizes = vec![vec![3, 3, 3], vec![3, 2, 3], vec![3, 3, 3]];
        let err = validate_three_level(&nested_of_sizes(&sizes)).unwrap_err();
        assert_eq!(
            err,
            ValidationError::SubgroupTooSmall {
                group: 1,
                subgroup: 1,
                size: 2
            }
        );
    }

    proptest! {
        /// Validation is total and summaries are pure functions of sizes:
        /// observation values never leak into a summary.
        #[test]
        fn summaries_ignore_values(
            sizes in proptest::collection::vec(3usize..7, 3..6),
            fill in -1000i64..1000,
        ) {
            let zeros = data_of_sizes(&sizes);
            let filled = TwoLevelData::new(
                sizes.iter().map(|&j| vec![fill as f64; j]).collect(),
            );
            let a = validate_two_level(&zeros).unwrap();
            let b = validate_two_level(&filled).unwrap();
            prop_assert_eq!(a.recip_sum(), b.recip_sum());
            prop_assert_eq!(a.size4_sum(), b.size4_sum());
        }

        /// Power sums are exact and bit-identical on recomputation.
        #[test]
        fn power_sums_recompute_identically(
            sizes in proptest::collection::vec(3usize..40, 3..8),
        ) {
            let a = DesignSummary::from_sizes(&sizes);
            let b = DesignSummary::from_sizes(&sizes);
            prop_assert_eq!(a.recip_sum(), b.recip_sum());
            prop_assert_eq!(a.recip2_sum(), b.recip2_sum());
            prop_assert_eq!(a.recip3_sum(), b.recip3_sum());
            prop_assert_eq!(a.size2_sum(), b.size2_sum());
            prop_assert_eq!(a.size3_sum(), b.size3_sum());
            prop_assert_eq!(a.size4_sum(), b.size4_sum());
            // and they agree with a direct rational recomputation
            let direct: BigRational = sizes
                .iter()
                .map(|&j| big_ratio(1, (j * j) as i64))
                .fold(BigRational::zero(), |x, y| x + y);
            prop_assert_eq!(a.recip2_sum(), &direct);
        }
    }
}
