//! Moment kernel: expected powers of weighted sums of i.i.d. zero-mean
//! draws, exact central moments of finite laws, and the centered power sums
//! every estimator consumes.

use crate::dist::DiscreteDistribution;
use crate::error::EstimatorError;
use crate::numeric::{powi, CompensatedSum, Scalar};
use num_rational::BigRational;
use num_traits::Signed;

/// Weighted sum `S = sum_l w_l x_l` of i.i.d. zero-mean draws with the given
/// component central moments.
#[derive(Debug, Clone)]
pub struct WeightedSumSpec<R> {
    pub weights: Vec<R>,
    pub mu2: R,
    pub mu3: R,
    pub mu4: R,
}

impl<R: Scalar> WeightedSumSpec<R> {
    pub fn new(weights: Vec<R>, mu2: R, mu3: R, mu4: R) -> Self {
        assert!(!weights.is_empty(), "weight vector must be non-empty");
        assert!(
            weights.iter().all(|w| w.is_finite_value()),
            "weights must be finite"
        );
        Self {
            weights,
            mu2,
            mu3,
            mu4,
        }
    }
}

/// `E[S^k]` for `k` in {2, 3, 4}:
/// `mu2 * sum w^2`, `mu3 * sum w^3`, and
/// `mu4 * sum w^4 + 3 mu2^2 ((sum w^2)^2 - sum w^4)`.
pub fn expected_power<R: Scalar>(
    spec: &WeightedSumSpec<R>,
    k: u32,
) -> Result<R, EstimatorError> {
    let sum_pow = |p: u32| -> R {
        let mut acc = CompensatedSum::new();
        for w in &spec.weights {
            acc.add(powi(w, p));
        }
        acc.value()
    };
    match k {
        2 => Ok(spec.mu2.clone() * sum_pow(2)),
        3 => Ok(spec.mu3.clone() * sum_pow(3)),
        4 => {
            let s2 = sum_pow(2);
            let s4 = sum_pow(4);
            let three = R::from_usize(3);
            Ok(spec.mu4.clone() * s4.clone()
                + three * spec.mu2.clone() * spec.mu2.clone() * (s2.clone() * s2 - s4))
        }
        other => Err(EstimatorError::UnsupportedOrder(other)),
    }
}

/// Exact central moments of orders 2-4 of a zero-mean finite law.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueMoments {
    mu2: BigRational,
    mu3: BigRational,
    mu4: BigRational,
}

impl TrueMoments {
    pub fn mu2(&self) -> &BigRational {
        &self.mu2
    }

    pub fn mu3(&self) -> &BigRational {
        &self.mu3
    }

    pub fn mu4(&self) -> &BigRational {
        &self.mu4
    }

    pub fn mu2_as<R: Scalar>(&self) -> R {
        R::from_exact(&self.mu2)
    }

    pub fn mu3_as<R: Scalar>(&self) -> R {
        R::from_exact(&self.mu3)
    }

    pub fn mu4_as<R: Scalar>(&self) -> R {
        R::from_exact(&self.mu4)
    }

    /// `mu2^2`, the other unknown of a fourth-moment system.
    pub fn mu2_sq(&self) -> BigRational {
        &self.mu2 * &self.mu2
    }
}

/// Central moments of a finite zero-mean law, in exact rational arithmetic.
pub fn true_moments(dist: &DiscreteDistribution) -> TrueMoments {
    let mu2 = dist.moment(2);
    let mu3 = dist.moment(3);
    let mu4 = dist.moment(4);
    assert!(!mu2.is_negative(), "second moment must be non-negative");
    assert!(mu4 >= &mu2 * &mu2, "Cauchy-Schwarz: mu4 >= mu2^2");
    TrueMoments { mu2, mu3, mu4 }
}

/// Mean and centered power sums of one block of values.
///
/// `pair_sq` is the unordered-pair cross sum `sum_{j<j'} r_j^2 r_{j'}^2`,
/// computed through the identity `((sum r^2)^2 - sum r^4) / 2` rather than a
/// quadratic pair loop.
#[derive(Debug, Clone)]
pub struct CenteredPowerSums<R> {
    pub mean: R,
    pub sum_sq: R,
    pub sum_cube: R,
    pub sum_quartic: R,
    pub pair_sq: R,
}

/// Two-pass centered power sums with compensated accumulation.
pub fn centered_power_sums<R: Scalar>(values: &[R]) -> CenteredPowerSums<R> {
    assert!(!values.is_empty(), "values must be non-empty");
    let mut total = CompensatedSum::new();
    for v in values {
        total.add(v.clone());
    }
    let mean = total.value() / R::from_usize(values.len());

    let mut s2 = CompensatedSum::new();
    let mut s3 = CompensatedSum::new();
    let mut s4 = CompensatedSum::new();
    for v in values {
        let r = v.clone() - mean.clone();
        let r2 = r.clone() * r.clone();
        s2.add(r2.clone());
        s3.add(r2.clone() * r.clone());
        s4.add(r2.clone() * r2);
    }
    let sum_sq = s2.value();
    let sum_quartic = s4.value();
    let two = R::from_usize(2);
    let pair_sq = (sum_sq.clone() * sum_sq.clone() - sum_quartic.clone()) / two;
    CenteredPowerSums {
        mean,
        sum_sq,
        sum_cube: s3.value(),
        sum_quartic,
        pair_sq,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::big_ratio;
    use num_traits::{One, Zero};
    use proptest::prelude::*;

    fn rat(n: i64, d: i64) -> BigRational {
        big_ratio(n, d)
    }

    #[test]
    fn expected_fourth_power_two_equal_weights() {
        // w=(1,1), mu2=1, mu4=3: 3*2 + 3*1*(4-2) = 12.
        let spec = WeightedSumSpec::new(
            vec![rat(1, 1), rat(1, 1)],
            BigRational::one(),
            BigRational::zero(),
            rat(3, 1),
        );
        assert_eq!(expected_power(&spec, 4).unwrap(), rat(12, 1));
    }

    #[test]
    fn expected_cube_of_singleton_scales_weight_cubed() {
        let spec = WeightedSumSpec::new(vec![rat(5, 2)], rat(7, 3), rat(11, 5), rat(100, 1));
        assert_eq!(
            expected_power(&spec, 3).unwrap(),
            rat(11, 5) * rat(125, 8)
        );
    }

    #[test]
    fn expected_square_equal_thirds() {
        let spec = WeightedSumSpec::new(
            vec![rat(1, 3), rat(1, 3), rat(1, 3)],
            rat(2, 1),
            BigRational::zero(),
            rat(6, 1),
        );
        assert_eq!(expected_power(&spec, 2).unwrap(), rat(2, 3));
    }

    #[test]
    fn rejects_unsupported_order() {
        let spec = WeightedSumSpec::new(vec![rat(1, 1)], rat(1, 1), rat(0, 1), rat(1, 1));
        assert_eq!(
            expected_power(&spec, 5).unwrap_err(),
            EstimatorError::UnsupportedOrder(5)
        );
    }

    #[test]
    fn true_moments_of_two_point_laws() {
        let sym = DiscreteDistribution::rademacher();
        let m = true_moments(&sym);
        assert_eq!(m.mu2(), &rat(1, 1));
        assert_eq!(m.mu3(), &rat(0, 1));
        assert_eq!(m.mu4(), &rat(1, 1));

        let skewed =
            DiscreteDistribution::from_ratios(&[((2, 1), (1, 3)), ((-1, 1), (2, 3))]).unwrap();
        let m = true_moments(&skewed);
        assert_eq!(m.mu2(), &rat(2, 1));
        assert_eq!(m.mu3(), &rat(2, 1));
        assert_eq!(m.mu4(), &rat(6, 1));

        let point = DiscreteDistribution::point_mass_zero();
        let m = true_moments(&point);
        assert_eq!(m.mu2(), &rat(0, 1));
        assert_eq!(m.mu3(), &rat(0, 1));
        assert_eq!(m.mu4(), &rat(0, 1));
    }

    #[test]
    fn centered_sums_worked_example() {
        // (0, 0, 3): residuals (-1, -1, 2).
        let sums = centered_power_sums(&[rat(0, 1), rat(0, 1), rat(3, 1)]);
        assert_eq!(sums.mean, rat(1, 1));
        assert_eq!(sums.sum_sq, rat(6, 1));
        assert_eq!(sums.sum_cube, rat(6, 1));
        assert_eq!(sums.sum_quartic, rat(18, 1));
        assert_eq!(sums.pair_sq, rat(9, 1));
    }

    #[test]
    fn centered_sums_constant_and_symmetric() {
        let sums = centered_power_sums(&vec![rat(7, 1); 4]);
        assert!(sums.sum_sq.is_zero());
        assert!(sums.sum_cube.is_zero());
        assert!(sums.sum_quartic.is_zero());
        assert!(sums.pair_sq.is_zero());

        let sums = centered_power_sums(&[rat(-1, 1), rat(1, 1)]);
        assert_eq!(sums.mean, rat(0, 1));
        assert_eq!(sums.sum_sq, rat(2, 1));
        assert_eq!(sums.sum_cube, rat(0, 1));
        assert_eq!(sums.sum_quartic, rat(2, 1));
        assert_eq!(sums.pair_sq, rat(1, 1));
    }

    #[test]
    fn equal_weight_square_equals_mu2_over_m() {
        for m in 1..=9usize {
            let w = vec![big_ratio(1, m as i64); m];
            let spec = WeightedSumSpec::new(w, rat(5, 1), rat(0, 1), rat(50, 1));
            assert_eq!(expected_power(&spec, 2).unwrap(), big_ratio(5, m as i64));
        }
    }

    proptest! {
        #[test]
        fn centered_sums_shift_invariant_and_scale_equivariant(
            raw in proptest::collection::vec(-30i64..30, 2..9),
            shift in -20i64..20,
            scale in 1i64..8,
        ) {
            let xs: Vec<BigRational> = raw.iter().map(|&v| rat(v, 2)).collect();
            let shifted: Vec<BigRational> = xs.iter().map(|x| x + rat(shift, 1)).collect();
            let scaled: Vec<BigRational> = xs.iter().map(|x| x * rat(scale, 1)).collect();

            let base = centered_power_sums(&xs);
            let sh = centered_power_sums(&shifted);
            prop_assert_eq!(&base.sum_sq, &sh.sum_sq);
            prop_assert_eq!(&base.sum_cube, &sh.sum_cube);
            prop_assert_eq!(&base.sum_quartic, &sh.sum_quartic);
            prop_assert_eq!(&base.pair_sq, &sh.pair_sq);

            let sc = centered_power_sums(&scaled);
            let s = rat(scale, 1);
            prop_assert_eq!(sc.sum_sq, &base.sum_sq * &s * &s);
            prop_assert_eq!(sc.sum_cube, &base.sum_cube * &s * &s * &s);
            prop_assert_eq!(sc.sum_quartic, &base.sum_quartic * &s * &s * &s * &s);
        }

        #[test]
        fn pair_identity_matches_explicit_loop(
            raw in proptest::collection::vec(-20i64..20, 2..8),
        ) {
            let xs: Vec<BigRational> = raw.iter().map(|&v| rat(v, 3)).collect();
            let sums = centered_power_sums(&xs);
            let r2: Vec<BigRational> = xs
                .iter()
                .map(|x| {
                    let r = x - &sums.mean;
                    &r * &r
                })
                .collect();
            let mut explicit = BigRational::zero();
            for j in 0..r2.len() {
                for jp in (j + 1)..r2.len() {
                    explicit += &r2[j] * &r2[jp];
                }
            }
            prop_assert_eq!(sums.pair_sq, explicit);
        }
    }
}
