//! Exact expectations by exhaustive enumeration.
//!
//! The engine walks every joint outcome of a list of i.i.d. variable blocks
//! with a mixed-radix odometer, keeping prefix probability products so each
//! step costs O(1) amortized arithmetic on top of the statistic itself. The
//! outcome space is split into contiguous blocks that may be evaluated in
//! parallel and are always reduced in block order, so results are identical
//! across execution modes. Enumerated probabilities are asserted to sum to
//! exactly 1 in rational mode.
//!
//! Statistics are vector-valued: one walk can carry a whole family of
//! estimators, which keeps multi-check suites inside their runtime budgets.

use super::OracleError;
use crate::design::{ThreeLevelData, TwoLevelData};
use crate::dist::DiscreteDistribution;
use crate::error::EstimatorError;
use crate::exec::{map_indexed, ExecMode};
use crate::numeric::Scalar;

/// Hard ceiling on evaluated outcomes; beyond it the oracle refuses rather
/// than silently sampling.
pub const ENUMERATION_BUDGET: u128 = 20_000_000;

const BLOCK: u128 = 8192;

/// `count` i.i.d. draws from `dist`.
#[derive(Clone, Copy)]
pub struct VarBlock<'a> {
    pub count: usize,
    pub dist: &'a DiscreteDistribution,
}

/// Number of joint outcomes, if it fits in u128.
pub fn enumeration_outcomes(vars: &[VarBlock]) -> Option<u128> {
    let mut total: u128 = 1;
    for b in vars {
        for _ in 0..b.count {
            total = total.checked_mul(b.dist.support_len() as u128)?;
        }
    }
    Some(total)
}

struct Odometer<'t, R> {
    radices: &'t [usize],
    values: &'t [&'t Vec<R>],
    probs: &'t [&'t Vec<R>],
    digits: Vec<usize>,
    draws: Vec<R>,
    /// prefix[k] = product of the first k digit probabilities.
    prefix: Vec<R>,
}

impl<'t, R: Scalar> Odometer<'t, R> {
    fn seek(&mut self, index: u128, strides: &[u128]) {
        let v = self.radices.len();
        for k in 0..v {
            self.digits[k] = ((index / strides[k]) % self.radices[k] as u128) as usize;
        }
        self.refresh_from(0);
    }

    fn refresh_from(&mut self, from: usize) {
        let v = self.radices.len();
        for k in from..v {
            self.draws[k] = self.values[k][self.digits[k]].clone();
            self.prefix[k + 1] = self.prefix[k].clone() * self.probs[k][self.digits[k]].clone();
        }
    }

    fn probability(&self) -> &R {
        &self.prefix[self.radices.len()]
    }

    /// Advance to the next outcome; the last position spins fastest.
    fn step(&mut self) {
        let mut k = self.radices.len();
        loop {
            debug_assert!(k > 0, "stepped past the last outcome");
            k -= 1;
            if self.digits[k] + 1 < self.radices[k] {
                self.digits[k] += 1;
                break;
            }
            self.digits[k] = 0;
        }
        self.refresh_from(k);
    }
}

/// Exact expectations `E[stat(draws)]` of an `arity`-vector statistic over
/// all joint outcomes of the variable blocks; `draws` is the flattened draw
/// vector in block order. The rational instantiation is exact; the float
/// instantiation runs the identical walk in f64 and exists to audit the
/// production arithmetic.
pub fn enumerate_expectation_vec<R, F>(
    vars: &[VarBlock],
    mode: ExecMode,
    arity: usize,
    stat: F,
) -> Result<Vec<R>, OracleError>
where
    R: Scalar,
    F: Fn(&[R]) -> Result<Vec<R>, EstimatorError> + Sync,
{
    let variables: usize = vars.iter().map(|b| b.count).sum();
    let total = enumeration_outcomes(vars).unwrap_or(u128::MAX);
    if total > ENUMERATION_BUDGET {
        return Err(OracleError::EnumerationTooLarge {
            variables,
            outcomes: total,
            budget: ENUMERATION_BUDGET,
        });
    }

    // Per-block atom tables in the target scalar type.
    let block_values: Vec<Vec<R>> = vars
        .iter()
        .map(|b| b.dist.atoms().iter().map(|a| R::from_exact(&a.value)).collect())
        .collect();
    let block_probs: Vec<Vec<R>> = vars
        .iter()
        .map(|b| b.dist.atoms().iter().map(|a| R::from_exact(&a.prob)).collect())
        .collect();
    let mut radices = Vec::with_capacity(variables);
    let mut values: Vec<&Vec<R>> = Vec::with_capacity(variables);
    let mut probs: Vec<&Vec<R>> = Vec::with_capacity(variables);
    for (b, var) in vars.iter().enumerate() {
        for _ in 0..var.count {
            radices.push(var.dist.support_len());
            values.push(&block_values[b]);
            probs.push(&block_probs[b]);
        }
    }
    let mut strides = vec![1u128; variables];
    for k in (0..variables.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * radices[k + 1] as u128;
    }

    let nblocks = total.div_ceil(BLOCK) as usize;
    let partials: Vec<Result<(R, Vec<R>), EstimatorError>> = map_indexed(nblocks, mode, |bi| {
        let start = bi as u128 * BLOCK;
        let end = (start + BLOCK).min(total);
        let mut odo = Odometer {
            radices: &radices,
            values: &values,
            probs: &probs,
            digits: vec![0; variables],
            draws: vec![R::zero(); variables],
            prefix: vec![R::one(); variables + 1],
        };
        odo.seek(start, &strides);
        let mut prob_sum = R::zero();
        let mut weighted = vec![R::zero(); arity];
        let mut idx = start;
        loop {
            let value = stat(&odo.draws)?;
            debug_assert_eq!(value.len(), arity, "statistic arity mismatch");
            let p = odo.probability();
            prob_sum = prob_sum + p.clone();
            for (acc, v) in weighted.iter_mut().zip(value) {
                *acc = acc.clone() + p.clone() * v;
            }
            idx += 1;
            if idx >= end {
                break;
            }
            odo.step();
        }
        Ok((prob_sum, weighted))
    });

    let mut prob_total = R::zero();
    let mut expectation = vec![R::zero(); arity];
    for partial in partials {
        let (p, w) = partial?;
        prob_total = prob_total + p;
        for (acc, v) in expectation.iter_mut().zip(w) {
            *acc = acc.clone() + v;
        }
    }
    if R::is_exact() {
        assert!(
            prob_total == R::one(),
            "enumerated probabilities must sum to exactly 1, got {prob_total}"
        );
    } else {
        let drift = (prob_total - R::one()).abs();
        assert!(
            drift <= R::from_exact(&crate::numeric::big_ratio(1, 1_000_000_000)),
            "enumerated probability mass drifted"
        );
    }
    Ok(expectation)
}

/// Scalar-statistic convenience wrapper over [`enumerate_expectation_vec`].
pub fn enumerate_expectation<R, F>(
    vars: &[VarBlock],
    mode: ExecMode,
    stat: F,
) -> Result<R, OracleError>
where
    R: Scalar,
    F: Fn(&[R]) -> Result<R, EstimatorError> + Sync,
{
    let out = enumerate_expectation_vec(vars, mode, 1, |draws| stat(draws).map(|v| vec![v]))?;
    Ok(out.into_iter().next().expect("arity 1"))
}

fn two_level_vars<'a>(
    sizes: &[usize],
    u_dist: &'a DiscreteDistribution,
    v_dist: &'a DiscreteDistribution,
) -> [VarBlock<'a>; 2] {
    [
        VarBlock {
            count: sizes.len(),
            dist: u_dist,
        },
        VarBlock {
            count: sizes.iter().sum(),
            dist: v_dist,
        },
    ]
}

fn assemble_two_level<R: Scalar>(sizes: &[usize], draws: &[R]) -> TwoLevelData<R> {
    let n = sizes.len();
    let mut groups = Vec::with_capacity(n);
    let mut pos = n;
    for (i, &j) in sizes.iter().enumerate() {
        let mut g = Vec::with_capacity(j);
        for _ in 0..j {
            g.push(draws[i].clone() + draws[pos].clone());
            pos += 1;
        }
        groups.push(g);
    }
    TwoLevelData::new(groups)
}

/// Expectations of a vector statistic of a two-level dataset: draws are the
/// `n` group draws followed by the `N` unit draws in group order, combined
/// as `y_ij = u_i + v_ij`.
pub fn enumerate_two_level_vec<R, F>(
    sizes: &[usize],
    u_dist: &DiscreteDistribution,
    v_dist: &DiscreteDistribution,
    mode: ExecMode,
    arity: usize,
    stat: F,
) -> Result<Vec<R>, OracleError>
where
    R: Scalar,
    F: Fn(&TwoLevelData<R>) -> Result<Vec<R>, EstimatorError> + Sync,
{
    let vars = two_level_vars(sizes, u_dist, v_dist);
    let sizes = sizes.to_vec();
    enumerate_expectation_vec(&vars, mode, arity, move |draws: &[R]| {
        stat(&assemble_two_level(&sizes, draws))
    })
}

/// Scalar-statistic wrapper over [`enumerate_two_level_vec`].
pub fn enumerate_two_level<R, F>(
    sizes: &[usize],
    u_dist: &DiscreteDistribution,
    v_dist: &DiscreteDistribution,
    mode: ExecMode,
    stat: F,
) -> Result<R, OracleError>
where
    R: Scalar,
    F: Fn(&TwoLevelData<R>) -> Result<R, EstimatorError> + Sync,
{
    let out = enumerate_two_level_vec(sizes, u_dist, v_dist, mode, 1, |data| {
        stat(data).map(|v| vec![v])
    })?;
    Ok(out.into_iter().next().expect("arity 1"))
}

/// Expectation of a three-level dataset statistic over the full joint law.
/// Only feasible for very small designs; draws are ordered `u`, then `v` in
/// group order, then `w` in subgroup order.
pub fn enumerate_three_level<R, F>(
    sizes: &[Vec<usize>],
    u_dist: &DiscreteDistribution,
    v_dist: &DiscreteDistribution,
    w_dist: &DiscreteDistribution,
    mode: ExecMode,
    stat: F,
) -> Result<R, OracleError>
where
    R: Scalar,
    F: Fn(&ThreeLevelData<R>) -> Result<R, EstimatorError> + Sync,
{
    let n = sizes.len();
    let subgroups: usize = sizes.iter().map(Vec::len).sum();
    let total: usize = sizes.iter().flatten().sum();
    let vars = [
        VarBlock {
            count: n,
            dist: u_dist,
        },
        VarBlock {
            count: subgroups,
            dist: v_dist,
        },
        VarBlock {
            count: total,
            dist: w_dist,
        },
    ];
    let sizes = sizes.to_vec();
    enumerate_expectation(&vars, mode, move |draws: &[R]| {
        let mut groups = Vec::with_capacity(n);
        let mut vpos = n;
        let mut wpos = n + subgroups;
        for (i, ks) in sizes.iter().enumerate() {
            let mut g = Vec::with_capacity(ks.len());
            for &k in ks {
                let mut sg = Vec::with_capacity(k);
                for _ in 0..k {
                    sg.push(draws[i].clone() + draws[vpos].clone() + draws[wpos].clone());
                    wpos += 1;
                }
                vpos += 1;
                g.push(sg);
            }
            groups.push(g);
        }
        stat(&ThreeLevelData::new(groups))
    })
}

/// Expectations of a vector statistic of one group of a three-level design,
/// over that group's `v` and `w` draws only. The statistic receives the
/// group's subgroup values `v_j + w_jk`; callers must only use this for
/// statistics invariant to the group's own `u` draw (location-invariant in
/// the group values), which a shift probe can certify.
pub fn enumerate_group_local<R, F>(
    subgroup_sizes: &[usize],
    v_dist: &DiscreteDistribution,
    w_dist: &DiscreteDistribution,
    mode: ExecMode,
    arity: usize,
    stat: F,
) -> Result<Vec<R>, OracleError>
where
    R: Scalar,
    F: Fn(&[Vec<R>]) -> Result<Vec<R>, EstimatorError> + Sync,
{
    let j = subgroup_sizes.len();
    let total: usize = subgroup_sizes.iter().sum();
    let vars = [
        VarBlock {
            count: j,
            dist: v_dist,
        },
        VarBlock {
            count: total,
            dist: w_dist,
        },
    ];
    let sizes = subgroup_sizes.to_vec();
    enumerate_expectation_vec(&vars, mode, arity, move |draws: &[R]| {
        let mut subgroups = Vec::with_capacity(j);
        let mut pos = j;
        for (jj, &k) in sizes.iter().enumerate() {
            let mut sg = Vec::with_capacity(k);
            for _ in 0..k {
                sg.push(draws[jj].clone() + draws[pos].clone());
                pos += 1;
            }
            subgroups.push(sg);
        }
        stat(&subgroups)
    })
}

/// Expectation of a statistic of a single subgroup over its `w` draws only;
/// same locality caveat as [`enumerate_group_local`].
pub fn enumerate_subgroup_local<R, F>(
    size: usize,
    w_dist: &DiscreteDistribution,
    mode: ExecMode,
    stat: F,
) -> Result<R, OracleError>
where
    R: Scalar,
    F: Fn(&[R]) -> Result<R, EstimatorError> + Sync,
{
    let vars = [VarBlock {
        count: size,
        dist: w_dist,
    }];
    enumerate_expectation(&vars, mode, move |draws: &[R]| stat(draws))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{expected_power, WeightedSumSpec};
    use crate::numeric::{big_ratio, CompensatedSum};
    use num_rational::BigRational;
    use num_traits::{One, Zero};

    fn skewed() -> DiscreteDistribution {
        DiscreteDistribution::from_ratios(&[((2, 1), (1, 3)), ((-1, 1), (2, 3))]).unwrap()
    }

    #[test]
    fn constant_statistic_has_unit_expectation() {
        let d = skewed();
        let vars = [VarBlock { count: 5, dist: &d }];
        let got: BigRational =
            enumerate_expectation(&vars, ExecMode::Sequential, |_| Ok(BigRational::one()))
                .unwrap();
        assert_eq!(got, BigRational::one());
    }

    #[test]
    fn budget_is_enforced_with_details() {
        let d = skewed();
        let vars = [VarBlock {
            count: 40,
            dist: &d,
        }];
        match enumerate_expectation::<BigRational, _>(&vars, ExecMode::Sequential, |_| {
            Ok(BigRational::one())
        }) {
            Err(OracleError::EnumerationTooLarge {
                variables, budget, ..
            }) => {
                assert_eq!(variables, 40);
                assert_eq!(budget, ENUMERATION_BUDGET);
            }
            other => panic!("expected budget refusal, got {other:?}"),
        }
    }

    #[test]
    fn matches_expected_power_on_weighted_sums() {
        let d = skewed();
        let weights = [big_ratio(1, 2), big_ratio(-1, 3), big_ratio(5, 4)];
        let vars = [VarBlock {
            count: weights.len(),
            dist: &d,
        }];
        let w = weights.to_vec();
        let got: Vec<BigRational> =
            enumerate_expectation_vec(&vars, ExecMode::Sequential, 3, |draws| {
                let mut s = BigRational::zero();
                for (wl, x) in w.iter().zip(draws) {
                    s += wl * x;
                }
                Ok(vec![&s * &s, &s * &s * &s, &s * &s * &s * &s])
            })
            .unwrap();
        let spec = WeightedSumSpec::new(weights.to_vec(), d.moment(2), d.moment(3), d.moment(4));
        for (k, value) in (2..=4u32).zip(&got) {
            assert_eq!(value, &expected_power(&spec, k).unwrap(), "order {k}");
        }
    }

    #[test]
    fn parallel_and_sequential_agree_exactly() {
        let d = skewed();
        let stat = |data: &TwoLevelData<BigRational>| {
            let s = crate::kernel::centered_power_sums(&data.groups()[0]);
            Ok(s.sum_sq)
        };
        let seq: BigRational = enumerate_two_level(
            &[3, 3, 3],
            &DiscreteDistribution::rademacher(),
            &d,
            ExecMode::Sequential,
            stat,
        )
        .unwrap();
        let par: BigRational = enumerate_two_level(
            &[3, 3, 3],
            &DiscreteDistribution::rademacher(),
            &d,
            ExecMode::default(),
            stat,
        )
        .unwrap();
        assert_eq!(seq, par);
        // E[sum_j (y_1j - ybar_1)^2] = mu2v (J-1) = 2 * 2
        assert_eq!(seq, big_ratio(4, 1));
    }

    #[test]
    fn float_walk_tracks_exact_walk() {
        let d = skewed();
        let u = DiscreteDistribution::rademacher();
        let exact: BigRational = enumerate_two_level(
            &[3, 3, 3],
            &u,
            &d,
            ExecMode::Sequential,
            |data: &TwoLevelData<BigRational>| {
                let mut acc = CompensatedSum::new();
                for g in data.groups() {
                    for y in g {
                        acc.add(y.clone() * y.clone());
                    }
                }
                Ok(acc.value())
            },
        )
        .unwrap();
        let float: f64 = enumerate_two_level(
            &[3, 3, 3],
            &u,
            &d,
            ExecMode::Sequential,
            |data: &TwoLevelData<f64>| {
                let mut acc = CompensatedSum::new();
                for g in data.groups() {
                    for y in g {
                        acc.add(y * y);
                    }
                }
                Ok(acc.value())
            },
        )
        .unwrap();
        let exact_f = crate::numeric::rational_to_f64(&exact);
        assert!((float - exact_f).abs() <= 1e-12 * exact_f.abs());
    }
}
