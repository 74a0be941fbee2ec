//! Estimators for the unbalanced three-level model
//! `y_ijk = u_i + v_ij + w_ijk`.
//!
//! Estimation proceeds bottom-up: within-subgroup residuals identify the
//! moments of `w`; subgroup means centered within each group identify the
//! moments of `v` after subtracting the `w` contamination; group averages
//! centered on a grand mean identify the moments of `u` after subtracting
//! both lower-level contaminations. Each between step exists under both
//! grand-mean conventions, and plug-ins are scheme-matched (obs `u`
//! estimates consume obs `v` estimates). Fourth moments are not defined at
//! three levels.

use crate::design::{NestedDesignSummary, ThreeLevelData};
use crate::exec::{map_indexed, ExecMode};
use crate::kernel::centered_power_sums;
use crate::numeric::{CompensatedSum, DualConstant, Scalar};
use crate::twolevel::Scheme;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// Innermost-component estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct WithinSubgroupEstimates<R> {
    pub mu2w: R,
    pub mu3w: R,
}

/// Middle-component estimates under one averaging scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupLevelEstimates<R> {
    pub scheme: Scheme,
    pub mu2v: R,
    pub mu3v: R,
}

/// Outer-component estimates under one averaging scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLevelEstimates3L<R> {
    pub scheme: Scheme,
    pub mu2u: R,
    pub mu3u: R,
}

/// Full three-level estimate bundle in the fixed w -> v -> u order.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeLevelEstimates<R> {
    pub w: WithinSubgroupEstimates<R>,
    pub v_grp: SubgroupLevelEstimates<R>,
    pub v_obs: SubgroupLevelEstimates<R>,
    pub u_grp: GroupLevelEstimates3L<R>,
    pub u_obs: GroupLevelEstimates3L<R>,
}

fn q(n: i128, d: i128) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn qi(n: i128) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

#[derive(Debug, Clone)]
pub(crate) struct ThreeLevelCoefficients {
    // w level
    pub(crate) dw2: DualConstant,
    pub(crate) dw3: DualConstant,
    // v level, group averages
    pub(crate) dv2g: DualConstant,
    pub(crate) dv3g: DualConstant,
    pub(crate) cv2g: DualConstant,
    pub(crate) cv3g: DualConstant,
    // v level, observation averages
    pub(crate) dv2o: DualConstant,
    pub(crate) dv3o: DualConstant,
    pub(crate) cv2o: DualConstant,
    pub(crate) cv3o: DualConstant,
    // u level, group averages
    pub(crate) inv_nm1: DualConstant,
    pub(crate) mu3_lead: DualConstant,
    pub(crate) s1j_over_n: DualConstant,
    pub(crate) s2j_over_n: DualConstant,
    pub(crate) cu2g_w_over_n: DualConstant,
    pub(crate) cu3g_w_over_n: DualConstant,
    // u level, observation averages
    pub(crate) du2o: DualConstant,
    pub(crate) du3o: DualConstant,
    pub(crate) cu2o_v: DualConstant,
    pub(crate) cu3o_v: DualConstant,
    pub(crate) cu2o_w: DualConstant,
    pub(crate) cu3o_w: DualConstant,
}

impl ThreeLevelCoefficients {
    fn new(s: &NestedDesignSummary) -> Self {
        let n = s.n() as i128;
        let n_total = s.total() as i128;

        let mut dw2 = BigRational::zero();
        let mut dw3 = BigRational::zero();
        let mut dv2g = BigRational::zero();
        let mut dv3g = BigRational::zero();
        let mut cv2g = BigRational::zero();
        let mut cv3g = BigRational::zero();
        let mut dv2o = BigRational::zero();
        let mut dv3o = BigRational::zero();
        let mut cv2o = BigRational::zero();
        let mut cv3o = BigRational::zero();
        let mut cu2g_w = BigRational::zero();
        let mut cu3g_w = BigRational::zero();
        let mut cu2o_v = BigRational::zero();
        let mut cu3o_v = BigRational::zero();
        let mut cu3o_w = BigRational::zero();
        let mut du2o = BigRational::zero();
        let mut du3o = BigRational::zero();

        let ski2 = s.outer_k().size2_sum() as i128;
        let ski3 = s.outer_k().size3_sum() as i128;
        let sk2_glob = s.kij2_sum() as i128;
        let sk3_glob = s.kij3_sum() as i128;

        for inner in s.groups() {
            let ji = inner.n() as i128;
            let ki = inner.total() as i128;
            let sk2_own = inner.size2_sum() as i128;
            let sk3_own = inner.size3_sum() as i128;

            for &kij in inner.sizes() {
                let k = kij as i128;
                dw2 += qi(k - 1);
                dw3 += q((k - 1) * (k - 2), k);
                dv2o += BigRational::one() - q(2 * k, ki) + q(sk2_own, ki * ki);
                dv3o += BigRational::one() - q(3 * k, ki) + q(3 * k * k, ki * ki)
                    - q(sk3_own, ki * ki * ki);
                cv3o += q((ki - k) * (ki - 2 * k), ki * ki * k * k);
            }
            dv2g += qi(ji - 1);
            dv3g += q((ji - 1) * (ji - 2), ji);
            cv2g += q(ji - 1, ji) * inner.recip_sum();
            cv3g += q((ji - 1) * (ji - 2), ji * ji) * inner.recip2_sum();
            cv2o += inner.recip_sum() - q(ji, ki);

            cu2g_w += q(1, ji * ji) * inner.recip_sum();
            cu3g_w += q(1, ji * ji * ji) * inner.recip2_sum();

            // (1 - K_i/N)^2 (sum_j K_ij^2)/K_i^2 + (out-of-group K^2 sum)/N^2,
            // with the out-of-group sum taken as global minus own.
            cu2o_v += q((n_total - ki) * (n_total - ki) * sk2_own, ki * ki * n_total * n_total)
                + q(sk2_glob - sk2_own, n_total * n_total);
            cu3o_v += q(
                (n_total - ki) * (n_total - ki) * (n_total - ki) * sk3_own,
                ki * ki * ki * n_total * n_total * n_total,
            ) - q(sk3_glob - sk3_own, n_total * n_total * n_total);
            cu3o_w += q(
                (n_total - ki) * (n_total - 2 * ki),
                n_total * n_total * ki * ki,
            );

            du2o += BigRational::one() - q(2 * ki, n_total) + q(ski2, n_total * n_total);
            du3o += BigRational::one() - q(3 * ki, n_total) + q(3 * ki * ki, n_total * n_total)
                - q(ski3, n_total * n_total * n_total);
        }
        let cu2o_w = s.outer_k().recip_sum() - q(n, n_total);

        Self {
            dw2: dw2.into(),
            dw3: dw3.into(),
            dv2g: dv2g.into(),
            dv3g: dv3g.into(),
            cv2g: cv2g.into(),
            cv3g: cv3g.into(),
            dv2o: dv2o.into(),
            dv3o: dv3o.into(),
            cv2o: cv2o.into(),
            cv3o: cv3o.into(),
            inv_nm1: q(1, n - 1).into(),
            mu3_lead: q(n, (n - 1) * (n - 2)).into(),
            s1j_over_n: (s.outer_j().recip_sum() / qi(n)).into(),
            s2j_over_n: (s.outer_j().recip2_sum() / qi(n)).into(),
            cu2g_w_over_n: (cu2g_w / qi(n)).into(),
            cu3g_w_over_n: (cu3g_w / qi(n)).into(),
            du2o: du2o.into(),
            du3o: du3o.into(),
            cu2o_v: cu2o_v.into(),
            cu3o_v: cu3o_v.into(),
            cu2o_w: cu2o_w.into(),
            cu3o_w: cu3o_w.into(),
        }
    }
}

pub(crate) fn coefficients(s: &NestedDesignSummary) -> &ThreeLevelCoefficients {
    s.three_level.get_or_init(|| ThreeLevelCoefficients::new(s))
}

fn mean_of<R: Scalar>(values: &[R]) -> R {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v.clone());
    }
    acc.value() / R::from_usize(values.len())
}

/// Subgroup means `ybar_ij`, per group.
fn subgroup_means<R: Scalar>(data: &ThreeLevelData<R>, mode: ExecMode) -> Vec<Vec<R>> {
    map_indexed(data.groups().len(), mode, |i| {
        data.groups()[i].iter().map(|sg| mean_of(sg)).collect()
    })
}

fn pooled_group_sums<R: Scalar>(data: &ThreeLevelData<R>) -> Vec<R> {
    data.groups()
        .iter()
        .map(|g| {
            let mut acc = CompensatedSum::new();
            for sg in g {
                for y in sg {
                    acc.add(y.clone());
                }
            }
            acc.value()
        })
        .collect()
}

/// `mu2w` and `mu3w` from within-subgroup residuals.
pub fn estimate_w<R: Scalar>(
    data: &ThreeLevelData<R>,
    summary: &NestedDesignSummary,
) -> WithinSubgroupEstimates<R> {
    estimate_w_mode(data, summary, ExecMode::default())
}

#[doc(hidden)]
pub fn estimate_w_mode<R: Scalar>(
    data: &ThreeLevelData<R>,
    summary: &NestedDesignSummary,
    mode: ExecMode,
) -> WithinSubgroupEstimates<R> {
    debug_assert_eq!(data.sizes(), summary.sizes());
    let per_group: Vec<(R, R)> = map_indexed(data.groups().len(), mode, |i| {
        let mut s2 = CompensatedSum::new();
        let mut s3 = CompensatedSum::new();
        for sg in &data.groups()[i] {
            let sums = centered_power_sums(sg);
            s2.add(sums.sum_sq);
            s3.add(sums.sum_cube);
        }
        (s2.value(), s3.value())
    });
    let mut ss2 = CompensatedSum::new();
    let mut ss3 = CompensatedSum::new();
    for (a, b) in per_group {
        ss2.add(a);
        ss3.add(b);
    }
    let coef = coefficients(summary);
    WithinSubgroupEstimates {
        mu2w: ss2.value() / R::from_constant(&coef.dw2),
        mu3w: ss3.value() / R::from_constant(&coef.dw3),
    }
}

/// Middle-component estimates: subgroup means centered within their group,
/// with the within-subgroup contamination subtracted via the supplied
/// `w` estimates.
pub fn estimate_v_3l<R: Scalar>(
    data: &ThreeLevelData<R>,
    summary: &NestedDesignSummary,
    scheme: Scheme,
    w: &WithinSubgroupEstimates<R>,
) -> SubgroupLevelEstimates<R> {
    debug_assert_eq!(data.sizes(), summary.sizes());
    let coef = coefficients(summary);
    let means = subgroup_means(data, ExecMode::default());

    let mut s2 = CompensatedSum::new();
    let mut s3 = CompensatedSum::new();
    for (i, group_means) in means.iter().enumerate() {
        let center = match scheme {
            Scheme::Grp => mean_of(group_means),
            Scheme::Obs => {
                let mut acc = CompensatedSum::new();
                for sg in &data.groups()[i] {
                    for y in sg {
                        acc.add(y.clone());
                    }
                }
                acc.value() / R::from_usize(summary.groups()[i].total())
            }
        };
        for m in group_means {
            let f = m.clone() - center.clone();
            let ff = f.clone() * f.clone();
            s2.add(ff.clone());
            s3.add(ff * f);
        }
    }

    let (den2, den3, cor2, cor3) = match scheme {
        Scheme::Grp => (&coef.dv2g, &coef.dv3g, &coef.cv2g, &coef.cv3g),
        Scheme::Obs => (&coef.dv2o, &coef.dv3o, &coef.cv2o, &coef.cv3o),
    };
    SubgroupLevelEstimates {
        scheme,
        mu2v: (s2.value() - w.mu2w.clone() * R::from_constant(cor2)) / R::from_constant(den2),
        mu3v: (s3.value() - w.mu3w.clone() * R::from_constant(cor3)) / R::from_constant(den3),
    }
}

/// Outer-component estimates from group averages centered on the grand
/// mean, with both lower-level contaminations subtracted. The `v` estimates
/// must be scheme-matched.
pub fn estimate_u_3l<R: Scalar>(
    data: &ThreeLevelData<R>,
    summary: &NestedDesignSummary,
    scheme: Scheme,
    v: &SubgroupLevelEstimates<R>,
    w: &WithinSubgroupEstimates<R>,
) -> GroupLevelEstimates3L<R> {
    debug_assert_eq!(data.sizes(), summary.sizes());
    assert_eq!(v.scheme, scheme, "v estimates must match the u scheme");
    let coef = coefficients(summary);
    let n = summary.n();

    let (group_avgs, grand): (Vec<R>, R) = match scheme {
        Scheme::Grp => {
            let means = subgroup_means(data, ExecMode::default());
            let avgs: Vec<R> = means.iter().map(|m| mean_of(m)).collect();
            let grand = mean_of(&avgs);
            (avgs, grand)
        }
        Scheme::Obs => {
            let sums = pooled_group_sums(data);
            let mut total = CompensatedSum::new();
            for s in &sums {
                total.add(s.clone());
            }
            let avgs: Vec<R> = sums
                .into_iter()
                .enumerate()
                .map(|(i, s)| s / R::from_usize(summary.groups()[i].total()))
                .collect();
            let grand = total.value() / R::from_usize(summary.total());
            (avgs, grand)
        }
    };

    let mut b2 = CompensatedSum::new();
    let mut b3 = CompensatedSum::new();
    for g in &group_avgs {
        let d = g.clone() - grand.clone();
        let dd = d.clone() * d.clone();
        b2.add(dd.clone());
        b3.add(dd * d);
    }
    debug_assert_eq!(group_avgs.len(), n);

    match scheme {
        Scheme::Grp => GroupLevelEstimates3L {
            scheme,
            mu2u: b2.value() * R::from_constant(&coef.inv_nm1)
                - v.mu2v.clone() * R::from_constant(&coef.s1j_over_n)
                - w.mu2w.clone() * R::from_constant(&coef.cu2g_w_over_n),
            mu3u: b3.value() * R::from_constant(&coef.mu3_lead)
                - v.mu3v.clone() * R::from_constant(&coef.s2j_over_n)
                - w.mu3w.clone() * R::from_constant(&coef.cu3g_w_over_n),
        },
        Scheme::Obs => GroupLevelEstimates3L {
            scheme,
            mu2u: (b2.value()
                - v.mu2v.clone() * R::from_constant(&coef.cu2o_v)
                - w.mu2w.clone() * R::from_constant(&coef.cu2o_w))
                / R::from_constant(&coef.du2o),
            mu3u: (b3.value()
                - v.mu3v.clone() * R::from_constant(&coef.cu3o_v)
                - w.mu3w.clone() * R::from_constant(&coef.cu3o_w))
                / R::from_constant(&coef.du3o),
        },
    }
}

/// Run the full pipeline in the fixed order w -> v -> u for both schemes.
pub fn estimate_three_level<R: Scalar>(
    data: &ThreeLevelData<R>,
    summary: &NestedDesignSummary,
) -> ThreeLevelEstimates<R> {
    let w = estimate_w(data, summary);
    let v_grp = estimate_v_3l(data, summary, Scheme::Grp, &w);
    let v_obs = estimate_v_3l(data, summary, Scheme::Obs, &w);
    let u_grp = estimate_u_3l(data, summary, Scheme::Grp, &v_grp, &w);
    let u_obs = estimate_u_3l(data, summary, Scheme::Obs, &v_obs, &w);
    ThreeLevelEstimates {
        w,
        v_grp,
        v_obs,
        u_grp,
        u_obs,
    }
}
