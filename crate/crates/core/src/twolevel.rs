//! Estimators for the unbalanced two-level model `y_ij = u_i + v_ij`.
//!
//! Within-group variation identifies the moments of `v`; between-group
//! variation identifies the moments of `u` under two grand-mean conventions:
//! group-level averaging (`grp`, every group weighted equally) and
//! observation-level averaging (`obs`, every observation weighted equally).
//! Second- and third-moment estimators are closed-form ratios; fourth
//! moments come from a 2x2 linear system that jointly identifies
//! `(mu4, mu2^2)` from a fourth-power statistic and a pairwise
//! cross-product statistic.
//!
//! All design-dependent coefficients are computed once per summary in exact
//! rational arithmetic and cached; data statistics are computed in the
//! caller's scalar type.

use crate::design::{DesignSummary, TwoLevelData};
use crate::error::EstimatorError;
use crate::exec::{map_indexed, ExecMode};
use crate::kernel::{centered_power_sums, CenteredPowerSums};
use crate::numeric::{CompensatedSum, DualConstant, Scalar};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// Grand-mean convention for between-group estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Group-level averaging: the grand mean weights every group equally.
    Grp,
    /// Observation-level averaging: the grand mean weights every
    /// observation equally.
    Obs,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Grp => "grp",
            Scheme::Obs => "obs",
        }
    }
}

/// Which fourth-moment system to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// Within-group system identifying `(mu4v, mu2v^2)`.
    Within,
    /// Between-group system under group-level averaging.
    BetweenGrp,
    /// Between-group system under observation-level averaging.
    BetweenObs,
}

/// Plug-in nuisance values entering the between-system adjustment terms.
/// All three are zero for the within system.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceMoments<R> {
    /// Estimate of the product `mu2u * mu2v` (scheme-matched `mu2u`).
    pub mu2u_mu2v: R,
    /// Estimate of `mu2v^2` (the jointly solved one, not `mu2v` squared).
    pub mu2v_sq: R,
    /// Estimate of `mu4v`.
    pub mu4v: R,
}

impl<R: Scalar> NuisanceMoments<R> {
    pub fn zero() -> Self {
        Self {
            mu2u_mu2v: R::zero(),
            mu2v_sq: R::zero(),
            mu4v: R::zero(),
        }
    }
}

/// The assembled 2x2 fourth-moment system.
///
/// Row 1 pairs the summed fourth-power statistic with `(a11, a12)`; row 2
/// pairs the summed cross-product statistic with `(a21, a22)`. `t4` and
/// `t22` are the adjustment terms subtracted from the raw statistics before
/// solving (identically zero for the within system). `det` is exactly
/// `a11*a22 - a12*a21`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourthMomentSystem<R> {
    pub kind: SystemKind,
    pub a11: R,
    pub a12: R,
    pub a21: R,
    pub a22: R,
    pub t4: R,
    pub t22: R,
    pub rhs1: Option<R>,
    pub rhs2: Option<R>,
    pub det: R,
}

impl<R: Scalar> FourthMomentSystem<R> {
    /// Attach the raw statistics; the stored right-hand sides are the
    /// adjusted values `q4 - t4` and `q22 - t22`.
    pub fn with_statistics(mut self, q4: R, q22: R) -> Self {
        self.rhs1 = Some(q4 - self.t4.clone());
        self.rhs2 = Some(q22 - self.t22.clone());
        self
    }

    fn det_scale(&self) -> R {
        let p1 = (self.a11.clone() * self.a22.clone()).abs();
        let p2 = (self.a12.clone() * self.a21.clone()).abs();
        if p1 >= p2 {
            p1
        } else {
            p2
        }
    }

    pub fn is_singular(&self) -> bool {
        R::det_is_singular(&self.det, &self.det_scale())
    }

    /// Solve for `(mu4, mu2^2)`. Requires statistics to be attached.
    pub fn solve(&self) -> Result<(R, R), EstimatorError> {
        if self.is_singular() {
            return Err(EstimatorError::SingularSystem {
                det: self.det.to_string(),
            });
        }
        let r1 = self.rhs1.clone().expect("statistics attached");
        let r2 = self.rhs2.clone().expect("statistics attached");
        let mu4 = (self.a22.clone() * r1.clone() - self.a12.clone() * r2.clone())
            / self.det.clone();
        let mu2_sq = (self.a11.clone() * r2 - self.a21.clone() * r1) / self.det.clone();
        Ok((mu4, mu2_sq))
    }
}

/// Outcome of a fourth-moment solve attached to an estimate bundle.
#[derive(Debug, Clone, PartialEq)]
pub enum FourthStatus<R> {
    Solved { mu4: R, mu2_sq: R, det: R },
    Singular { det: R },
    /// The solve needed within fourth-moment estimates that were themselves
    /// unavailable.
    MissingNuisance,
}

impl<R> FourthStatus<R> {
    pub fn solved(&self) -> Option<(&R, &R)> {
        match self {
            FourthStatus::Solved { mu4, mu2_sq, .. } => Some((mu4, mu2_sq)),
            _ => None,
        }
    }

    pub fn det(&self) -> Option<&R> {
        match self {
            FourthStatus::Solved { det, .. } | FourthStatus::Singular { det } => Some(det),
            FourthStatus::MissingNuisance => None,
        }
    }

    pub fn error(&self) -> Option<EstimatorError>
    where
        R: Scalar,
    {
        match self {
            FourthStatus::Solved { .. } => None,
            FourthStatus::Singular { det } => Some(EstimatorError::SingularSystem {
                det: det.to_string(),
            }),
            FourthStatus::MissingNuisance => Some(EstimatorError::MissingWithinFourth),
        }
    }
}

/// Within-group estimates: `mu2v`, `mu3v`, and the jointly solved pair
/// `(mu4v, mu2v^2)` when the within system is nonsingular.
#[derive(Debug, Clone, PartialEq)]
pub struct WithinEstimates2L<R> {
    pub mu2v: R,
    pub mu3v: R,
    pub fourth: FourthStatus<R>,
}

impl<R> WithinEstimates2L<R> {
    pub fn mu4v(&self) -> Option<&R> {
        self.fourth.solved().map(|(m4, _)| m4)
    }

    pub fn mu2v_sq(&self) -> Option<&R> {
        self.fourth.solved().map(|(_, m2sq)| m2sq)
    }
}

/// Between-group estimates under one averaging scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct BetweenEstimates2L<R> {
    pub scheme: Scheme,
    pub mu2u: R,
    pub mu3u: R,
    pub fourth: FourthStatus<R>,
}

impl<R> BetweenEstimates2L<R> {
    pub fn mu4u(&self) -> Option<&R> {
        self.fourth.solved().map(|(m4, _)| m4)
    }

    pub fn mu2u_sq(&self) -> Option<&R> {
        self.fourth.solved().map(|(_, m2sq)| m2sq)
    }
}

// ---------------------------------------------------------------------------
// Cached design coefficients
// ---------------------------------------------------------------------------

fn q(n: i128, d: i128) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn qi(n: i128) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// One fourth-moment system's design side: coefficient matrix plus the
/// design factors of the adjustment terms, stored so that
/// `T4  = p_uv * f4_uv  + p_4v * f4_4v  + p_2v2 * f4_2v2` and
/// `T22 = p_uv * f22_uv + p_4v * f22_4v + p_2v2 * f22_2v2`.
#[derive(Debug, Clone)]
pub(crate) struct FourthDesign {
    a11: DualConstant,
    a12: DualConstant,
    a21: DualConstant,
    a22: DualConstant,
    f4_uv: DualConstant,
    f4_4v: DualConstant,
    f4_2v2: DualConstant,
    f22_uv: DualConstant,
    f22_4v: DualConstant,
    f22_2v2: DualConstant,
}

impl FourthDesign {
    fn zero_adjustments(a11: BigRational, a12: BigRational, a21: BigRational, a22: BigRational) -> Self {
        let zero = || DualConstant::new(BigRational::zero());
        Self {
            a11: DualConstant::new(a11),
            a12: DualConstant::new(a12),
            a21: DualConstant::new(a21),
            a22: DualConstant::new(a22),
            f4_uv: zero(),
            f4_4v: zero(),
            f4_2v2: zero(),
            f22_uv: zero(),
            f22_4v: zero(),
            f22_2v2: zero(),
        }
    }

    fn build_system<R: Scalar>(
        &self,
        kind: SystemKind,
        nuisance: &NuisanceMoments<R>,
    ) -> FourthMomentSystem<R> {
        let a11 = R::from_constant(&self.a11);
        let a12 = R::from_constant(&self.a12);
        let a21 = R::from_constant(&self.a21);
        let a22 = R::from_constant(&self.a22);
        let det = a11.clone() * a22.clone() - a12.clone() * a21.clone();
        let term = |uv: &DualConstant, v4: &DualConstant, v2: &DualConstant| {
            nuisance.mu2u_mu2v.clone() * R::from_constant(uv)
                + nuisance.mu4v.clone() * R::from_constant(v4)
                + nuisance.mu2v_sq.clone() * R::from_constant(v2)
        };
        FourthMomentSystem {
            kind,
            a11,
            a12,
            a21,
            a22,
            t4: term(&self.f4_uv, &self.f4_4v, &self.f4_2v2),
            t22: term(&self.f22_uv, &self.f22_4v, &self.f22_2v2),
            rhs1: None,
            rhs2: None,
            det,
        }
    }
}

/// Design constants for the within estimators (defined for any profile with
/// every `J_i >= 3`).
#[derive(Debug, Clone)]
pub(crate) struct WithinDesign {
    /// `sum (J_i - 1)`
    d2: DualConstant,
    /// `sum (J_i - 1)(J_i - 2) / J_i`
    d3: DualConstant,
    v: FourthDesign,
}

/// Design constants for the between estimators (requires `n >= 3`).
#[derive(Debug, Clone)]
pub(crate) struct BetweenDesign {
    /// `1 / (n - 1)`
    inv_nm1: DualConstant,
    /// `n / ((n - 1)(n - 2))`
    mu3_lead: DualConstant,
    /// `(sum 1/J_i) / n`
    s1_over_n: DualConstant,
    /// `(sum 1/J_i^2) / n`
    s2_over_n: DualConstant,
    /// obs denominators and subtraction coefficients
    dob2: DualConstant,
    dob3: DualConstant,
    cob2: DualConstant,
    cob3: DualConstant,
    grp: FourthDesign,
    obs: FourthDesign,
}

#[derive(Debug, Clone)]
pub(crate) struct TwoLevelCoefficients {
    within: WithinDesign,
    between: Option<BetweenDesign>,
}

fn within_design(summary: &DesignSummary) -> WithinDesign {
    let mut d2 = BigRational::zero();
    let mut d3 = BigRational::zero();
    let mut a11 = BigRational::zero();
    let mut a12 = BigRational::zero();
    let mut a21 = BigRational::zero();
    let mut a22 = BigRational::zero();
    for &j in summary.sizes() {
        let j = j as i128;
        d2 += qi(j - 1);
        d3 += q((j - 1) * (j - 2), j);
        a11 += q((j - 1) * (j * j - 3 * j + 3), j * j);
        a12 += q(3 * (j - 1) * (2 * j - 3), j * j);
        a21 += q((j - 1) * (2 * j - 3), 2 * j * j);
        a22 += q((j - 1) * (j * j * j - 2 * j * j - 3 * j + 9), 2 * j * j);
    }
    WithinDesign {
        d2: DualConstant::new(d2),
        d3: DualConstant::new(d3),
        v: FourthDesign::zero_adjustments(a11, a12, a21, a22),
    }
}

fn grp_design(summary: &DesignSummary) -> FourthDesign {
    let n = summary.n() as i128;
    let s1 = summary.recip_sum().clone();
    let s2 = summary.recip2_sum().clone();
    let s3 = summary.recip3_sum().clone();
    let n2 = n * n;
    let n3 = n2 * n;

    let a11 = q((n - 1) * (n2 - 3 * n + 3), n2);
    let a12 = q(3 * (n - 1) * (2 * n - 3), n2);
    let a21 = q((n - 1) * (2 * n - 3), n2);
    // Coefficient of mu2u^2 in the summed ordered-pair cross identity:
    // n(n-1) pairs, each contributing (n^3 - 2n^2 - 3n + 9)/n^3. The same
    // polynomial governs the within cross identity; the oracle tests pin
    // this row against brute-force expectations.
    let a22 = q((n - 1) * (n3 - 2 * n2 - 3 * n + 9), n2);

    let f4_uv = qi(6) * q((n - 1) * (n - 1), n2) * &s1;
    let f4_4v = q((n - 1) * (n2 - 3 * n + 3), n3) * &s3;
    let f4_2v2 = qi(3)
        * (q((n - 2) * (n - 2), n2) * &s2 + q(2 * n - 3, n3) * &s1 * &s1
            - q((n - 1) * (n2 - 3 * n + 3), n3) * &s3);
    let f22_uv = qi(2) * q((n - 1) * ((n - 1) * (n - 1) + 2), n2) * &s1;
    let f22_4v = q((n - 1) * (2 * n - 3), n3) * &s3;
    let f22_2v2 = q(n3 - 2 * n2 - 3 * n + 9, n3) * &s1 * &s1
        + q((n - 2) * (6 - n), n2) * &s2
        - qi(3) * q((n - 1) * (2 * n - 3), n3) * &s3;

    FourthDesign {
        a11: a11.into(),
        a12: a12.into(),
        a21: a21.into(),
        a22: a22.into(),
        f4_uv: f4_uv.into(),
        f4_4v: f4_4v.into(),
        f4_2v2: f4_2v2.into(),
        f22_uv: f22_uv.into(),
        f22_4v: f22_4v.into(),
        f22_2v2: f22_2v2.into(),
    }
}

fn obs_design(summary: &DesignSummary) -> FourthDesign {
    let sizes = summary.sizes();
    let nn = sizes.len();
    let n_total = summary.total() as i128;
    let sj2 = summary.size2_sum() as i128;
    let sj4 = summary.size4_sum() as i128;
    let n4 = n_total * n_total * n_total * n_total;

    // c_i = 1 - 2 J_i/N + (sum J_m^2)/N^2, the mu2u coefficient of
    // E[(ybar_i - ybar_obs)^2].
    let c_u = |ji: i128| q(n_total * n_total - 2 * ji * n_total + sj2, n_total * n_total);
    // 1/J_i - 1/N
    let c_v = |ji: i128| q(n_total - ji, ji * n_total);
    // Quartic weight sums of the v-average deviation:
    // J_i (1/J_i - 1/N)^4 + (N - J_i)/N^4.
    let w4 = |ji: i128| {
        q((n_total - ji) * (n_total - ji) * (n_total - ji) * (n_total - ji), ji * ji * ji * n4)
            + q(n_total - ji, n4)
    };

    let mut a11 = BigRational::zero();
    let mut a12 = BigRational::zero();
    let mut f4_uv = BigRational::zero();
    let mut f4_4v = BigRational::zero();
    let mut f4_2v2 = BigRational::zero();
    for &j in sizes {
        let ji = j as i128;
        // (1 - J_i/N)^4 + (sum_{m != i} J_m^4)/N^4
        let quart_u = q((n_total - ji) * (n_total - ji) * (n_total - ji) * (n_total - ji), n4)
            + q(sj4 - ji * ji * ji * ji, n4);
        a11 += quart_u.clone();
        a12 += qi(3) * (&c_u(ji) * &c_u(ji) - quart_u);
        f4_uv += c_u(ji) * c_v(ji);
        f4_4v += w4(ji);
        f4_2v2 += &c_v(ji) * &c_v(ji) - w4(ji);
    }
    f4_uv *= qi(6);
    f4_2v2 *= qi(3);

    let mut a21 = BigRational::zero();
    let mut a22 = BigRational::zero();
    let mut f22_uv = BigRational::zero();
    let mut f22_4v = BigRational::zero();
    let mut f22_2v2 = BigRational::zero();
    for i in 0..nn {
        for ip in 0..nn {
            if i == ip {
                continue;
            }
            let ji = sizes[i] as i128;
            let jp = sizes[ip] as i128;
            let quart_u = q(
                ji * ji * (n_total - ji) * (n_total - ji)
                    + jp * jp * (n_total - jp) * (n_total - jp)
                    + (sj4 - ji * ji * ji * ji - jp * jp * jp * jp),
                n4,
            );
            let cross = q(sj2 - (ji + jp) * n_total, n_total * n_total);
            a21 += quart_u.clone();
            a22 += c_u(ji) * c_u(jp) + qi(2) * &cross * &cross - qi(3) * quart_u;
            f22_uv += c_u(ji) * c_v(jp) + c_u(jp) * c_v(ji) - q(4, n_total) * &cross;
            // [(N-J_i)^2/J_i + (N-J_i')^2/J_i' + (N - J_i - J_i')] / N^4
            let quart_v = (q((n_total - ji) * (n_total - ji), ji)
                + q((n_total - jp) * (n_total - jp), jp)
                + qi(n_total - ji - jp))
                / qi(n4);
            f22_4v += quart_v.clone();
            f22_2v2 += c_v(ji) * c_v(jp) + q(2, n_total * n_total) - qi(3) * quart_v;
        }
    }

    FourthDesign {
        a11: a11.into(),
        a12: a12.into(),
        a21: a21.into(),
        a22: a22.into(),
        f4_uv: f4_uv.into(),
        f4_4v: f4_4v.into(),
        f4_2v2: f4_2v2.into(),
        f22_uv: f22_uv.into(),
        f22_4v: f22_4v.into(),
        f22_2v2: f22_2v2.into(),
    }
}

fn between_design(summary: &DesignSummary) -> Option<BetweenDesign> {
    let n = summary.n() as i128;
    if n < 3 {
        return None;
    }
    let n_total = summary.total() as i128;
    let sj2 = summary.size2_sum() as i128;
    let sj3 = summary.size3_sum() as i128;

    let mut dob2 = BigRational::zero();
    let mut dob3 = BigRational::zero();
    let mut cob3 = BigRational::zero();
    for &j in summary.sizes() {
        let ji = j as i128;
        dob2 += BigRational::one() - q(2 * ji, n_total) + q(sj2, n_total * n_total);
        dob3 += BigRational::one() - q(3 * ji, n_total) + q(3 * ji * ji, n_total * n_total)
            - q(sj3, n_total * n_total * n_total);
        cob3 += q(
            (n_total - ji) * (n_total - 2 * ji),
            n_total * n_total * ji * ji,
        );
    }
    let cob2 = summary.recip_sum() - q(n, n_total);

    Some(BetweenDesign {
        inv_nm1: DualConstant::new(q(1, n - 1)),
        mu3_lead: DualConstant::new(q(n, (n - 1) * (n - 2))),
        s1_over_n: DualConstant::new(summary.recip_sum() / qi(n)),
        s2_over_n: DualConstant::new(summary.recip2_sum() / qi(n)),
        dob2: dob2.into(),
        dob3: dob3.into(),
        cob2: cob2.into(),
        cob3: cob3.into(),
        grp: grp_design(summary),
        obs: obs_design(summary),
    })
}

impl TwoLevelCoefficients {
    fn new(summary: &DesignSummary) -> Self {
        Self {
            within: within_design(summary),
            between: between_design(summary),
        }
    }
}

fn coefficients(summary: &DesignSummary) -> &TwoLevelCoefficients {
    summary
        .two_level
        .get_or_init(|| TwoLevelCoefficients::new(summary))
}

fn between_coefficients(summary: &DesignSummary) -> &BetweenDesign {
    coefficients(summary)
        .between
        .as_ref()
        .expect("between estimators require a validated design with n >= 3")
}

/// Assemble the design side of a fourth-moment system: coefficient matrix,
/// adjustment terms for the supplied nuisance values, and determinant.
/// Statistics are attached separately via
/// [`FourthMomentSystem::with_statistics`].
pub fn build_fourth_system<R: Scalar>(
    kind: SystemKind,
    summary: &DesignSummary,
    nuisance: &NuisanceMoments<R>,
) -> FourthMomentSystem<R> {
    match kind {
        SystemKind::Within => coefficients(summary)
            .within
            .v
            .build_system(kind, &NuisanceMoments::zero()),
        SystemKind::BetweenGrp => between_coefficients(summary)
            .grp
            .build_system(kind, nuisance),
        SystemKind::BetweenObs => between_coefficients(summary)
            .obs
            .build_system(kind, nuisance),
    }
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

fn group_mean<R: Scalar>(values: &[R]) -> R {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v.clone());
    }
    acc.value() / R::from_usize(values.len())
}

pub(crate) fn group_means<R: Scalar>(data: &TwoLevelData<R>, mode: ExecMode) -> Vec<R> {
    map_indexed(data.groups().len(), mode, |i| group_mean(&data.groups()[i]))
}

/// Centered deviation powers of `values` around an externally supplied
/// center: `(sum d^2, sum d^3, sum d^4, ordered-pair cross sum)`.
/// The pair statistic uses an explicit O(n^2) loop over ordered pairs,
/// mirroring the index convention of the between coefficient systems.
fn deviation_stats<R: Scalar>(values: &[R], center: &R) -> (R, R, R, R) {
    let mut s2 = CompensatedSum::new();
    let mut s3 = CompensatedSum::new();
    let mut s4 = CompensatedSum::new();
    let d2: Vec<R> = values
        .iter()
        .map(|v| {
            let d = v.clone() - center.clone();
            let dd = d.clone() * d.clone();
            s2.add(dd.clone());
            s3.add(dd.clone() * d.clone());
            s4.add(dd.clone() * dd.clone());
            dd
        })
        .collect();
    let mut cross = CompensatedSum::new();
    for (i, di) in d2.iter().enumerate() {
        for (ip, dip) in d2.iter().enumerate() {
            if i != ip {
                cross.add(di.clone() * dip.clone());
            }
        }
    }
    (s2.value(), s3.value(), s4.value(), cross.value())
}

/// Within-group estimates of `mu2v`, `mu3v` and the jointly solved
/// `(mu4v, mu2v^2)`.
///
/// `mu2v = sum_{ij} (y_ij - ybar_i)^2 / sum_i (J_i - 1)` and
/// `mu3v = sum_{ij} (y_ij - ybar_i)^3 / sum_i (J_i-1)(J_i-2)/J_i`; the
/// fourth-moment pair solves the within system against the summed quartic
/// and unordered-pair statistics. A singular within system (e.g. every
/// `J_i = 3`) leaves the fourth pair unpopulated.
pub fn estimate_within<R: Scalar>(
    data: &TwoLevelData<R>,
    summary: &DesignSummary,
) -> WithinEstimates2L<R> {
    estimate_within_mode(data, summary, ExecMode::default())
}

#[doc(hidden)]
pub fn estimate_within_mode<R: Scalar>(
    data: &TwoLevelData<R>,
    summary: &DesignSummary,
    mode: ExecMode,
) -> WithinEstimates2L<R> {
    debug_assert_eq!(data.sizes(), summary.sizes());
    let per_group: Vec<CenteredPowerSums<R>> =
        map_indexed(data.groups().len(), mode, |i| {
            centered_power_sums(&data.groups()[i])
        });

    let mut ss2 = CompensatedSum::new();
    let mut ss3 = CompensatedSum::new();
    let mut ss4 = CompensatedSum::new();
    let mut pair = CompensatedSum::new();
    for g in &per_group {
        ss2.add(g.sum_sq.clone());
        ss3.add(g.sum_cube.clone());
        ss4.add(g.sum_quartic.clone());
        pair.add(g.pair_sq.clone());
    }

    let design = &coefficients(summary).within;
    let mu2v = ss2.value() / R::from_constant(&design.d2);
    let mu3v = ss3.value() / R::from_constant(&design.d3);

    let system = design
        .v
        .build_system::<R>(SystemKind::Within, &NuisanceMoments::zero())
        .with_statistics(ss4.value(), pair.value());
    let fourth = match system.solve() {
        Ok((mu4, mu2_sq)) => FourthStatus::Solved {
            mu4,
            mu2_sq,
            det: system.det,
        },
        Err(_) => FourthStatus::Singular { det: system.det },
    };

    WithinEstimates2L { mu2v, mu3v, fourth }
}

fn between_fourth<R: Scalar>(
    design: &FourthDesign,
    kind: SystemKind,
    mu2u: &R,
    within: &WithinEstimates2L<R>,
    q4: R,
    q22: R,
) -> FourthStatus<R> {
    let (mu4v, mu2v_sq) = match within.fourth.solved() {
        Some(pair) => pair,
        None => return FourthStatus::MissingNuisance,
    };
    let nuisance = NuisanceMoments {
        mu2u_mu2v: mu2u.clone() * within.mu2v.clone(),
        mu2v_sq: mu2v_sq.clone(),
        mu4v: mu4v.clone(),
    };
    let system = design
        .build_system(kind, &nuisance)
        .with_statistics(q4, q22);
    match system.solve() {
        Ok((mu4, mu2_sq)) => FourthStatus::Solved {
            mu4,
            mu2_sq,
            det: system.det,
        },
        Err(_) => FourthStatus::Singular { det: system.det },
    }
}

/// Between-group estimates under group-level averaging.
pub fn estimate_between_grp<R: Scalar>(
    data: &TwoLevelData<R>,
    summary: &DesignSummary,
    within: &WithinEstimates2L<R>,
) -> BetweenEstimates2L<R> {
    debug_assert_eq!(data.sizes(), summary.sizes());
    let design = between_coefficients(summary);
    let means = group_means(data, ExecMode::default());
    let grand = group_mean(&means);
    let (b2, b3, b4, c22) = deviation_stats(&means, &grand);

    let mu2u = b2 * R::from_constant(&design.inv_nm1)
        - within.mu2v.clone() * R::from_constant(&design.s1_over_n);
    let mu3u = b3 * R::from_constant(&design.mu3_lead)
        - within.mu3v.clone() * R::from_constant(&design.s2_over_n);
    let fourth = between_fourth(&design.grp, SystemKind::BetweenGrp, &mu2u, within, b4, c22);

    BetweenEstimates2L {
        scheme: Scheme::Grp,
        mu2u,
        mu3u,
        fourth,
    }
}

/// Between-group estimates under observation-level averaging.
pub fn estimate_between_obs<R: Scalar>(
    data: &TwoLevelData<R>,
    summary: &DesignSummary,
    within: &WithinEstimates2L<R>,
) -> BetweenEstimates2L<R> {
    debug_assert_eq!(data.sizes(), summary.sizes());
    let design = between_coefficients(summary);
    let means = group_means(data, ExecMode::default());
    let mut pooled = CompensatedSum::new();
    for g in data.groups() {
        for v in g {
            pooled.add(v.clone());
        }
    }
    let grand = pooled.value() / R::from_usize(data.total());
    let (b2, b3, b4, c22) = deviation_stats(&means, &grand);

    let mu2u = (b2 - within.mu2v.clone() * R::from_constant(&design.cob2))
        / R::from_constant(&design.dob2);
    let mu3u = (b3 - within.mu3v.clone() * R::from_constant(&design.cob3))
        / R::from_constant(&design.dob3);
    let fourth = between_fourth(&design.obs, SystemKind::BetweenObs, &mu2u, within, b4, c22);

    BetweenEstimates2L {
        scheme: Scheme::Obs,
        mu2u,
        mu3u,
        fourth,
    }
}
