//! Seeded Monte Carlo bias testing.
//!
//! Replication `r` draws its randomness from a ChaCha stream keyed by
//! `(seed, r)` alone, so reports are bit-identical for a given plan no
//! matter how replications are scheduled across threads. Accumulation is
//! chunked: each fixed-size chunk is summed sequentially with compensated
//! accumulators and chunks are merged in index order.

use super::PlanError;
use crate::design::{
    validate_three_level_sizes, validate_two_level_sizes, DesignSummary, NestedDesignSummary,
    ThreeLevelData, TwoLevelData,
};
use crate::dist::DiscreteDistribution;
use crate::exec::{map_indexed, ExecMode};
use crate::kernel::true_moments;
use crate::numeric::{rational_to_f64, CompensatedSum};
use crate::threelevel::estimate_three_level;
use crate::twolevel::{estimate_between_grp, estimate_between_obs, estimate_within, Scheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CHUNK: u64 = 4096;

/// Two- or three-level size profile for a simulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DesignSpec {
    TwoLevel(Vec<usize>),
    ThreeLevel(Vec<Vec<usize>>),
}

impl DesignSpec {
    pub fn levels(&self) -> u8 {
        match self {
            DesignSpec::TwoLevel(_) => 2,
            DesignSpec::ThreeLevel(_) => 3,
        }
    }
}

/// A reproducible Monte Carlo run: design, per-level laws, replication
/// count, and seed.
#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub design: DesignSpec,
    /// Outer (group-level) component law.
    pub dist_u: DiscreteDistribution,
    /// Middle component law (unit-level in two-level designs).
    pub dist_v: DiscreteDistribution,
    /// Innermost component law; required for three-level designs.
    pub dist_w: Option<DiscreteDistribution>,
    pub reps: u64,
    pub seed: u64,
}

impl SimulationPlan {
    pub fn validate(&self) -> Result<(), PlanError> {
        match &self.design {
            DesignSpec::TwoLevel(sizes) => validate_two_level_sizes(sizes)?,
            DesignSpec::ThreeLevel(sizes) => {
                validate_three_level_sizes(sizes)?;
                if self.dist_w.is_none() {
                    return Err(PlanError::MissingInnerDistribution);
                }
            }
        }
        if self.reps == 0 {
            return Err(PlanError::ZeroReps);
        }
        Ok(())
    }
}

/// Estimator selectors for Monte Carlo reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatisticId {
    // two-level
    Mu2V,
    Mu3V,
    Mu4V,
    Mu2VSq,
    Mu2U(Scheme),
    Mu3U(Scheme),
    Mu4U(Scheme),
    Mu2USq(Scheme),
    // three-level
    Mu2W,
    Mu3W,
    Mu2V3L(Scheme),
    Mu3V3L(Scheme),
    Mu2U3L(Scheme),
    Mu3U3L(Scheme),
}

impl StatisticId {
    pub fn label(self) -> String {
        match self {
            StatisticId::Mu2V => "mu2v".into(),
            StatisticId::Mu3V => "mu3v".into(),
            StatisticId::Mu4V => "mu4v".into(),
            StatisticId::Mu2VSq => "mu2v_sq".into(),
            StatisticId::Mu2U(s) => format!("mu2u_{}", s.label()),
            StatisticId::Mu3U(s) => format!("mu3u_{}", s.label()),
            StatisticId::Mu4U(s) => format!("mu4u_{}", s.label()),
            StatisticId::Mu2USq(s) => format!("mu2u_sq_{}", s.label()),
            StatisticId::Mu2W => "mu2w".into(),
            StatisticId::Mu3W => "mu3w".into(),
            StatisticId::Mu2V3L(s) => format!("mu2v_{}", s.label()),
            StatisticId::Mu3V3L(s) => format!("mu3v_{}", s.label()),
            StatisticId::Mu2U3L(s) => format!("mu2u_{}", s.label()),
            StatisticId::Mu3U3L(s) => format!("mu3u_{}", s.label()),
        }
    }

    /// Exact moment targeted by the estimator, as a double.
    pub fn true_value(self, plan: &SimulationPlan) -> f64 {
        let u = true_moments(&plan.dist_u);
        let v = true_moments(&plan.dist_v);
        let q = match self {
            StatisticId::Mu2V => v.mu2().clone(),
            StatisticId::Mu3V => v.mu3().clone(),
            StatisticId::Mu4V => v.mu4().clone(),
            StatisticId::Mu2VSq => v.mu2_sq(),
            StatisticId::Mu2U(_) => u.mu2().clone(),
            StatisticId::Mu3U(_) => u.mu3().clone(),
            StatisticId::Mu4U(_) => u.mu4().clone(),
            StatisticId::Mu2USq(_) => u.mu2_sq(),
            StatisticId::Mu2W | StatisticId::Mu3W => {
                let w = true_moments(plan.dist_w.as_ref().expect("validated plan"));
                if self == StatisticId::Mu2W {
                    w.mu2().clone()
                } else {
                    w.mu3().clone()
                }
            }
            StatisticId::Mu2V3L(_) => v.mu2().clone(),
            StatisticId::Mu3V3L(_) => v.mu3().clone(),
            StatisticId::Mu2U3L(_) => u.mu2().clone(),
            StatisticId::Mu3U3L(_) => u.mu3().clone(),
        };
        rational_to_f64(&q)
    }
}

/// The full selector list applicable to a design.
pub fn applicable_statistics(design: &DesignSpec) -> Vec<StatisticId> {
    match design {
        DesignSpec::TwoLevel(_) => vec![
            StatisticId::Mu2V,
            StatisticId::Mu3V,
            StatisticId::Mu4V,
            StatisticId::Mu2VSq,
            StatisticId::Mu2U(Scheme::Grp),
            StatisticId::Mu3U(Scheme::Grp),
            StatisticId::Mu4U(Scheme::Grp),
            StatisticId::Mu2USq(Scheme::Grp),
            StatisticId::Mu2U(Scheme::Obs),
            StatisticId::Mu3U(Scheme::Obs),
            StatisticId::Mu4U(Scheme::Obs),
            StatisticId::Mu2USq(Scheme::Obs),
        ],
        DesignSpec::ThreeLevel(_) => vec![
            StatisticId::Mu2W,
            StatisticId::Mu3W,
            StatisticId::Mu2V3L(Scheme::Grp),
            StatisticId::Mu3V3L(Scheme::Grp),
            StatisticId::Mu2V3L(Scheme::Obs),
            StatisticId::Mu3V3L(Scheme::Obs),
            StatisticId::Mu2U3L(Scheme::Grp),
            StatisticId::Mu3U3L(Scheme::Grp),
            StatisticId::Mu2U3L(Scheme::Obs),
            StatisticId::Mu3U3L(Scheme::Obs),
        ],
    }
}

/// Bias summary for one estimator across all replications.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub statistic: String,
    pub true_value: f64,
    /// Mean over successful replications; absent if none succeeded.
    pub mean: Option<f64>,
    /// Standard error of the mean; absent when fewer than 2 successes.
    pub se: Option<f64>,
    /// `(mean - true) / se`; absent when `se` is unavailable or zero.
    pub z: Option<f64>,
    pub reps: u64,
    /// Replications where the estimator errored (e.g. singular systems).
    pub failures: u64,
    /// Set when `se` could not be formed (R < 2 or zero spread).
    pub degenerate: bool,
}

/// RNG for one replication; depends only on `(seed, rep)`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Draw one two-level dataset: group draws `u_1..u_n` first, then unit
/// draws in group order, each by inverse-CDF on a fresh uniform.
pub fn sample_two_level(
    sizes: &[usize],
    dist_u: &DiscreteDistribution,
    dist_v: &DiscreteDistribution,
    rng: &mut impl Rng,
) -> TwoLevelData<f64> {
    let us: Vec<f64> = (0..sizes.len())
        .map(|_| dist_u.sample_f64(rng.gen::<f64>()))
        .collect();
    TwoLevelData::new(
        sizes
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                (0..j)
                    .map(|_| us[i] + dist_v.sample_f64(rng.gen::<f64>()))
                    .collect()
            })
            .collect(),
    )
}

/// Draw one three-level dataset: all `u` draws, then all `v` draws in group
/// order, then all `w` draws in subgroup order.
pub fn sample_three_level(
    sizes: &[Vec<usize>],
    dist_u: &DiscreteDistribution,
    dist_v: &DiscreteDistribution,
    dist_w: &DiscreteDistribution,
    rng: &mut impl Rng,
) -> ThreeLevelData<f64> {
    let us: Vec<f64> = (0..sizes.len())
        .map(|_| dist_u.sample_f64(rng.gen::<f64>()))
        .collect();
    let vs: Vec<Vec<f64>> = sizes
        .iter()
        .map(|g| {
            (0..g.len())
                .map(|_| dist_v.sample_f64(rng.gen::<f64>()))
                .collect()
        })
        .collect();
    ThreeLevelData::new(
        sizes
            .iter()
            .enumerate()
            .map(|(i, g)| {
                g.iter()
                    .enumerate()
                    .map(|(j, &k)| {
                        (0..k)
                            .map(|_| us[i] + vs[i][j] + dist_w.sample_f64(rng.gen::<f64>()))
                            .collect()
                    })
                    .collect()
            })
            .collect(),
    )
}

#[derive(Clone)]
struct StatAcc {
    successes: u64,
    failures: u64,
    sum: CompensatedSum<f64>,
    sum_sq: CompensatedSum<f64>,
}

impl StatAcc {
    fn new() -> Self {
        Self {
            successes: 0,
            failures: 0,
            sum: CompensatedSum::new(),
            sum_sq: CompensatedSum::new(),
        }
    }

    fn add(&mut self, value: Result<f64, ()>) {
        match value {
            Ok(x) => {
                self.successes += 1;
                self.sum.add(x);
                self.sum_sq.add(x * x);
            }
            Err(()) => self.failures += 1,
        }
    }
}

enum PlanState {
    Two(Vec<usize>, DesignSummary),
    Three(Vec<Vec<usize>>, NestedDesignSummary),
}

fn eval_stats(
    state: &PlanState,
    plan: &SimulationPlan,
    stats: &[StatisticId],
    rep: u64,
    out: &mut Vec<Result<f64, ()>>,
) {
    out.clear();
    let mut rng = replication_rng(plan.seed, rep);
    match state {
        PlanState::Two(sizes, summary) => {
            let data = sample_two_level(sizes, &plan.dist_u, &plan.dist_v, &mut rng);
            let within = estimate_within(&data, summary);
            let need = |scheme: Scheme| {
                stats.iter().any(|s| {
                    matches!(s,
                        StatisticId::Mu2U(x) | StatisticId::Mu3U(x)
                        | StatisticId::Mu4U(x) | StatisticId::Mu2USq(x) if *x == scheme)
                })
            };
            let grp = need(Scheme::Grp)
                .then(|| estimate_between_grp(&data, summary, &within));
            let obs = need(Scheme::Obs)
                .then(|| estimate_between_obs(&data, summary, &within));
            for s in stats {
                let v = match s {
                    StatisticId::Mu2V => Ok(within.mu2v),
                    StatisticId::Mu3V => Ok(within.mu3v),
                    StatisticId::Mu4V => within.mu4v().copied().ok_or(()),
                    StatisticId::Mu2VSq => within.mu2v_sq().copied().ok_or(()),
                    StatisticId::Mu2U(x) => {
                        Ok(pick(x, &grp, &obs).mu2u)
                    }
                    StatisticId::Mu3U(x) => Ok(pick(x, &grp, &obs).mu3u),
                    StatisticId::Mu4U(x) => pick(x, &grp, &obs).mu4u().copied().ok_or(()),
                    StatisticId::Mu2USq(x) => pick(x, &grp, &obs).mu2u_sq().copied().ok_or(()),
                    other => unreachable!("{other:?} does not apply to a two-level plan"),
                };
                out.push(v);
            }
        }
        PlanState::Three(sizes, summary) => {
            let data = sample_three_level(
                sizes,
                &plan.dist_u,
                &plan.dist_v,
                plan.dist_w.as_ref().expect("validated plan"),
                &mut rng,
            );
            let est = estimate_three_level(&data, summary);
            for s in stats {
                let v = match s {
                    StatisticId::Mu2W => est.w.mu2w,
                    StatisticId::Mu3W => est.w.mu3w,
                    StatisticId::Mu2V3L(Scheme::Grp) => est.v_grp.mu2v,
                    StatisticId::Mu3V3L(Scheme::Grp) => est.v_grp.mu3v,
                    StatisticId::Mu2V3L(Scheme::Obs) => est.v_obs.mu2v,
                    StatisticId::Mu3V3L(Scheme::Obs) => est.v_obs.mu3v,
                    StatisticId::Mu2U3L(Scheme::Grp) => est.u_grp.mu2u,
                    StatisticId::Mu3U3L(Scheme::Grp) => est.u_grp.mu3u,
                    StatisticId::Mu2U3L(Scheme::Obs) => est.u_obs.mu2u,
                    StatisticId::Mu3U3L(Scheme::Obs) => est.u_obs.mu3u,
                    other => unreachable!("{other:?} does not apply to a three-level plan"),
                };
                out.push(Ok(v));
            }
        }
    }
}

fn pick<'e>(
    scheme: &Scheme,
    grp: &'e Option<crate::twolevel::BetweenEstimates2L<f64>>,
    obs: &'e Option<crate::twolevel::BetweenEstimates2L<f64>>,
) -> &'e crate::twolevel::BetweenEstimates2L<f64> {
    match scheme {
        Scheme::Grp => grp.as_ref().expect("grp estimates computed"),
        Scheme::Obs => obs.as_ref().expect("obs estimates computed"),
    }
}

/// Run the plan and report bias diagnostics for the selected estimators.
/// Identical `(plan, statistics)` inputs yield bit-identical reports
/// regardless of execution mode.
pub fn run_monte_carlo(
    plan: &SimulationPlan,
    stats: &[StatisticId],
) -> Result<Vec<BiasReport>, PlanError> {
    run_monte_carlo_mode(plan, stats, ExecMode::default())
}

pub fn run_monte_carlo_mode(
    plan: &SimulationPlan,
    stats: &[StatisticId],
    mode: ExecMode,
) -> Result<Vec<BiasReport>, PlanError> {
    plan.validate()?;
    let state = match &plan.design {
        DesignSpec::TwoLevel(sizes) => {
            PlanState::Two(sizes.clone(), DesignSummary::from_sizes(sizes))
        }
        DesignSpec::ThreeLevel(sizes) => {
            PlanState::Three(sizes.clone(), NestedDesignSummary::from_sizes(sizes))
        }
    };

    let chunks = plan.reps.div_ceil(CHUNK) as usize;
    let partials: Vec<Vec<StatAcc>> = map_indexed(chunks, mode, |ci| {
        let start = ci as u64 * CHUNK;
        let end = (start + CHUNK).min(plan.reps);
        let mut accs = vec![StatAcc::new(); stats.len()];
        let mut values = Vec::with_capacity(stats.len());
        for rep in start..end {
            eval_stats(&state, plan, stats, rep, &mut values);
            for (acc, v) in accs.iter_mut().zip(&values) {
                acc.add(*v);
            }
        }
        accs
    });

    let mut merged = vec![StatAcc::new(); stats.len()];
    for chunk in partials {
        for (m, c) in merged.iter_mut().zip(chunk) {
            m.successes += c.successes;
            m.failures += c.failures;
            m.sum.add(c.sum.value());
            m.sum_sq.add(c.sum_sq.value());
        }
    }

    Ok(stats
        .iter()
        .zip(merged)
        .map(|(s, acc)| {
            let m = acc.successes;
            let mean = (m > 0).then(|| acc.sum.value() / m as f64);
            let se = (m >= 2).then(|| {
                let sum = acc.sum.value();
                let var = ((acc.sum_sq.value() - sum * sum / m as f64) / (m - 1) as f64).max(0.0);
                (var / m as f64).sqrt()
            });
            let true_value = s.true_value(plan);
            let z = match (mean, se) {
                (Some(mean), Some(se)) if se > 0.0 => Some((mean - true_value) / se),
                _ => None,
            };
            let degenerate = m < 2 || se == Some(0.0);
            BiasReport {
                statistic: s.label(),
                true_value,
                mean,
                se,
                z,
                reps: plan.reps,
                failures: acc.failures,
                degenerate,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rademacher_plan(reps: u64, seed: u64) -> SimulationPlan {
        SimulationPlan {
            design: DesignSpec::TwoLevel(vec![3, 3, 4]),
            dist_u: DiscreteDistribution::point_mass_zero(),
            dist_v: DiscreteDistribution::rademacher(),
            dist_w: None,
            reps,
            seed,
        }
    }

    #[test]
    fn point_mass_components_sample_exactly() {
        let mut rng = replication_rng(7, 0);
        let zero = DiscreteDistribution::point_mass_zero();
        let data = sample_two_level(&[3, 3, 3], &zero, &zero, &mut rng);
        assert!(data.groups().iter().flatten().all(|&y| y == 0.0));

        let mut rng = replication_rng(7, 1);
        let data = sample_two_level(&[3, 4, 3], &zero, &DiscreteDistribution::rademacher(), &mut rng);
        assert!(data
            .groups()
            .iter()
            .flatten()
            .all(|&y| y == 1.0 || y == -1.0));
    }

    #[test]
    fn sampling_is_reproducible_per_replication() {
        let d = DiscreteDistribution::rademacher();
        let a = sample_two_level(&[3, 3, 4], &d, &d, &mut replication_rng(42, 9));
        let b = sample_two_level(&[3, 3, 4], &d, &d, &mut replication_rng(42, 9));
        assert_eq!(a, b);
        let c = sample_two_level(&[3, 3, 4], &d, &d, &mut replication_rng(42, 10));
        assert_ne!(a, c);
    }

    #[test]
    fn reports_are_bit_identical_across_modes_and_runs() {
        let plan = rademacher_plan(2000, 123);
        let stats = [StatisticId::Mu2V, StatisticId::Mu3V];
        let a = run_monte_carlo_mode(&plan, &stats, ExecMode::Sequential).unwrap();
        let b = run_monte_carlo_mode(&plan, &stats, ExecMode::default()).unwrap();
        let c = run_monte_carlo_mode(&plan, &stats, ExecMode::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn single_replication_is_flagged_degenerate() {
        let plan = rademacher_plan(1, 5);
        let reports = run_monte_carlo(&plan, &[StatisticId::Mu2V]).unwrap();
        assert_eq!(reports[0].reps, 1);
        assert!(reports[0].degenerate);
        assert!(reports[0].se.is_none());
        assert!(reports[0].z.is_none());
        assert!(reports[0].mean.is_some());
    }

    #[test]
    fn mu2v_mc_mean_lands_near_one() {
        let plan = rademacher_plan(20_000, 99);
        let reports = run_monte_carlo(&plan, &[StatisticId::Mu2V]).unwrap();
        let r = &reports[0];
        assert_eq!(r.true_value, 1.0);
        assert!(r.z.unwrap().abs() <= 5.0, "z = {:?}", r.z);
        assert_eq!(r.failures, 0);
    }

    #[test]
    fn singular_designs_count_failures_instead_of_aborting() {
        // All-J=3 design: the within fourth system is singular every
        // replication.
        let plan = SimulationPlan {
            design: DesignSpec::TwoLevel(vec![3, 3, 3]),
            dist_u: DiscreteDistribution::rademacher(),
            dist_v: DiscreteDistribution::rademacher(),
            dist_w: None,
            reps: 50,
            seed: 4,
        };
        let reports = run_monte_carlo(&plan, &[StatisticId::Mu4V, StatisticId::Mu2V]).unwrap();
        assert_eq!(reports[0].failures, 50);
        assert!(reports[0].mean.is_none());
        assert_eq!(reports[1].failures, 0);
    }

    #[test]
    fn plan_validation_errors() {
        let mut plan = rademacher_plan(10, 1);
        plan.design = DesignSpec::TwoLevel(vec![3, 3]);
        assert!(matches!(
            plan.validate(),
            Err(PlanError::Design(_))
        ));
        let plan = SimulationPlan {
            design: DesignSpec::ThreeLevel(vec![vec![3, 3, 3]; 3]),
            dist_u: DiscreteDistribution::rademacher(),
            dist_v: DiscreteDistribution::rademacher(),
            dist_w: None,
            reps: 10,
            seed: 1,
        };
        assert_eq!(plan.validate(), Err(PlanError::MissingInnerDistribution));
    }
}
