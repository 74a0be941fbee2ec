//! Generic number system shared by every formula in this crate.
//!
//! All estimator and kernel code is written once against [`Scalar`] and
//! instantiated twice: with `f64` for production runs and with
//! [`BigRational`] for the exact verification oracle. Design constants are
//! always computed in exact rational arithmetic and cross the boundary into
//! a concrete scalar type through [`DualConstant`].

use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};
use std::fmt::{Debug, Display};

/// Relative determinant tolerance for the floating-point fourth-moment solve.
pub const SINGULARITY_RTOL: f64 = 1e-9;

/// An exact design constant paired with its rounded double, so that `f64`
/// pipelines never pay BigInt conversion costs in hot loops.
#[derive(Clone, Debug, PartialEq)]
pub struct DualConstant {
    exact: BigRational,
    approx: f64,
}

impl DualConstant {
    pub fn new(exact: BigRational) -> Self {
        let approx = rational_to_f64(&exact);
        Self { exact, approx }
    }

    pub fn exact(&self) -> &BigRational {
        &self.exact
    }

    pub fn approx(&self) -> f64 {
        self.approx
    }
}

impl From<BigRational> for DualConstant {
    fn from(exact: BigRational) -> Self {
        Self::new(exact)
    }
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Arithmetic interface required by the moment formulas.
pub trait Scalar:
    Clone + PartialOrd + Num + Signed + Send + Sync + Debug + Display + 'static
{
    fn from_usize(x: usize) -> Self;

    /// Exact-to-concrete conversion at the design-constant boundary.
    fn from_exact(q: &BigRational) -> Self;

    fn from_constant(c: &DualConstant) -> Self;

    /// `false` only for non-finite floats; rationals are always finite.
    fn is_finite_value(&self) -> bool;

    /// Whether this type carries exact arithmetic (drives tolerance choices).
    fn is_exact() -> bool;

    /// Singularity test for a 2x2 determinant: exact zero in rational mode,
    /// `|det| <= SINGULARITY_RTOL * scale` in float mode, where `scale` is
    /// `max(|a11*a22|, |a12*a21|)`.
    fn det_is_singular(det: &Self, scale: &Self) -> bool;
}

impl Scalar for f64 {
    fn from_usize(x: usize) -> Self {
        x as f64
    }

    fn from_exact(q: &BigRational) -> Self {
        rational_to_f64(q)
    }

    fn from_constant(c: &DualConstant) -> Self {
        c.approx
    }

    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }

    fn is_exact() -> bool {
        false
    }

    fn det_is_singular(det: &Self, scale: &Self) -> bool {
        det.abs() <= SINGULARITY_RTOL * scale
    }
}

impl Scalar for BigRational {
    fn from_usize(x: usize) -> Self {
        BigRational::from_integer(x.into())
    }

    fn from_exact(q: &BigRational) -> Self {
        q.clone()
    }

    fn from_constant(c: &DualConstant) -> Self {
        c.exact.clone()
    }

    fn is_finite_value(&self) -> bool {
        true
    }

    fn is_exact() -> bool {
        true
    }

    fn det_is_singular(det: &Self, _scale: &Self) -> bool {
        det.is_zero()
    }
}

/// `x^k` by repeated multiplication (`k` is tiny everywhere in this crate).
pub fn powi<R: Scalar>(x: &R, k: u32) -> R {
    let mut out = R::one();
    for _ in 0..k {
        out = out * x.clone();
    }
    out
}

/// Exact rational `num/den` from integers.
pub fn big_ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(num.into(), den.into())
}

/// Neumaier-compensated accumulator.
///
/// For floats this tracks the rounding residue; for exact rationals the
/// compensation term is identically zero, so one code path serves both.
#[derive(Clone, Debug)]
pub struct CompensatedSum<R: Scalar> {
    sum: R,
    comp: R,
}

impl<R: Scalar> CompensatedSum<R> {
    pub fn new() -> Self {
        Self {
            sum: R::zero(),
            comp: R::zero(),
        }
    }

    pub fn add(&mut self, x: R) {
        let t = self.sum.clone() + x.clone();
        let residue = if self.sum.abs() >= x.abs() {
            (self.sum.clone() - t.clone()) + x
        } else {
            (x - t.clone()) + self.sum.clone()
        };
        self.comp = self.comp.clone() + residue;
        self.sum = t;
    }

    pub fn value(&self) -> R {
        self.sum.clone() + self.comp.clone()
    }
}

impl<R: Scalar> Default for CompensatedSum<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Scalar> Extend<R> for CompensatedSum<R> {
    fn extend<I: IntoIterator<Item = R>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

/// Compensated sum of an iterator.
pub fn comp_sum<R: Scalar, I: IntoIterator<Item = R>>(iter: I) -> R {
    let mut acc = CompensatedSum::new();
    acc.extend(iter);
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    #[test]
    fn compensated_sum_is_exact_for_rationals() {
        let xs: Vec<BigRational> = (1..=20).map(|k| big_ratio(1, k)).collect();
        let direct: BigRational = xs.iter().cloned().fold(BigRational::zero(), |a, b| a + b);
        assert_eq!(comp_sum(xs), direct);
    }

    #[test]
    fn compensated_sum_beats_naive_float_summation() {
        // 1 + 1e-16 added 10^4 times loses the tail under naive accumulation.
        let mut naive = 1.0f64;
        let mut comp = CompensatedSum::new();
        comp.add(1.0);
        for _ in 0..10_000 {
            naive += 1e-16;
            comp.add(1e-16);
        }
        assert_eq!(naive, 1.0);
        assert!((comp.value() - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn det_singularity_rules() {
        assert!(f64::det_is_singular(&0.0, &10.0));
        assert!(f64::det_is_singular(&1e-11, &100.0));
        assert!(!f64::det_is_singular(&1e-3, &1.0));
        assert!(BigRational::det_is_singular(
            &BigRational::zero(),
            &BigRational::one()
        ));
        assert!(!BigRational::det_is_singular(
            &big_ratio(1, 1_000_000_000_000),
            &BigRational::one()
        ));
    }
}
