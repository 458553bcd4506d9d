//! Fast certified `⌊p(n)⌋`.
//!
//! Evaluation goes through up to four tiers, each used only when it can
//! certify its answer:
//!
//! 1. rational polynomials: exact `i128` arithmetic over a common denominator;
//! 2. `f64` Horner with a rigorous rounding bound, accepted when `p(n)` is
//!    farther than `max(2^-20, bound)` from an integer;
//! 3. 128-bit fixed point, accepted when the truncation error cannot cross
//!    an integer;
//! 4. exact symbolic evaluation with [`SymbolicReal::floor_exact`].

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive};

use super::RealPolynomial;
use crate::error::{Error, Result};
use crate::fixed::FixedReal;
use crate::symreal::SymbolicReal;

/// Fractional parts closer than this to an integer never take the `f64` tier.
pub const FLOAT_GUARD: f64 = 1.0 / (1u64 << 20) as f64;

const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;
const F64_EXACT_INT: f64 = 9_007_199_254_740_992.0; // 2^53

/// Precompiled floor evaluator for one polynomial.
#[derive(Clone, Debug)]
pub struct FloorEvaluator {
    poly: RealPolynomial,
    rational: Option<RationalForm>,
    float: Vec<f64>,
    float_err: Vec<f64>,
    fixed: Option<Vec<FixedReal>>,
}

#[derive(Clone, Debug)]
struct RationalForm {
    numer: Vec<i128>,
    denom: i128,
}

impl FloorEvaluator {
    pub fn new(poly: &RealPolynomial) -> Self {
        let rational = if poly.is_rational() {
            rational_form(poly)
        } else {
            None
        };
        let float: Vec<f64> = poly.coeffs().iter().map(SymbolicReal::to_f64).collect();
        // to_f64 rounds the midpoint of an 80-bit enclosure
        let float_err = float
            .iter()
            .map(|c| c.abs() * f64::EPSILON + 2f64.powi(-78))
            .collect();
        let fixed = poly
            .coeffs()
            .iter()
            .map(FixedReal::from_symbolic)
            .collect::<Option<Vec<_>>>();
        FloorEvaluator {
            poly: poly.clone(),
            rational,
            float,
            float_err,
            fixed,
        }
    }

    pub fn polynomial(&self) -> &RealPolynomial {
        &self.poly
    }

    /// `⌊p(n)⌋`; panics only if the value leaves the `i128` range.
    pub fn floor_at(&self, n: i64) -> i128 {
        self.try_floor_at(n).expect("floor value outside the i128 range")
    }

    pub fn try_floor_at(&self, n: i64) -> Result<i128> {
        if let Some(r) = &self.rational {
            if let Some(v) = r.floor_at(n) {
                return Ok(v);
            }
        } else {
            if let Some(v) = self.float_tier(n) {
                return Ok(v);
            }
            if let Some(v) = self.fixed_tier(n) {
                return Ok(v);
            }
        }
        let exact = self.poly.evaluate(n).floor_exact()?;
        exact
            .to_i128()
            .ok_or_else(|| Error::LimitExceeded(format!("floor value {exact} exceeds i128")))
    }

    fn float_tier(&self, n: i64) -> Option<i128> {
        let x = n as f64;
        if x.abs() > F64_EXACT_INT {
            return None;
        }
        let ax = x.abs();
        let mut v = 0.0f64;
        let mut mag = 0.0f64;
        let mut coeff_err = 0.0f64;
        for (c, e) in self.float.iter().zip(&self.float_err).rev() {
            v = v * x + c;
            mag = mag * ax + c.abs();
            coeff_err = coeff_err * ax + e;
        }
        let d = self.float.len() as f64;
        // Horner error ≤ γ_{2d}·Σ|c_j||n|^j; doubled to cover the rounding in
        // `mag` and `coeff_err` themselves.
        let bound = 2.0 * ((2.0 * d + 2.0) * UNIT_ROUNDOFF * mag + coeff_err);
        if !v.is_finite() || !bound.is_finite() || v.abs() >= 1e30 {
            return None;
        }
        let fl = v.floor();
        let frac = v - fl;
        let margin = bound.max(FLOAT_GUARD);
        (frac > margin && 1.0 - frac > margin).then_some(fl as i128)
    }

    fn fixed_tier(&self, n: i64) -> Option<i128> {
        let coeffs = self.fixed.as_ref()?;
        let mut acc = FixedReal::ZERO;
        let mut power: i128 = 1;
        // error budget in units of 2^-128: each coefficient is off by < 2^-127
        let mut err: u128 = 1;
        let an = i128::from(n).unsigned_abs();
        let mut apow: u128 = 1;
        for (j, c) in coeffs.iter().enumerate() {
            if j > 0 {
                power = power.checked_mul(i128::from(n))?;
                apow = apow.checked_mul(an)?;
            }
            acc = acc.checked_add(c.checked_mul_int(power)?)?;
            err = err.checked_add(apow.checked_mul(2)?)?;
        }
        let frac = acc.frac().0;
        (frac > err && frac < err.wrapping_neg()).then_some(acc.floor())
    }
}

impl RationalForm {
    fn floor_at(&self, n: i64) -> Option<i128> {
        let n = i128::from(n);
        let mut acc: i128 = 0;
        for c in self.numer.iter().rev() {
            acc = acc.checked_mul(n)?.checked_add(*c)?;
        }
        Some(acc.div_euclid(self.denom))
    }
}

fn rational_form(poly: &RealPolynomial) -> Option<RationalForm> {
    let qs: Vec<_> = poly
        .coeffs()
        .iter()
        .map(|c| c.to_rational().expect("rational polynomial"))
        .collect();
    let denom = qs
        .iter()
        .fold(BigInt::one(), |acc, q| acc.lcm(q.denom()));
    let numer = qs
        .iter()
        .map(|q| (q.numer() * (&denom / q.denom())).to_i128())
        .collect::<Option<Vec<_>>>()?;
    debug_assert!(denom.is_positive());
    Some(RationalForm {
        numer,
        denom: denom.to_i128()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyfam::PolynomialFamily;
    use proptest::prelude::*;

    fn poly(text: &str) -> RealPolynomial {
        PolynomialFamily::parse(&[text]).unwrap().members()[0].clone()
    }

    fn exact(p: &RealPolynomial, n: i64) -> i128 {
        p.evaluate(n).floor_exact().unwrap().to_i128().unwrap()
    }

    #[test]
    fn tiers_agree_with_exact_floor_on_hard_values() {
        // large cubic: the f64 tier cannot certify, the fixed tier must
        let p = poly("sqrt(2)*t^3 - 7/3*sqrt(3)*t + 1/5");
        let ev = FloorEvaluator::new(&p);
        for n in [1_000_000i64, 999_983, -1_000_003, 2_000_000] {
            assert!(ev.float_tier(n).is_none());
            assert_eq!(ev.floor_at(n), exact(&p, n));
        }
    }

    #[test]
    fn irrational_part_vanishing_falls_back_to_exact() {
        let p = poly("sqrt(2)*t - sqrt(2) + 3");
        let ev = FloorEvaluator::new(&p);
        assert_eq!(ev.floor_at(1), 3);
        assert_eq!(ev.floor_at(0), exact(&p, 0));
    }

    #[test]
    fn rational_polynomials_are_exact() {
        let p = poly("1/3*t^2 - 5/7*t + 2");
        let ev = FloorEvaluator::new(&p);
        for n in -50..50 {
            assert_eq!(ev.floor_at(n), exact(&p, n));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn fast_floor_matches_exact(
            a in -9i64..10, b in -9i64..10, c in -9i64..10,
            den in 1i64..9,
            n in -3_000_000i64..3_000_000,
        ) {
            let text = format!("{a}/{den}*sqrt(2)*t^2 + {b}*sqrt(3)*t + {c}/{den}");
            let p = poly(&text);
            let ev = FloorEvaluator::new(&p);
            prop_assert_eq!(ev.floor_at(n), exact(&p, n));
        }
    }
}
