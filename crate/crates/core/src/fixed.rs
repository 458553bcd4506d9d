//! Fixed-point reals with 128 fractional bits.
//!
//! [`Phase`] is a point of `R/Z` held as a `u128` numerator over `2^128`.
//! Multiplying a phase by an exact integer is a wrapping multiplication, so
//! `k·α mod 1` stays accurate to `|k|·2^-128` for any `k` that fits in `i128`.
//! [`FixedReal`] keeps the integer part as well, for when `⌊k·α⌋` matters.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};

use crate::symreal::{Rational, SymbolicReal};

const TWO_POW_NEG_53: f64 = 1.0 / 9_007_199_254_740_992.0;
const TWO_POW_NEG_128: f64 = 2.938_735_877_055_719e-39;

/// Full 256-bit product of two `u128`, as `(hi, lo)`.
pub fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a0, a1) = (a & MASK, a >> 64);
    let (b0, b1) = (b & MASK, b >> 64);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & MASK) + (p10 & MASK);
    let lo = (p00 & MASK) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

/// An element of `R/Z` with 128-bit resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Phase(pub u128);

impl Phase {
    pub const ZERO: Phase = Phase(0);
    pub const HALF: Phase = Phase(1 << 127);

    /// Reduces `x` mod 1. Exact for every finite `f64` whose fractional bits
    /// lie above `2^-128`.
    pub fn from_f64(x: f64) -> Phase {
        if !x.is_finite() {
            return Phase::ZERO;
        }
        let f = x - x.floor();
        if f <= 0.0 {
            return Phase::ZERO;
        }
        let bits = f.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i32;
        let (mant, e) = if exp == 0 {
            ((bits & ((1 << 52) - 1)) as u128, -1074)
        } else {
            (((bits & ((1 << 52) - 1)) | (1 << 52)) as u128, exp - 1075)
        };
        // f = mant · 2^e with e ≤ -1
        let shift = 128 + e;
        if shift >= 0 {
            Phase(mant << shift)
        } else if shift > -128 {
            Phase(mant >> (-shift))
        } else {
            Phase::ZERO
        }
    }

    /// Nearest `f64`, kept inside `[0, 1)`.
    pub fn to_f64(self) -> f64 {
        let x = self.0 as f64 * TWO_POW_NEG_128;
        if x < 1.0 {
            x
        } else {
            1.0 - TWO_POW_NEG_53 / 2.0
        }
    }

    /// Phase of the rational `num/den` (den > 0).
    pub fn from_ratio(num: i128, den: u128) -> Phase {
        let den_i = den as i128;
        let r = num.rem_euclid(den_i) as u128;
        // floor(r · 2^128 / den) by long division in two 64-bit steps
        let mut rem = r;
        let mut out: u128 = 0;
        for _ in 0..2 {
            let mut digit: u128 = 0;
            for _ in 0..64 {
                rem <<= 1;
                digit <<= 1;
                if rem >= den {
                    rem -= den;
                    digit |= 1;
                }
            }
            out = (out << 64) | digit;
        }
        Phase(out)
    }

    /// `q mod 1`, truncated to 128 bits.
    pub fn from_rational(q: &Rational) -> Phase {
        let r = q.numer().mod_floor(q.denom());
        let scaled: BigInt = (r << 128u32) / q.denom();
        Phase(scaled.to_u128().expect("reduced numerator below 2^128"))
    }

    /// `x mod 1`. The rational part is reduced exactly, so adding an integer
    /// to `x` leaves the phase bit-for-bit unchanged.
    pub fn from_symbolic(x: &SymbolicReal) -> Phase {
        let rational = Phase::from_rational(&x.coordinate(0));
        let irrational = SymbolicReal::from_coords(x.basis(), x.coords().filter(|(k, _)| *k != 0).map(|(k, q)| (k, q.clone())));
        let frac = FixedReal::from_symbolic(&irrational).map_or(Phase::ZERO, |f| f.frac());
        rational.add(frac)
    }

    pub fn add(self, other: Phase) -> Phase {
        Phase(self.0.wrapping_add(other.0))
    }

    pub fn sub(self, other: Phase) -> Phase {
        Phase(self.0.wrapping_sub(other.0))
    }

    pub fn neg(self) -> Phase {
        Phase(self.0.wrapping_neg())
    }

    /// `k · self mod 1`, exact on the stored numerator.
    pub fn times(self, k: i128) -> Phase {
        Phase(self.0.wrapping_mul(k as u128))
    }

    /// `k · self mod 1` for an integer given only modulo `2^128`.
    pub fn times_wrapped(self, k: u128) -> Phase {
        Phase(self.0.wrapping_mul(k))
    }

    /// Product of the two representatives in `[0, 1)`, truncated.
    pub fn mul_phase(self, other: Phase) -> Phase {
        Phase(mul_wide(self.0, other.0).0)
    }

    /// `e(φ) = exp(2πiφ)`, exact at multiples of a quarter turn.
    pub fn unit(self) -> Complex64 {
        let quadrant = (self.0 >> 126) as u8;
        let t = ((self.0 << 2) >> 75) as f64 * TWO_POW_NEG_53;
        let (s, c) = (t * std::f64::consts::FRAC_PI_2).sin_cos();
        match quadrant {
            0 => Complex64::new(c, s),
            1 => Complex64::new(-s, c),
            2 => Complex64::new(-c, -s),
            _ => Complex64::new(s, -c),
        }
    }

    /// Distance to the nearest integer, `‖φ‖ ∈ [0, 1/2]`.
    pub fn dist_to_int(self) -> f64 {
        let d = self.0.min(self.0.wrapping_neg());
        Phase(d).to_f64()
    }
}

/// `int + frac / 2^128`, with `frac` the fractional part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FixedReal {
    int: i128,
    frac: u128,
}

impl FixedReal {
    pub const ZERO: FixedReal = FixedReal { int: 0, frac: 0 };

    pub fn new(int: i128, frac: Phase) -> Self {
        FixedReal { int, frac: frac.0 }
    }

    pub fn from_integer(n: i128) -> Self {
        FixedReal { int: n, frac: 0 }
    }

    /// Splits `n / 2^128` into integer and fractional parts.
    pub fn from_scaled(n: &BigInt) -> Option<Self> {
        let int = (n >> 128u32).to_i128()?;
        let low: BigInt = n - (BigInt::from(int) << 128u32);
        Some(FixedReal {
            int,
            frac: low.to_u128()?,
        })
    }

    /// `⌊x · 2^128⌋ / 2^128`, i.e. `x` truncated toward −∞ at `2^-128`
    /// (up to one further unit for irrational `x`).
    pub fn from_symbolic(x: &SymbolicReal) -> Option<Self> {
        if x.is_zero() {
            return Some(Self::ZERO);
        }
        let e = x.enclose(160);
        let scaled = (e.lo * num_rational::BigRational::from_integer(BigInt::from(1u8) << 128u32))
            .floor()
            .to_integer();
        Self::from_scaled(&scaled)
    }

    pub fn floor(self) -> i128 {
        self.int
    }

    pub fn frac(self) -> Phase {
        Phase(self.frac)
    }

    pub fn is_zero(self) -> bool {
        self.int.is_zero() && self.frac == 0
    }

    pub fn checked_neg(self) -> Option<Self> {
        if self.frac == 0 {
            Some(FixedReal {
                int: self.int.checked_neg()?,
                frac: 0,
            })
        } else {
            Some(FixedReal {
                int: self.int.checked_neg()?.checked_sub(1)?,
                frac: self.frac.wrapping_neg(),
            })
        }
    }

    pub fn checked_add(self, other: Self) -> Option<Self> {
        let (frac, carry) = self.frac.overflowing_add(other.frac);
        let int = self
            .int
            .checked_add(other.int)?
            .checked_add(i128::from(carry))?;
        Some(FixedReal { int, frac })
    }

    /// `k · self`, `None` on `i128` overflow of the integer part.
    pub fn checked_mul_int(self, k: i128) -> Option<Self> {
        let mag = k.unsigned_abs();
        let (carry, frac) = mul_wide(self.frac, mag);
        let int = self
            .int
            .checked_mul(i128::try_from(mag).ok()?)?
            .checked_add(i128::try_from(carry).ok()?)?;
        let out = FixedReal { int, frac };
        if k < 0 {
            out.checked_neg()
        } else {
            Some(out)
        }
    }

    pub fn to_f64(self) -> f64 {
        self.int as f64 + Phase(self.frac).to_f64()
    }
}
