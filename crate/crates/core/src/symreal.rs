//! Exact arithmetic in multiquadratic fields `Q(sqrt(m1), ..., sqrt(mk))`.
//!
//! A [`SymbolicReal`] is a sparse rational combination of square roots of
//! squarefree integers drawn from a [`RadicalBasis`]. Since `{1} ∪ {sqrt(d)}`
//! over distinct squarefree `d > 1` is linearly independent over `Q`, a value
//! is rational exactly when its only coordinate sits on the unit element, and
//! an irrational value is never an integer. That is what lets
//! [`SymbolicReal::floor_exact`] terminate.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Upper bound on the number of field basis elements (`2^8`).
pub const MAX_BASIS_ELEMENTS: usize = 256;

/// Starting precision for [`SymbolicReal::floor_exact`].
pub const FLOOR_START_BITS: u32 = 64;
/// Hard cap for [`SymbolicReal::floor_exact`].
pub const FLOOR_MAX_BITS: u32 = 16384;

pub fn is_squarefree(n: u64) -> bool {
    if n == 0 {
        return false;
    }
    let mut m = n;
    let mut p = 2u64;
    while p.saturating_mul(p) <= m {
        if m % p == 0 {
            m /= p;
            if m % p == 0 {
                return false;
            }
        }
        p += if p == 2 { 1 } else { 2 };
    }
    true
}

/// `sqrt(a)·sqrt(b) = s·sqrt(c)` for squarefree `a`, `b`; returns `(s, c)`.
pub fn reduced_product(a: u64, b: u64) -> (u64, u64) {
    let g = a.gcd(&b);
    (g, (a / g) * (b / g))
}

/// The set of square roots spanning a multiquadratic field.
///
/// `elements` holds every squarefree part of a product of radicands, sorted
/// ascending, so index 0 is always the unit `1`.
#[derive(Debug, Clone)]
pub struct RadicalBasis {
    radicands: Vec<u64>,
    elements: Vec<u64>,
    // row-major m×m table of (scalar, element index)
    products: Vec<(u64, usize)>,
}

impl PartialEq for RadicalBasis {
    fn eq(&self, other: &Self) -> bool {
        self.elements == other.elements
    }
}

impl Eq for RadicalBasis {}

impl RadicalBasis {
    pub fn new(radicands: &[u64]) -> Result<Arc<Self>> {
        let mut rads: Vec<u64> = radicands.to_vec();
        rads.sort_unstable();
        rads.dedup();
        for &r in &rads {
            if r <= 1 {
                return Err(Error::invalid(format!("radicand {r} must exceed 1")));
            }
            if !is_squarefree(r) {
                return Err(Error::NotSquarefree(r));
            }
        }
        let mut elements = vec![1u64];
        for &r in &rads {
            let mut next = elements.clone();
            for &e in &elements {
                let (_, c) = reduced_product(e, r);
                next.push(c);
            }
            next.sort_unstable();
            next.dedup();
            if next.len() > MAX_BASIS_ELEMENTS {
                return Err(Error::BasisTooLarge(next.len(), MAX_BASIS_ELEMENTS));
            }
            elements = next;
        }
        let m = elements.len();
        let mut products = Vec::with_capacity(m * m);
        for &a in &elements {
            for &b in &elements {
                let (s, c) = reduced_product(a, b);
                let idx = elements
                    .binary_search(&c)
                    .map_err(|_| Error::NotProductClosed(a, b))?;
                products.push((s, idx));
            }
        }
        Ok(Arc::new(RadicalBasis {
            radicands: rads,
            elements,
            products,
        }))
    }

    /// The basis of `Q` itself.
    pub fn rational() -> Arc<Self> {
        Self::new(&[]).expect("empty basis is valid")
    }

    pub fn radicands(&self) -> &[u64] {
        &self.radicands
    }

    /// Squarefree radicand of every basis element, index 0 being `1`.
    pub fn elements(&self) -> &[u64] {
        &self.elements
    }

    /// Dimension of the field over `Q`.
    pub fn dimension(&self) -> usize {
        self.elements.len()
    }

    pub fn index_of(&self, radicand: u64) -> Option<usize> {
        self.elements.binary_search(&radicand).ok()
    }

    /// `b_i · b_j = s · b_k`, returned as `(s, k)`.
    pub fn product(&self, i: usize, j: usize) -> (u64, usize) {
        self.products[i * self.elements.len() + j]
    }
}

/// An exact element of the field spanned by a [`RadicalBasis`].
#[derive(Clone)]
pub struct SymbolicReal {
    basis: Arc<RadicalBasis>,
    coords: BTreeMap<usize, Rational>,
}

impl PartialEq for SymbolicReal {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.basis, &other.basis) || self.basis == other.basis)
            && self.coords == other.coords
    }
}

impl Eq for SymbolicReal {}

impl fmt::Debug for SymbolicReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymbolicReal({self})")
    }
}

/// Certified rational enclosure `[lo, hi]` of a real number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enclosure {
    pub lo: Rational,
    pub hi: Rational,
    pub precision: u32,
}

impl Enclosure {
    pub fn width(&self) -> Rational {
        &self.hi - &self.lo
    }

    pub fn contains(&self, x: &Rational) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    /// `Some(⌊x⌋)` when the whole enclosure floors to the same integer.
    pub fn common_floor(&self) -> Option<BigInt> {
        let a = self.lo.floor().to_integer();
        let b = self.hi.floor().to_integer();
        (a == b).then_some(a)
    }
}

impl SymbolicReal {
    pub fn zero(basis: &Arc<RadicalBasis>) -> Self {
        SymbolicReal {
            basis: Arc::clone(basis),
            coords: BTreeMap::new(),
        }
    }

    pub fn from_rational(basis: &Arc<RadicalBasis>, q: Rational) -> Self {
        Self::from_coords(basis, [(0, q)])
    }

    pub fn from_integer(basis: &Arc<RadicalBasis>, n: i64) -> Self {
        Self::from_rational(basis, Rational::from_integer(n.into()))
    }

    pub fn one(basis: &Arc<RadicalBasis>) -> Self {
        Self::from_integer(basis, 1)
    }

    /// `q · sqrt(radicand)`; `radicand` must be a basis element.
    pub fn radical(basis: &Arc<RadicalBasis>, q: Rational, radicand: u64) -> Result<Self> {
        if !is_squarefree(radicand) {
            return Err(Error::NotSquarefree(radicand));
        }
        let idx = basis
            .index_of(radicand)
            .ok_or(Error::RadicandNotInBasis(radicand))?;
        Ok(Self::from_coords(basis, [(idx, q)]))
    }

    /// Builds a value from (element index, coefficient) pairs, summing repeats
    /// and dropping zeros.
    pub fn from_coords(
        basis: &Arc<RadicalBasis>,
        coords: impl IntoIterator<Item = (usize, Rational)>,
    ) -> Self {
        let mut map: BTreeMap<usize, Rational> = BTreeMap::new();
        for (idx, q) in coords {
            assert!(idx < basis.dimension(), "basis index out of range");
            *map.entry(idx).or_insert_with(Rational::zero) += q;
        }
        map.retain(|_, q| !q.is_zero());
        SymbolicReal {
            basis: Arc::clone(basis),
            coords: map,
        }
    }

    pub fn basis(&self) -> &Arc<RadicalBasis> {
        &self.basis
    }

    /// Non-zero coordinates in ascending basis-index order.
    pub fn coords(&self) -> impl Iterator<Item = (usize, &Rational)> {
        self.coords.iter().map(|(&i, q)| (i, q))
    }

    pub fn coordinate(&self, idx: usize) -> Rational {
        self.coords.get(&idx).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn is_rational(&self) -> bool {
        self.coords.keys().all(|&i| i == 0)
    }

    pub fn to_rational(&self) -> Option<Rational> {
        self.is_rational().then(|| self.coordinate(0))
    }

    fn same_basis(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.basis, &other.basis) || self.basis == other.basis {
            Ok(())
        } else {
            Err(Error::BasisMismatch)
        }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.same_basis(other)?;
        let mut coords = self.coords.clone();
        for (&i, q) in &other.coords {
            let slot = coords.entry(i).or_insert_with(Rational::zero);
            *slot += q;
            if slot.is_zero() {
                coords.remove(&i);
            }
        }
        Ok(SymbolicReal {
            basis: Arc::clone(&self.basis),
            coords,
        })
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.checked_add(&other.neg_ref())
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        self.same_basis(other)?;
        let mut acc: BTreeMap<usize, Rational> = BTreeMap::new();
        for (&i, a) in &self.coords {
            for (&j, b) in &other.coords {
                let (s, k) = self.basis.product(i, j);
                let term = a * b * Rational::from_integer(BigInt::from(s));
                *acc.entry(k).or_insert_with(Rational::zero) += term;
            }
        }
        acc.retain(|_, q| !q.is_zero());
        Ok(SymbolicReal {
            basis: Arc::clone(&self.basis),
            coords: acc,
        })
    }

    fn neg_ref(&self) -> Self {
        SymbolicReal {
            basis: Arc::clone(&self.basis),
            coords: self.coords.iter().map(|(&i, q)| (i, -q)).collect(),
        }
    }

    pub fn scale(&self, factor: &Rational) -> Self {
        if factor.is_zero() {
            return Self::zero(&self.basis);
        }
        SymbolicReal {
            basis: Arc::clone(&self.basis),
            coords: self.coords.iter().map(|(&i, q)| (i, q * factor)).collect(),
        }
    }

    /// Re-expresses the value over a basis whose element set contains every
    /// element this value uses.
    pub fn rebase(&self, target: &Arc<RadicalBasis>) -> Result<Self> {
        let mut coords = Vec::with_capacity(self.coords.len());
        for (&i, q) in &self.coords {
            let rad = self.basis.elements()[i];
            let j = target.index_of(rad).ok_or(Error::RadicandNotInBasis(rad))?;
            coords.push((j, q.clone()));
        }
        Ok(Self::from_coords(target, coords))
    }

    /// Interval `[lo, hi]` of width at most `2^-bits` containing the value.
    pub fn enclose(&self, bits: u32) -> Enclosure {
        let bits = bits.max(1);
        if self.is_rational() {
            let q = self.coordinate(0);
            return Enclosure {
                lo: q.clone(),
                hi: q,
                precision: bits,
            };
        }
        let abs_sum: Rational = self
            .coords
            .iter()
            .filter(|(&i, _)| i != 0)
            .fold(Rational::zero(), |acc, (_, q)| acc + q.abs());
        let guard = abs_sum.ceil().to_integer().bits() as u32 + 1;
        let scale_bits = bits + guard;
        let denom = Rational::from_integer(BigInt::one() << scale_bits);
        let mut lo = self.coordinate(0);
        let mut hi = lo.clone();
        for (&i, q) in &self.coords {
            if i == 0 {
                continue;
            }
            let d = BigInt::from(self.basis.elements()[i]);
            // floor(sqrt(d)·2^K) from the integer square root of d·4^K
            let s = (d << (2 * scale_bits)).sqrt();
            let r_lo = Rational::from_integer(s.clone()) / &denom;
            let r_hi = Rational::from_integer(s + 1) / &denom;
            if q.is_positive() {
                lo += q * &r_lo;
                hi += q * &r_hi;
            } else {
                lo += q * &r_hi;
                hi += q * &r_lo;
            }
        }
        Enclosure {
            lo,
            hi,
            precision: bits,
        }
    }

    /// `⌊self⌋`, rounding toward negative infinity.
    pub fn floor_exact(&self) -> Result<BigInt> {
        if let Some(q) = self.to_rational() {
            return Ok(q.floor().to_integer());
        }
        let mut bits = FLOOR_START_BITS;
        loop {
            if let Some(f) = self.enclose(bits).common_floor() {
                return Ok(f);
            }
            if bits >= FLOOR_MAX_BITS {
                return Err(Error::PrecisionExhausted(FLOOR_MAX_BITS));
            }
            bits = (bits * 2).min(FLOOR_MAX_BITS);
        }
    }

    pub fn to_f64(&self) -> f64 {
        let e = self.enclose(80);
        ((e.lo + e.hi) / Rational::from_integer(2.into()))
            .to_f64()
            .unwrap_or(f64::NAN)
    }
}

impl Neg for &SymbolicReal {
    type Output = SymbolicReal;
    fn neg(self) -> SymbolicReal {
        self.neg_ref()
    }
}

impl Neg for SymbolicReal {
    type Output = SymbolicReal;
    fn neg(self) -> SymbolicReal {
        self.neg_ref()
    }
}

// Operator sugar for values already known to share a basis; mixing bases
// through these panics, use the `checked_*` forms otherwise.
macro_rules! binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait<&SymbolicReal> for &SymbolicReal {
            type Output = SymbolicReal;
            fn $method(self, rhs: &SymbolicReal) -> SymbolicReal {
                self.$checked(rhs).expect("SymbolicReal operands over different bases")
            }
        }
        impl $trait<SymbolicReal> for SymbolicReal {
            type Output = SymbolicReal;
            fn $method(self, rhs: SymbolicReal) -> SymbolicReal {
                (&self).$method(&rhs)
            }
        }
    };
}

binop!(Add, add, checked_add);
binop!(Sub, sub, checked_sub);
binop!(Mul, mul, checked_mul);

/// Writes one grammar term `coeff [* sqrt(d)] [* t^j]`.
pub(crate) fn write_term(
    out: &mut String,
    first: bool,
    q: &Rational,
    radicand: u64,
    power: Option<u32>,
) {
    let negative = q.is_negative();
    let mag = q.abs();
    if first {
        if negative {
            out.push('-');
        }
    } else {
        out.push_str(if negative { " - " } else { " + " });
    }
    let has_factor = radicand != 1 || matches!(power, Some(j) if j > 0);
    let unit = mag.is_one();
    let mut need_star = false;
    if !unit || !has_factor || (first && negative) {
        out.push_str(&mag.numer().to_string());
        if !mag.denom().is_one() {
            out.push('/');
            out.push_str(&mag.denom().to_string());
        }
        need_star = true;
    }
    if radicand != 1 {
        if need_star {
            out.push('*');
        }
        out.push_str(&format!("sqrt({radicand})"));
        need_star = true;
    }
    match power {
        Some(0) | None => {}
        Some(j) => {
            if need_star {
                out.push('*');
            }
            out.push('t');
            if j > 1 {
                out.push_str(&format!("^{j}"));
            }
        }
    }
}

impl fmt::Display for SymbolicReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut out = String::new();
        let mut first = true;
        let irrational = self.coords.iter().filter(|(&i, _)| i != 0);
        let unit = self.coords.iter().filter(|(&i, _)| i == 0);
        for (&i, q) in irrational.chain(unit) {
            write_term(&mut out, first, q, self.basis.elements()[i], None);
            first = false;
        }
        f.write_str(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn basis() -> Arc<RadicalBasis> {
        RadicalBasis::new(&[2, 3]).unwrap()
    }

    fn sqrt(b: &Arc<RadicalBasis>, d: u64) -> SymbolicReal {
        SymbolicReal::radical(b, q(1, 1), d).unwrap()
    }

    #[test]
    fn basis_elements_are_sorted_subset_products() {
        let b = RadicalBasis::new(&[6, 2]).unwrap();
        assert_eq!(b.elements(), &[1, 2, 3, 6]);
        assert_eq!(b.product(1, 3), (2, 2)); // sqrt2·sqrt6 = 2·sqrt3
        assert!(matches!(RadicalBasis::new(&[8]), Err(Error::NotSquarefree(8))));
        assert!(RadicalBasis::new(&[1]).is_err());
        let big: Vec<u64> = vec![2, 3, 5, 7, 11, 13, 17, 19, 23];
        assert!(matches!(RadicalBasis::new(&big), Err(Error::BasisTooLarge(..))));
    }

    #[test]
    fn addition_examples() {
        let b = RadicalBasis::new(&[2, 3]).unwrap();
        let r2 = sqrt(&b, 2);
        assert!((&r2 + &(-&r2)).is_zero());
        let half = SymbolicReal::from_rational(&b, q(1, 2));
        let lhs = &(&half + &r2) + &half;
        assert_eq!(lhs, &SymbolicReal::one(&b) + &r2);
        let sum = &(&r2 + &sqrt(&b, 3)) + &sqrt(&b, 6);
        assert_eq!(sum.coords().count(), 3);
        assert_eq!(sum.to_string(), "sqrt(2) + sqrt(3) + sqrt(6)");
    }

    #[test]
    fn multiplication_examples() {
        let b = basis();
        let r2 = sqrt(&b, 2);
        assert_eq!(&r2 * &r2, SymbolicReal::from_integer(&b, 2));
        assert_eq!(&r2 * &sqrt(&b, 3), sqrt(&b, 6));
        let one = SymbolicReal::one(&b);
        assert_eq!(&(&one + &r2) * &(&one - &r2), SymbolicReal::from_integer(&b, -1));
    }

    #[test]
    fn basis_mismatch_is_an_error() {
        let a = sqrt(&basis(), 2);
        let other = RadicalBasis::new(&[5]).unwrap();
        let c = sqrt(&other, 5);
        assert_eq!(a.checked_add(&c), Err(Error::BasisMismatch));
        assert_eq!(a.checked_mul(&c), Err(Error::BasisMismatch));
        // structurally equal bases are interchangeable
        let again = RadicalBasis::new(&[3, 2]).unwrap();
        assert!(a.checked_add(&sqrt(&again, 3)).is_ok());
    }

    #[test]
    fn rationality() {
        let b = basis();
        assert!(SymbolicReal::from_rational(&b, q(3, 7)).is_rational());
        assert!(!sqrt(&b, 2).is_rational());
        assert!(SymbolicReal::zero(&b).is_rational());
    }

    #[test]
    fn enclosure_examples() {
        let b = basis();
        let e = sqrt(&b, 2).enclose(10);
        assert!(e.width() <= q(1, 1024));
        assert!(e.lo.to_f64().unwrap() <= 1.414_213_56 && e.hi.to_f64().unwrap() >= 1.414_213_57);
        let e = SymbolicReal::from_rational(&b, q(3, 4)).enclose(50);
        assert_eq!((e.lo.clone(), e.hi.clone()), (q(3, 4), q(3, 4)));
        let e = (&sqrt(&b, 2) + &sqrt(&b, 3)).enclose(20);
        assert!(e.width() <= q(1, 1 << 20));
        assert!(e.contains(&q(314_626_437, 100_000_000)));
    }

    #[test]
    fn floor_examples() {
        let b = basis();
        assert_eq!(
            SymbolicReal::from_rational(&b, q(7, 2)).floor_exact().unwrap(),
            3.into()
        );
        assert_eq!(
            SymbolicReal::from_rational(&b, q(-7, 2)).floor_exact().unwrap(),
            (-4).into()
        );
        assert_eq!(sqrt(&b, 2).scale(&q(9, 1)).floor_exact().unwrap(), 12.into());
        assert_eq!((-sqrt(&b, 2)).floor_exact().unwrap(), (-2).into());
    }

    #[test]
    fn display_forms() {
        let b = RadicalBasis::new(&[6]).unwrap();
        let x = &SymbolicReal::radical(&b, q(3, 2), 6).unwrap()
            + &SymbolicReal::from_rational(&b, q(-1, 4));
        assert_eq!(x.to_string(), "3/2*sqrt(6) - 1/4");
        let y = SymbolicReal::radical(&b, q(-1, 1), 6).unwrap();
        assert_eq!(y.to_string(), "-1*sqrt(6)");
        assert_eq!(SymbolicReal::zero(&b).to_string(), "0");
    }

    #[test]
    fn squarefree_predicate() {
        let sf: Vec<u64> = (1..=30).filter(|&n| is_squarefree(n)).collect();
        assert_eq!(
            sf,
            vec![1, 2, 3, 5, 6, 7, 10, 11, 13, 14, 15, 17, 19, 21, 22, 23, 26, 29, 30]
        );
    }

    fn arb_symreal() -> impl Strategy<Value = SymbolicReal> {
        proptest::collection::vec((-20i64..20, 1i64..9), 4).prop_map(|cs| {
            let b = basis();
            SymbolicReal::from_coords(&b, cs.into_iter().enumerate().map(|(i, (n, d))| (i, q(n, d))))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn ring_axioms(a in arb_symreal(), b in arb_symreal(), c in arb_symreal()) {
            let zero = SymbolicReal::zero(a.basis());
            let one = SymbolicReal::one(a.basis());
            prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&a + &b, &b + &a);
            prop_assert_eq!(&a * &b, &b * &a);
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            prop_assert_eq!(&a + &zero, a.clone());
            prop_assert_eq!(&a * &one, a.clone());
            prop_assert!((&a + &(-&a)).is_zero());
        }

        #[test]
        fn floor_agrees_with_a_wide_enclosure(a in arb_symreal()) {
            let fl = a.floor_exact().unwrap();
            let e = a.enclose(200);
            prop_assert!(Rational::from_integer(fl.clone()) <= e.hi);
            prop_assert!(Rational::from_integer(fl + 1) > e.lo);
        }
    }
}
