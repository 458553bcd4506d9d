//! Real polynomials with exact multiquadratic coefficients.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symreal::{write_term, RadicalBasis, Rational, SymbolicReal};

mod floor;
mod independence;
mod parse;

pub use floor::FloorEvaluator;
pub use independence::{IndependenceVerdict, Witness};
pub use parse::infer_basis;

/// `c_0 + c_1 t + ... + c_d t^d`; the zero polynomial is stored as `[0]`.
#[derive(Clone, PartialEq, Eq)]
pub struct RealPolynomial {
    basis: Arc<RadicalBasis>,
    coeffs: Vec<SymbolicReal>,
}

impl fmt::Debug for RealPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RealPolynomial({self})")
    }
}

impl RealPolynomial {
    pub fn new(basis: &Arc<RadicalBasis>, coeffs: Vec<SymbolicReal>) -> Result<Self> {
        let mut coeffs = coeffs
            .into_iter()
            .map(|c| {
                if c.basis() == basis {
                    Ok(c)
                } else {
                    c.rebase(basis)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        while coeffs.len() > 1 && coeffs.last().is_some_and(SymbolicReal::is_zero) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(SymbolicReal::zero(basis));
        }
        Ok(RealPolynomial {
            basis: Arc::clone(basis),
            coeffs,
        })
    }

    pub fn zero(basis: &Arc<RadicalBasis>) -> Self {
        RealPolynomial {
            basis: Arc::clone(basis),
            coeffs: vec![SymbolicReal::zero(basis)],
        }
    }

    /// The polynomial `t`.
    pub fn identity(basis: &Arc<RadicalBasis>) -> Self {
        Self::from_integer_coeffs(basis, &[0, 1])
    }

    pub fn from_integer_coeffs(basis: &Arc<RadicalBasis>, coeffs: &[i64]) -> Self {
        let cs = coeffs
            .iter()
            .map(|&c| SymbolicReal::from_integer(basis, c))
            .collect();
        Self::new(basis, cs).expect("same basis")
    }

    pub fn parse(text: &str, basis: &Arc<RadicalBasis>) -> Result<Self> {
        parse::parse_polynomial(text, basis)
    }

    pub fn basis(&self) -> &Arc<RadicalBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[SymbolicReal] {
        &self.coeffs
    }

    pub fn coefficient(&self, j: usize) -> SymbolicReal {
        self.coeffs
            .get(j)
            .cloned()
            .unwrap_or_else(|| SymbolicReal::zero(&self.basis))
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0].is_zero()
    }

    /// All coefficients rational.
    pub fn is_rational(&self) -> bool {
        self.coeffs.iter().all(SymbolicReal::is_rational)
    }

    pub fn rebase(&self, target: &Arc<RadicalBasis>) -> Result<Self> {
        Self::new(target, self.coeffs.clone())
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n)
            .map(|j| self.coefficient(j).checked_add(&other.coefficient(j)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(&self.basis, coeffs)
    }

    pub fn scale(&self, c: &SymbolicReal) -> Result<Self> {
        let coeffs = self
            .coeffs
            .iter()
            .map(|x| x.checked_mul(c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(&self.basis, coeffs)
    }

    pub fn scale_rational(&self, q: &Rational) -> Self {
        let coeffs = self.coeffs.iter().map(|x| x.scale(q)).collect();
        Self::new(&self.basis, coeffs).expect("same basis")
    }

    /// Exact Horner evaluation at an integer.
    pub fn evaluate(&self, n: i64) -> SymbolicReal {
        self.evaluate_rational(&Rational::from_integer(BigInt::from(n)))
    }

    pub fn evaluate_rational(&self, x: &Rational) -> SymbolicReal {
        let mut acc = SymbolicReal::zero(&self.basis);
        for c in self.coeffs.iter().rev() {
            acc = &acc.scale(x) + c;
        }
        acc
    }

    /// `t ↦ p(W·t + r)`, expanded exactly.
    pub fn shift_rescale(&self, w: u64, r: i64) -> Result<Self> {
        if w == 0 {
            return Err(Error::invalid("shift_rescale requires W >= 1"));
        }
        let w = Rational::from_integer(BigInt::from(w));
        let r = Rational::from_integer(BigInt::from(r));
        let zero = SymbolicReal::zero(&self.basis);
        let mut acc: Vec<SymbolicReal> = vec![zero.clone()];
        for c in self.coeffs.iter().rev() {
            // acc ← acc·(W t + r) + c
            let mut next = vec![zero.clone(); acc.len() + 1];
            for (i, a) in acc.iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                next[i + 1] = &next[i + 1] + &a.scale(&w);
                next[i] = &next[i] + &a.scale(&r);
            }
            next[0] = &next[0] + c;
            acc = next;
        }
        Self::new(&self.basis, acc)
    }

    /// `([p(n)])` for `n` in `n_from..=n_to`.
    pub fn floor_orbit(&self, n_from: i64, n_to: i64) -> Result<Vec<i128>> {
        if n_from > n_to {
            return Err(Error::invalid("floor_orbit requires n_from <= n_to"));
        }
        let eval = FloorEvaluator::new(self);
        (n_from..=n_to)
            .into_par_iter()
            .map(|n| eval.try_floor_at(n))
            .collect()
    }

    pub fn to_f64_coeffs(&self) -> Vec<f64> {
        self.coeffs.iter().map(SymbolicReal::to_f64).collect()
    }
}

impl fmt::Display for RealPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut out = String::new();
        let mut first = true;
        for (j, c) in self.coeffs.iter().enumerate().rev() {
            let irrational = c.coords().filter(|(i, _)| *i != 0);
            let unit = c.coords().filter(|(i, _)| *i == 0);
            for (i, q) in irrational.chain(unit) {
                let rad = self.basis.elements()[i];
                write_term(&mut out, first, q, rad, Some(j as u32));
                first = false;
            }
        }
        f.write_str(&out)
    }
}

/// An ordered, nonempty list of polynomials over one basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolynomialFamily {
    basis: Arc<RadicalBasis>,
    members: Vec<RealPolynomial>,
}

/// Wire form of a family: polynomial strings plus the radicands they use.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyDescriptor {
    pub radicands: Vec<u64>,
    pub polynomials: Vec<String>,
}

impl PolynomialFamily {
    pub fn new(members: Vec<RealPolynomial>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::invalid("a family needs at least one polynomial"))?;
        let basis = Arc::clone(first.basis());
        let members = members
            .into_iter()
            .map(|p| p.rebase(&basis))
            .collect::<Result<Vec<_>>>()?;
        Ok(PolynomialFamily { basis, members })
    }

    /// Parses every string over the basis generated by the radicands they
    /// mention.
    pub fn parse<S: AsRef<str>>(texts: &[S]) -> Result<Self> {
        let basis = infer_basis(texts)?;
        Self::parse_with_basis(texts, &basis)
    }

    pub fn parse_with_basis<S: AsRef<str>>(texts: &[S], basis: &Arc<RadicalBasis>) -> Result<Self> {
        let members = texts
            .iter()
            .map(|t| RealPolynomial::parse(t.as_ref(), basis))
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }

    pub fn from_descriptor(desc: &FamilyDescriptor) -> Result<Self> {
        let basis = RadicalBasis::new(&desc.radicands)?;
        Self::parse_with_basis(&desc.polynomials, &basis)
    }

    pub fn to_descriptor(&self) -> FamilyDescriptor {
        FamilyDescriptor {
            radicands: self.basis.radicands().to_vec(),
            polynomials: self.members.iter().map(ToString::to_string).collect(),
        }
    }

    pub fn basis(&self) -> &Arc<RadicalBasis> {
        &self.basis
    }

    pub fn members(&self) -> &[RealPolynomial] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn max_degree(&self) -> usize {
        self.members.iter().map(RealPolynomial::degree).max().unwrap_or(0)
    }

    pub fn shift_rescale(&self, w: u64, r: i64) -> Result<Self> {
        let members = self
            .members
            .iter()
            .map(|p| p.shift_rescale(w, r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }

    /// `Σ λ_i p_i` computed exactly.
    pub fn combine(&self, lambda: &[SymbolicReal]) -> Result<RealPolynomial> {
        if lambda.len() != self.members.len() {
            return Err(Error::DimensionMismatch {
                expected: self.members.len(),
                got: lambda.len(),
            });
        }
        let mut acc = RealPolynomial::zero(&self.basis);
        for (l, p) in lambda.iter().zip(&self.members) {
            if l.is_zero() {
                continue;
            }
            acc = acc.checked_add(&p.scale(l)?)?;
        }
        Ok(acc)
    }

    /// Decides strong independence; see [`IndependenceVerdict`].
    pub fn is_strongly_independent(&self) -> Result<IndependenceVerdict> {
        independence::decide(self)
    }
}

impl SymbolicReal {
    /// Parses the constant-coefficient sublanguage, e.g. `"3/2*sqrt(6) - 1/4"`.
    pub fn parse(text: &str, basis: &Arc<RadicalBasis>) -> Result<Self> {
        let p = parse::parse_polynomial(text, basis)?;
        if p.degree() > 0 {
            return Err(Error::syntax(0, "constant expected, found a power of t"));
        }
        Ok(p.coefficient(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(texts: &[&str]) -> PolynomialFamily {
        PolynomialFamily::parse(texts).unwrap()
    }

    fn poly(text: &str) -> RealPolynomial {
        fam(&[text]).members()[0].clone()
    }

    fn q(n: i64) -> Rational {
        Rational::from_integer(n.into())
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(poly("t").evaluate(5).to_rational(), Some(q(5)));
        let p = poly("sqrt(2)*t^2");
        let b = p.basis().clone();
        assert_eq!(p.evaluate(3), SymbolicReal::radical(&b, q(9), 2).unwrap());
        let p = poly("sqrt(2)*t^2 + t");
        let expect = &SymbolicReal::radical(&b, q(4), 2).unwrap() + &SymbolicReal::from_integer(&b, 2);
        assert_eq!(p.evaluate(2), expect);
    }

    #[test]
    fn floor_orbit_examples() {
        assert_eq!(poly("sqrt(2)*t^2").floor_orbit(1, 3).unwrap(), vec![1, 5, 12]);
        assert_eq!(poly("t^2").floor_orbit(1, 4).unwrap(), vec![1, 4, 9, 16]);
        assert_eq!(poly("sqrt(2)*t").floor_orbit(1, 5).unwrap(), vec![1, 2, 4, 5, 7]);
        assert!(poly("t").floor_orbit(3, 2).is_err());
    }

    #[test]
    fn shift_rescale_examples() {
        let p = poly("t^2").shift_rescale(2, 1).unwrap();
        assert_eq!(p.to_string(), "4*t^2 + 4*t + 1");
        let p = poly("sqrt(2)*t").shift_rescale(3, 0).unwrap();
        assert_eq!(p.to_string(), "3*sqrt(2)*t");
        let p = poly("sqrt(2)*t^2 + t").shift_rescale(2, 1).unwrap();
        assert_eq!(p.to_string(), "4*sqrt(2)*t^2 + 4*sqrt(2)*t + 2*t + sqrt(2) + 1");
        assert!(poly("t").shift_rescale(0, 1).is_err());
    }

    #[test]
    fn shift_rescale_agrees_with_pointwise_evaluation() {
        let p = poly("sqrt(2)*t^3 - 1/3*sqrt(3)*t + 7/2");
        let s = p.shift_rescale(6, -5).unwrap();
        for n in -4..6 {
            assert_eq!(s.evaluate(n), p.evaluate(6 * n - 5));
        }
    }

    #[test]
    fn family_descriptor_roundtrip() {
        let f = fam(&["sqrt(2)*t^2+t", "sqrt(3)*t^2-t"]);
        let d = f.to_descriptor();
        assert_eq!(d.radicands, vec![2, 3]);
        let json = serde_json::to_string(&d).unwrap();
        let back: FamilyDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(PolynomialFamily::from_descriptor(&back).unwrap(), f);
        assert!(PolynomialFamily::new(vec![]).is_err());
    }

    #[test]
    fn constants_parse() {
        let b = RadicalBasis::new(&[6]).unwrap();
        let x = SymbolicReal::parse("3/2*sqrt(6) - 1/4", &b).unwrap();
        assert_eq!(x.to_string(), "3/2*sqrt(6) - 1/4");
        assert!(SymbolicReal::parse("t", &b).is_err());
    }
}
