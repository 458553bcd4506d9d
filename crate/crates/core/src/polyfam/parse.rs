//! Recursive-descent parser for the polynomial grammar:
//!
//! ```text
//! poly   := term (("+"|"-") term)*
//! term   := coeff ("*"? var)? | var
//! var    := "t" ("^" uint)?
//! coeff  := rat | rat? "*"? "sqrt" "(" uint ")"
//! rat    := "-"? uint ("/" uint)?
//! ```
//!
//! Whitespace is insignificant and stripped before parsing; reported
//! positions are byte offsets into the original text.

use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::Zero;

use super::RealPolynomial;
use crate::error::{Error, Result};
use crate::symreal::{is_squarefree, RadicalBasis, Rational, SymbolicReal};

const MAX_DEGREE: u32 = 4096;

struct Parser<'a> {
    chars: Vec<(usize, u8)>,
    pos: usize,
    end: usize,
    basis: &'a Arc<RadicalBasis>,
}

impl<'a> Parser<'a> {
    fn new(text: &str, basis: &'a Arc<RadicalBasis>) -> Self {
        let chars = text
            .bytes()
            .enumerate()
            .filter(|(_, b)| !b.is_ascii_whitespace())
            .collect();
        Parser {
            chars,
            pos: 0,
            end: text.len(),
            basis,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.chars.get(self.pos).map(|&(_, b)| b)
    }

    fn peek_at(&self, k: usize) -> Option<u8> {
        self.chars.get(self.pos + k).map(|&(_, b)| b)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.end, |&(i, _)| i)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::syntax(self.offset(), msg))
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8) -> Result<()> {
        if self.eat(b) {
            Ok(())
        } else {
            self.err(format!("expected '{}'", b as char))
        }
    }

    fn at_sqrt(&self) -> bool {
        b"sqrt".iter().enumerate().all(|(k, &c)| self.peek_at(k) == Some(c))
    }

    fn uint(&mut self) -> Result<BigInt> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected digits");
        }
        let digits: String = self.chars[start..self.pos].iter().map(|&(_, b)| b as char).collect();
        Ok(digits.parse().expect("ascii digits"))
    }

    fn small_uint(&mut self, limit: u64) -> Result<u64> {
        let at = self.offset();
        let n = self.uint()?;
        u64::try_from(&n)
            .ok()
            .filter(|&v| v <= limit)
            .ok_or_else(|| Error::syntax(at, format!("integer too large (limit {limit})")))
    }

    fn rat(&mut self) -> Result<Rational> {
        let negative = self.eat(b'-');
        let num = self.uint()?;
        let den = if self.eat(b'/') {
            let at = self.offset();
            let d = self.uint()?;
            if d.is_zero() {
                return Err(Error::syntax(at, "zero denominator"));
            }
            d
        } else {
            BigInt::from(1)
        };
        let q = Rational::new(num, den);
        Ok(if negative { -q } else { q })
    }

    fn sqrt(&mut self) -> Result<u64> {
        self.pos += 4;
        self.expect(b'(')?;
        let d = self.small_uint(u64::MAX)?;
        self.expect(b')')?;
        if !is_squarefree(d) {
            return Err(Error::NotSquarefree(d));
        }
        if self.basis.index_of(d).is_none() {
            return Err(Error::RadicandNotInBasis(d));
        }
        Ok(d)
    }

    fn var(&mut self) -> Result<u32> {
        self.expect(b't')?;
        if self.eat(b'^') {
            Ok(self.small_uint(MAX_DEGREE as u64)? as u32)
        } else {
            Ok(1)
        }
    }

    /// Returns (coefficient, power of t).
    fn term(&mut self) -> Result<(SymbolicReal, u32)> {
        if self.peek() == Some(b't') {
            let j = self.var()?;
            return Ok((SymbolicReal::one(self.basis), j));
        }
        let rat = match self.peek() {
            Some(b'-') | Some(b'0'..=b'9') => Some(self.rat()?),
            _ => None,
        };
        // rat? "*"? "sqrt"
        let save = self.pos;
        let starred = self.eat(b'*');
        let coeff = if self.at_sqrt() {
            let d = self.sqrt()?;
            let q = rat.unwrap_or_else(|| Rational::from_integer(1.into()));
            SymbolicReal::radical(self.basis, q, d)?
        } else {
            self.pos = save;
            match rat {
                Some(q) => SymbolicReal::from_rational(self.basis, q),
                None if starred => return self.err("expected 'sqrt' after '*'"),
                None => return self.err("expected a term"),
            }
        };
        // ("*"? var)?
        let starred = self.eat(b'*');
        if self.peek() == Some(b't') {
            let j = self.var()?;
            Ok((coeff, j))
        } else if starred {
            self.err("expected 't' after '*'")
        } else {
            Ok((coeff, 0))
        }
    }

    fn poly(&mut self) -> Result<RealPolynomial> {
        let basis = self.basis;
        let mut coeffs: Vec<SymbolicReal> = Vec::new();
        let add = |coeffs: &mut Vec<SymbolicReal>, c: SymbolicReal, j: u32, neg: bool| {
            let j = j as usize;
            while coeffs.len() <= j {
                coeffs.push(SymbolicReal::zero(basis));
            }
            let c = if neg { -c } else { c };
            coeffs[j] = &coeffs[j] + &c;
        };
        let (c, j) = self.term()?;
        add(&mut coeffs, c, j, false);
        loop {
            let neg = match self.peek() {
                Some(b'+') => false,
                Some(b'-') => true,
                None => break,
                Some(other) => return self.err(format!("unexpected '{}'", other as char)),
            };
            self.pos += 1;
            let (c, j) = self.term()?;
            add(&mut coeffs, c, j, neg);
        }
        RealPolynomial::new(self.basis, coeffs)
    }
}

pub(crate) fn parse_polynomial(text: &str, basis: &Arc<RadicalBasis>) -> Result<RealPolynomial> {
    let mut p = Parser::new(text, basis);
    if p.peek().is_none() {
        return p.err("empty polynomial");
    }
    p.poly()
}

/// Smallest basis containing every squarefree radicand mentioned as
/// `sqrt(d)` in `texts`. Malformed radicands are left for the parser to
/// report.
pub fn infer_basis<S: AsRef<str>>(texts: &[S]) -> Result<Arc<RadicalBasis>> {
    let mut rads = Vec::new();
    for text in texts {
        let compact: String = text
            .as_ref()
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect();
        for (i, _) in compact.match_indices("sqrt(") {
            let digits: String = compact[i + 5..]
                .chars()
                .take_while(char::is_ascii_digit)
                .collect();
            if let Ok(d) = digits.parse::<u64>() {
                if d > 1 && is_squarefree(d) {
                    rads.push(d);
                }
            }
        }
    }
    RadicalBasis::new(&rads)
}
