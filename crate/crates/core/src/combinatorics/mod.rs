//! Finite shadows of multiple recurrence: integer sets in a window `[1, N]`,
//! their densities and gaps, recurrence profiles and configuration search.

mod configurations;
mod recurrence;

use std::path::Path;

use num_bigint::BigInt;
use serde::Serialize;

use crate::dynamics::{parse_exact_decimal, Arc};
use crate::error::{Error, Result};
use crate::polyfam::infer_basis;
use crate::primes::SieveTable;
use crate::symreal::{Rational, SymbolicReal};

pub use configurations::{find_configuration, solve_dilated_system, Configuration, DilatedSolution};
pub use recurrence::{
    cyclic_counterexample_search, cyclic_recurrence_average, recurrence_profile,
    rotation_recurrence_terms, CyclicViolation, RecurrenceProfile, RecurrenceSet, RotationSet,
    MAX_CYCLIC_MODULUS,
};

/// Which `n` a search or profile ranges over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NMode {
    All,
    Prime,
}

/// A subset of the window `[1, N]`, stored as a bitset (bit `i` ↔ `i + 1`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteSet {
    n: u64,
    bits: Vec<u64>,
}

impl FiniteSet {
    pub fn empty(n: u64) -> Self {
        FiniteSet {
            n,
            bits: vec![0; n.div_ceil(64) as usize],
        }
    }

    pub fn full(n: u64) -> Self {
        Self::from_predicate(n, |_| true)
    }

    pub fn from_predicate(n: u64, mut pred: impl FnMut(u64) -> bool) -> Self {
        let mut s = Self::empty(n);
        for x in 1..=n {
            if pred(x) {
                s.insert(x);
            }
        }
        s
    }

    /// Elements outside `[1, N]` are rejected.
    pub fn from_elements(n: u64, elements: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut s = Self::empty(n);
        for x in elements {
            if x < 1 || x > n {
                return Err(Error::invalid(format!("{x} lies outside the window [1, {n}]")));
            }
            s.insert(x);
        }
        Ok(s)
    }

    /// Generator expressions: `all`, `evens`, `odds`, `primes`,
    /// `interval a b`, and `beatty α θ` for `{n : frac(α n) < θ}`.
    pub fn generate(text: &str, n: u64) -> Result<Self> {
        let words: Vec<&str> = text.split_whitespace().collect();
        match words.as_slice() {
            ["all"] => Ok(Self::full(n)),
            ["evens"] => Ok(Self::from_predicate(n, |x| x % 2 == 0)),
            ["odds"] => Ok(Self::from_predicate(n, |x| x % 2 == 1)),
            ["primes"] => {
                let sieve = SieveTable::new(n.max(2))?;
                Ok(Self::from_predicate(n, |x| sieve.is_prime(x)))
            }
            ["interval", a, b] => {
                let a: u64 = a.parse().map_err(|_| Error::invalid(format!("bad bound {a:?}")))?;
                let b: u64 = b.parse().map_err(|_| Error::invalid(format!("bad bound {b:?}")))?;
                Ok(Self::from_predicate(n, |x| a <= x && x <= b))
            }
            ["beatty", alpha, theta] => {
                let rot = RotationSet::beatty(alpha, theta, n)?;
                Ok(Self::from_predicate(n, |x| rot.contains(x)))
            }
            _ => Err(Error::invalid(format!("unknown set generator {text:?}"))),
        }
    }

    /// Reads newline-separated integers; blank lines and `#` comments are
    /// skipped. The window defaults to the largest element.
    pub fn from_file(path: &Path, n: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
        let mut elements = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let x: u64 = line
                .parse()
                .map_err(|_| Error::invalid(format!("not a positive integer: {line:?}")))?;
            elements.push(x);
        }
        let n = n.unwrap_or_else(|| elements.iter().copied().max().unwrap_or(0));
        Self::from_elements(n, elements)
    }

    pub fn window(&self) -> u64 {
        self.n
    }

    pub fn insert(&mut self, x: u64) {
        assert!((1..=self.n).contains(&x), "{x} outside [1, {}]", self.n);
        let i = x - 1;
        self.bits[(i / 64) as usize] |= 1 << (i % 64);
    }

    pub fn contains(&self, x: i128) -> bool {
        if x < 1 || x > i128::from(self.n) {
            return false;
        }
        let i = (x - 1) as u64;
        self.bits[(i / 64) as usize] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> u64 {
        self.bits.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    pub fn elements(&self) -> impl Iterator<Item = u64> + '_ {
        self.bits.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                (w != 0).then(|| {
                    let b = w.trailing_zeros() as u64;
                    w &= w - 1;
                    wi as u64 * 64 + b + 1
                })
            })
        })
    }

    pub fn first(&self) -> Option<u64> {
        self.elements().next()
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.check_window(other)?;
        Ok(FiniteSet {
            n: self.n,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a & b).collect(),
        })
    }

    pub fn complement(&self) -> Self {
        let mut bits: Vec<u64> = self.bits.iter().map(|w| !w).collect();
        trim_tail(&mut bits, self.n);
        FiniteSet { n: self.n, bits }
    }

    fn check_window(&self, other: &Self) -> Result<()> {
        if self.n == other.n {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "windows differ: [1, {}] vs [1, {}]",
                self.n, other.n
            )))
        }
    }

    /// The bitset of `E − k` restricted to the window: bit `i` set iff
    /// `i + 1 + k ∈ E`.
    fn shifted_words(&self, k: i128) -> Vec<u64> {
        let len = self.bits.len();
        let mut out = vec![0u64; len];
        if k.unsigned_abs() >= u128::from(self.n) {
            return out;
        }
        let (word, bit) = ((k.unsigned_abs() / 64) as usize, (k.unsigned_abs() % 64) as u32);
        if k >= 0 {
            for (i, slot) in out.iter_mut().enumerate() {
                let lo = self.bits.get(i + word).copied().unwrap_or(0);
                let hi = self.bits.get(i + word + 1).copied().unwrap_or(0);
                *slot = if bit == 0 { lo } else { lo >> bit | hi << (64 - bit) };
            }
        } else {
            for (i, slot) in out.iter_mut().enumerate() {
                let get = |j: isize| {
                    if j < 0 {
                        0
                    } else {
                        self.bits.get(j as usize).copied().unwrap_or(0)
                    }
                };
                let j = i as isize - word as isize;
                let lo = get(j);
                let below = get(j - 1);
                *slot = if bit == 0 { lo } else { lo << bit | below >> (64 - bit) };
            }
        }
        trim_tail(&mut out, self.n);
        out
    }

    /// `{x ∈ self : x + k ∈ other}` inside the window.
    pub fn and_shifted(&self, other: &Self, k: i128) -> Result<Self> {
        self.check_window(other)?;
        let shifted = other.shifted_words(k);
        Ok(FiniteSet {
            n: self.n,
            bits: self.bits.iter().zip(&shifted).map(|(a, b)| a & b).collect(),
        })
    }

    /// `|E ∩ (E − k₁) ∩ … ∩ (E − k_ℓ)|` inside the window.
    pub fn shifted_intersection_count(&self, offsets: &[i128]) -> u64 {
        let mut acc = self.bits.clone();
        for &k in offsets {
            for (a, b) in acc.iter_mut().zip(self.shifted_words(k)) {
                *a &= b;
            }
        }
        acc.iter().map(|w| u64::from(w.count_ones())).sum()
    }
}

fn trim_tail(bits: &mut [u64], n: u64) {
    if n % 64 != 0 {
        if let Some(last) = bits.last_mut() {
            *last &= (1u64 << (n % 64)) - 1;
        }
    }
}

/// `|E ∩ [1, N]| / N`, or 0 for an empty window.
pub fn density(e: &FiniteSet) -> Rational {
    if e.n == 0 {
        return Rational::from_integer(BigInt::from(0));
    }
    Rational::new(BigInt::from(e.len()), BigInt::from(e.n))
}

/// `max_M |E ∩ [M+1, M+w]| / w`: a finite-window stand-in for upper Banach
/// density.
pub fn sliding_upper_density(e: &FiniteSet, w: u64) -> Result<Rational> {
    if w < 1 || w > e.n {
        return Err(Error::invalid(format!("window width must lie in [1, {}]", e.n)));
    }
    let mut count = (1..=w).filter(|&x| e.contains(i128::from(x))).count() as u64;
    let mut best = count;
    for start in 1..=e.n - w {
        if e.contains(i128::from(start)) {
            count -= 1;
        }
        if e.contains(i128::from(start + w)) {
            count += 1;
        }
        best = best.max(count);
    }
    Ok(Rational::new(BigInt::from(best), BigInt::from(w)))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Gaps {
    /// Largest difference between consecutive elements (0 for a singleton).
    pub interior: u64,
    /// `first − 1`.
    pub leading: u64,
    /// `N − last`.
    pub trailing: u64,
}

pub fn syndeticity_gap(e: &FiniteSet) -> Result<Gaps> {
    let mut it = e.elements();
    let first = it.next().ok_or(Error::EmptySet)?;
    let mut last = first;
    let mut interior = 0;
    for x in it {
        interior = interior.max(x - last);
        last = x;
    }
    Ok(Gaps {
        interior,
        leading: first - 1,
        trailing: e.n - last,
    })
}

/// Parses a real for set generators: the coefficient grammar, exact.
pub fn parse_real(text: &str) -> Result<SymbolicReal> {
    let basis = infer_basis(&[text])?;
    SymbolicReal::parse(text, &basis)
}

/// Arc `[u, v)` from exact decimal bounds.
pub fn parse_arc(u: &str, v: &str) -> Result<Arc> {
    Arc::exact(parse_exact_decimal(u)?, parse_exact_decimal(v)?)
}
