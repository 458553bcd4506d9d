//! Searches for `m, m + [p_1(n)], …, m + [p_ℓ(n)] ∈ E` and for solutions of
//! `c_i x_i − c_0 x_0 = [p_i(n)]` with every `x_i ∈ E`.

use num_traits::ToPrimitive;
use serde::Serialize;

use super::recurrence::offsets_at;
use super::{FiniteSet, NMode};
use crate::error::{Error, Result};
use crate::polyfam::{FloorEvaluator, PolynomialFamily};
use crate::primes::SieveTable;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Configuration {
    pub m: u64,
    pub n: u64,
    pub offsets: Vec<i64>,
}

/// Exact `[p_i(n)]`, bypassing the fast evaluator.
fn exact_offsets(family: &PolynomialFamily, n: u64) -> Result<Vec<i128>> {
    let n = i64::try_from(n).map_err(|_| Error::LimitExceeded("n beyond i64".into()))?;
    family
        .members()
        .iter()
        .map(|p| {
            p.evaluate(n)
                .floor_exact()?
                .to_i128()
                .ok_or_else(|| Error::LimitExceeded("offset beyond i128".into()))
        })
        .collect()
}

impl Configuration {
    /// Rechecks from scratch: offsets recomputed exactly, all nonzero, and
    /// `m` and every `m + offset` in `E`.
    pub fn validate(&self, e: &FiniteSet, family: &PolynomialFamily) -> Result<bool> {
        let offsets = exact_offsets(family, self.n)?;
        let recorded: Vec<i128> = self.offsets.iter().map(|&k| i128::from(k)).collect();
        let m = i128::from(self.m);
        Ok(offsets == recorded
            && offsets.iter().all(|&k| k != 0)
            && e.contains(m)
            && offsets.iter().all(|&k| e.contains(m + k)))
    }
}

fn candidate_ns(mode: NMode, n_max: u64) -> Result<Box<dyn Iterator<Item = u64>>> {
    Ok(match mode {
        NMode::All => Box::new(1..=n_max),
        NMode::Prime => {
            let sieve = SieveTable::new(n_max.max(2))?;
            let primes: Vec<u64> = sieve
                .primes()
                .iter()
                .map(|&p| u64::from(p))
                .take_while(|&p| p <= n_max)
                .collect();
            Box::new(primes.into_iter())
        }
    })
}

/// The first configuration in `(n, m)` order with `n ≤ n_max` (prime `n`
/// in prime mode), or `None`.
pub fn find_configuration(
    e: &FiniteSet,
    family: &PolynomialFamily,
    n_max: u64,
    mode: NMode,
) -> Result<Option<Configuration>> {
    let evals: Vec<FloorEvaluator> = family.members().iter().map(FloorEvaluator::new).collect();
    let window = i128::from(e.window());
    for n in candidate_ns(mode, n_max)? {
        let ks = offsets_at(&evals, n)?;
        if ks.iter().any(|&k| k == 0 || k.abs() >= window) {
            continue;
        }
        let mut hits = e.clone();
        for &k in &ks {
            hits = hits.and_shifted(e, k)?;
        }
        if let Some(m) = hits.first() {
            return Ok(Some(Configuration {
                m,
                n,
                offsets: ks.iter().map(|&k| k as i64).collect(),
            }));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DilatedSolution {
    pub xs: Vec<u64>,
    pub n: u64,
}

impl DilatedSolution {
    pub fn validate(&self, e: &FiniteSet, dilates: &[u64], family: &PolynomialFamily) -> Result<bool> {
        let offsets = exact_offsets(family, self.n)?;
        let c0x0 = i128::from(dilates[0]) * i128::from(self.xs[0]);
        Ok(self.xs.len() == dilates.len()
            && self.xs.iter().all(|&x| e.contains(i128::from(x)))
            && offsets
                .iter()
                .zip(&dilates[1..])
                .zip(&self.xs[1..])
                .all(|((&k, &c), &x)| i128::from(c) * i128::from(x) - c0x0 == k))
    }
}

/// The first `(n, x_0)` with `x_i ∈ E` and `c_i x_i − c_0 x_0 = [p_i(n)]`
/// for all `i`, found by intersecting `E` with the sets
/// `{x_0 : (c_0 x_0 + [p_i(n)]) / c_i ∈ E}`.
pub fn solve_dilated_system(
    e: &FiniteSet,
    dilates: &[u64],
    family: &PolynomialFamily,
    n_max: u64,
) -> Result<Option<DilatedSolution>> {
    if dilates.len() != family.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: family.len() + 1,
            got: dilates.len(),
        });
    }
    if dilates.contains(&0) {
        return Err(Error::invalid("dilates must be at least 1"));
    }
    let window = e.window();
    let c0 = i128::from(dilates[0]);
    let evals: Vec<FloorEvaluator> = family.members().iter().map(FloorEvaluator::new).collect();
    let elements: Vec<u64> = e.elements().collect();
    for n in 1..=n_max {
        let ks = offsets_at(&evals, n)?;
        let mut cand = e.clone();
        for (&k, &c) in ks.iter().zip(&dilates[1..]) {
            let mut reach = FiniteSet::empty(window);
            for &x in &elements {
                // c_i x − k = c_0 x_0
                let v = i128::from(c) * i128::from(x) - k;
                if v > 0 && v % c0 == 0 && v / c0 <= i128::from(window) {
                    reach.insert((v / c0) as u64);
                }
            }
            cand = cand.intersection(&reach)?;
            if cand.is_empty() {
                break;
            }
        }
        if let Some(x0) = cand.first() {
            let mut xs = vec![x0];
            for (&k, &c) in ks.iter().zip(&dilates[1..]) {
                xs.push(((c0 * i128::from(x0) + k) / i128::from(c)) as u64);
            }
            return Ok(Some(DilatedSolution { xs, n }));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(texts: &[&str]) -> PolynomialFamily {
        PolynomialFamily::parse(texts).unwrap()
    }

    #[test]
    fn full_window_takes_the_first_admissible_n() {
        let e = FiniteSet::full(100);
        let f = fam(&["t^2 - 1", "2*t"]);
        let c = find_configuration(&e, &f, 10, NMode::All).unwrap().unwrap();
        assert_eq!((c.m, c.n, c.offsets.clone()), (1, 2, vec![3, 4]));
        assert!(c.validate(&e, &f).unwrap());
    }

    #[test]
    fn evens_along_a_beatty_sequence() {
        // [√2 n] = 1, 2, 4, 5, 7, …; the first even value is at n = 2
        let floors: Vec<i64> = (1..=5).map(|n| (n as f64 * std::f64::consts::SQRT_2).floor() as i64).collect();
        assert_eq!(floors, vec![1, 2, 4, 5, 7]);
        let e = FiniteSet::generate("evens", 100).unwrap();
        let f = fam(&["sqrt(2)*t"]);
        let c = find_configuration(&e, &f, 100, NMode::All).unwrap().unwrap();
        assert_eq!((c.m, c.n), (2, 2));
        assert!(c.validate(&e, &f).unwrap());
    }

    #[test]
    fn prime_mode_configuration_in_a_beatty_set() {
        let e = FiniteSet::generate("beatty sqrt(3) 0.4", 10_000).unwrap();
        let f = fam(&["sqrt(2)*t^2 + t", "sqrt(3)*t^2 - t"]);
        let c = find_configuration(&e, &f, 100, NMode::Prime).unwrap().unwrap();
        assert!(c.n <= 100 && crate::primes::is_prime_u64(c.n));
        assert!(c.validate(&e, &f).unwrap());
    }

    #[test]
    fn tampered_configurations_fail_validation() {
        let e = FiniteSet::generate("evens", 100).unwrap();
        let f = fam(&["sqrt(2)*t"]);
        let bad = Configuration { m: 2, n: 3, offsets: vec![2] };
        assert!(!bad.validate(&e, &f).unwrap());
        let odd = Configuration { m: 3, n: 2, offsets: vec![2] };
        assert!(!odd.validate(&e, &f).unwrap());
    }

    #[test]
    fn dilated_systems() {
        let f = fam(&["sqrt(2)*t"]);
        let full = FiniteSet::full(50);
        let s = solve_dilated_system(&full, &[1, 1], &f, 10).unwrap().unwrap();
        assert_eq!(s, DilatedSolution { xs: vec![1, 2], n: 1 });
        assert!(s.validate(&full, &[1, 1], &f).unwrap());

        assert!(solve_dilated_system(&FiniteSet::empty(50), &[1, 1], &f, 10).unwrap().is_none());

        let evens = FiniteSet::generate("evens", 50).unwrap();
        let s = solve_dilated_system(&evens, &[1, 1], &fam(&["t"]), 10).unwrap().unwrap();
        assert_eq!(s, DilatedSolution { xs: vec![2, 4], n: 2 });

        let s = solve_dilated_system(&full, &[2, 3], &f, 10).unwrap().unwrap();
        assert!(s.validate(&full, &[2, 3], &f).unwrap());
        assert_eq!(s.n, 1);
    }
}
