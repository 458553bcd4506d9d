//! Weyl sums `(1/N) Σ e(q(n))` with the argument reduced mod 1 before
//! exponentiation.

use num_complex::Complex64;

use super::engine::checkpoint_sums;
use super::{CheckpointReport, ConvergenceReport, Trend};
use crate::error::{Error, Result};
use crate::fixed::Phase;
use crate::polyfam::RealPolynomial;
use crate::primes::SieveTable;

/// A polynomial taken mod 1: coefficients as phases, so integer
/// coefficients vanish exactly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhasePolynomial {
    coeffs: Vec<Phase>,
}

impl PhasePolynomial {
    pub fn from_real(q: &RealPolynomial) -> Self {
        PhasePolynomial {
            coeffs: q.coeffs().iter().map(Phase::from_symbolic).collect(),
        }
    }

    /// Coefficients given as floats, constant term first.
    pub fn from_f64(coeffs: &[f64]) -> Self {
        PhasePolynomial {
            coeffs: coeffs.iter().map(|&c| Phase::from_f64(c)).collect(),
        }
    }

    pub fn coeffs(&self) -> &[Phase] {
        &self.coeffs
    }

    /// `q(n) mod 1`. Powers of `n` are only needed modulo `2^128`.
    pub fn at(&self, n: i64) -> Phase {
        let n = n as i128 as u128;
        let mut power: u128 = 1;
        let mut acc = Phase::ZERO;
        for c in &self.coeffs {
            acc = acc.add(c.times_wrapped(power));
            power = power.wrapping_mul(n);
        }
        acc
    }
}

/// `(1/N) Σ_{n=1}^N e(q(n))`.
pub fn weyl_sum(q: &PhasePolynomial, n: u64) -> Result<Complex64> {
    if n == 0 {
        return Err(Error::invalid("Weyl sums need N >= 1"));
    }
    Ok(weyl_sums(q, &[n])?[0])
}

fn weyl_sums(q: &PhasePolynomial, checkpoints: &[u64]) -> Result<Vec<Complex64>> {
    validate(checkpoints)?;
    let sums = checkpoint_sums(0, checkpoints, 1, |_| 1.0, |n, buf| {
        buf[0] = q.at(n as i64).unit();
    });
    Ok(sums
        .iter()
        .zip(checkpoints)
        .map(|(s, &n)| s[0] / n as f64)
        .collect())
}

fn validate(checkpoints: &[u64]) -> Result<()> {
    if checkpoints.is_empty() || checkpoints[0] == 0 {
        return Err(Error::invalid("checkpoints must be nonempty and at least 1"));
    }
    if !checkpoints.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("checkpoints must be strictly increasing"));
    }
    if checkpoints.last().is_some_and(|&n| n > i64::MAX as u64) {
        return Err(Error::LimitExceeded("checkpoint beyond i64".into()));
    }
    Ok(())
}

/// Weyl sums at each checkpoint, judged against the limit 0.
pub fn weyl_report(q: &PhasePolynomial, checkpoints: &[u64]) -> Result<ConvergenceReport> {
    let sums = weyl_sums(q, checkpoints)?;
    let checkpoints: Vec<CheckpointReport> = checkpoints
        .iter()
        .zip(sums)
        .map(|(&n, value)| CheckpointReport {
            n,
            value,
            abs_error: value.norm(),
            l2_error: value.norm(),
            reference: None,
        })
        .collect();
    let trend = Trend::of(&checkpoints.iter().map(|c| c.abs_error).collect::<Vec<_>>());
    Ok(ConvergenceReport {
        scheme: "cesaro".into(),
        backend: "weyl".into(),
        checkpoints,
        target: Complex64::new(0.0, 0.0),
        trend,
    })
}

/// The prime average `(1/π(N)) Σ_{p≤N} e(q(p))` against the `Λ′`-weighted
/// average `(1/N) Σ_{n≤N} Λ′(n) e(q(n))`.
///
/// `value` is the prime average, `reference` the weighted one and both
/// error columns hold their difference; the target is the weighted average
/// at the last checkpoint.
pub fn prime_vs_lambda(q: &PhasePolynomial, checkpoints: &[u64]) -> Result<ConvergenceReport> {
    validate(checkpoints)?;
    if checkpoints[0] < 2 {
        return Err(Error::SchemeIncompatible("prime averages need N >= 2".into()));
    }
    let sieve = SieveTable::new(*checkpoints.last().expect("validated"))?;
    let term = |n: u64, buf: &mut [Complex64]| buf[0] = q.at(n as i64).unit();
    let prime = checkpoint_sums(0, checkpoints, 1, |n| if sieve.is_prime(n) { 1.0 } else { 0.0 }, term);
    let lambda = checkpoint_sums(0, checkpoints, 1, |n| sieve.lambda_prime(n), term);
    let rows: Vec<CheckpointReport> = checkpoints
        .iter()
        .zip(prime.iter().zip(&lambda))
        .map(|(&n, (p, l))| {
            let value = p[0] / sieve.pi(n) as f64;
            let reference = l[0] / n as f64;
            CheckpointReport {
                n,
                value,
                abs_error: (value - reference).norm(),
                l2_error: (value - reference).norm(),
                reference: Some(reference),
            }
        })
        .collect();
    let target = rows.last().and_then(|c| c.reference).expect("nonempty");
    let trend = Trend::of(&rows.iter().map(|c| c.abs_error).collect::<Vec<_>>());
    Ok(ConvergenceReport {
        scheme: "prime vs lambda_weighted".into(),
        backend: "sequence".into(),
        checkpoints: rows,
        target,
        trend,
    })
}
