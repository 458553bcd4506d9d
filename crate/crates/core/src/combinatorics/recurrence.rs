//! Recurrence profiles `n ↦ d(E ∩ (E − [p_1(n)]) ∩ … ∩ (E − [p_ℓ(n)]))` and
//! the exhaustive search for cyclic sets that fall below `d(E)^{ℓ+1}`.

use num_bigint::BigInt;
use num_integer::Integer;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use super::{parse_arc, parse_real, FiniteSet, NMode};
use crate::dynamics::Arc;
use crate::error::{Error, Result};
use crate::fixed::Phase;
use crate::polyfam::{FloorEvaluator, PolynomialFamily};
use crate::primes::SieveTable;
use crate::symreal::{Rational, SymbolicReal};

/// Exhaustive cyclic searches enumerate all `2^m` subsets, so `m` is capped.
pub const MAX_CYCLIC_MODULUS: u64 = 16;

/// A set whose shifted intersections can be counted inside a window.
pub trait RecurrenceSet: Sync {
    fn window(&self) -> u64;
    fn size(&self) -> u64;
    /// `#{m ∈ [1, N] : m ∈ E and m + k ∈ E for every offset k}`.
    fn intersection_count(&self, offsets: &[i128]) -> u64;
    /// Whether `m + k` beyond the window is counted as absent.
    fn truncates(&self) -> bool;
}

impl RecurrenceSet for FiniteSet {
    fn window(&self) -> u64 {
        FiniteSet::window(self)
    }

    fn size(&self) -> u64 {
        self.len()
    }

    fn intersection_count(&self, offsets: &[i128]) -> u64 {
        self.shifted_intersection_count(offsets)
    }

    fn truncates(&self) -> bool {
        true
    }
}

/// `E = {m ≥ 1 : frac(α m) ∈ A}` for an arc `A`, seen through `[1, N]`.
///
/// Membership is defined for every integer, so shifted copies need no
/// window truncation. For irrational `α`, counts come from the sorted
/// fractional parts `{α m}`, so a shifted intersection costs a few binary
/// searches.
#[derive(Clone, Debug)]
pub struct RotationSet {
    alpha: SymbolicReal,
    phase: Phase,
    rational: Option<(BigInt, BigInt)>,
    arc: Arc,
    n: u64,
    sorted: Vec<u128>,
}

/// Arc `[start, start + len)` of the circle in `2^-128` units; `len = None`
/// is the whole circle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct PhaseArc {
    start: u128,
    len: Option<u128>,
}

impl PhaseArc {
    fn from_arc(arc: &Arc) -> PhaseArc {
        match arc.phase_bounds() {
            (0, None) => PhaseArc { start: 0, len: None },
            (lo, None) => PhaseArc {
                start: lo,
                len: Some(lo.wrapping_neg()),
            },
            (lo, Some(hi)) => PhaseArc {
                start: lo,
                len: Some(hi - lo),
            },
        }
    }

    fn shifted_back(self, beta: Phase) -> PhaseArc {
        PhaseArc {
            start: self.start.wrapping_sub(beta.0),
            len: self.len,
        }
    }

    fn intersect(self, other: PhaseArc) -> Vec<PhaseArc> {
        let (l1, l2) = match (self.len, other.len) {
            (None, _) => return vec![other],
            (_, None) => return vec![self],
            (Some(a), Some(b)) => (a, b),
        };
        let mut out = Vec::with_capacity(2);
        let d = other.start.wrapping_sub(self.start);
        if d < l1 {
            out.push(PhaseArc {
                start: other.start,
                len: Some(l2.min(l1 - d)),
            });
        }
        let d = self.start.wrapping_sub(other.start);
        if d != 0 && d < l2 {
            out.push(PhaseArc {
                start: self.start,
                len: Some(l1.min(l2 - d)),
            });
        }
        out.retain(|a| a.len != Some(0));
        out
    }

    fn measure(self) -> f64 {
        match self.len {
            None => 1.0,
            Some(l) => Phase(l).to_f64(),
        }
    }

    /// Number of entries of the sorted slice inside the arc.
    fn count_in(self, sorted: &[u128]) -> u64 {
        let Some(len) = self.len else {
            return sorted.len() as u64;
        };
        let below = |x: u128| sorted.partition_point(|&v| v < x);
        match self.start.checked_add(len) {
            Some(end) => (below(end) - below(self.start)) as u64,
            None => {
                let end = self.start.wrapping_add(len);
                (sorted.len() - below(self.start) + below(end)) as u64
            }
        }
    }
}

fn intersect_all(arcs: &[PhaseArc]) -> Vec<PhaseArc> {
    let mut acc = vec![arcs[0]];
    for a in &arcs[1..] {
        acc = acc.iter().flat_map(|x| x.intersect(*a)).collect();
        if acc.is_empty() {
            break;
        }
    }
    acc
}

impl RotationSet {
    pub fn new(alpha: SymbolicReal, arc: Arc, n: u64) -> Self {
        let phase = Phase::from_symbolic(&alpha);
        let rational = alpha
            .to_rational()
            .map(|q| (q.numer().clone(), q.denom().clone()));
        let sorted = if rational.is_none() {
            let mut v: Vec<u128> = (1..=n).map(|m| phase.times(i128::from(m)).0).collect();
            v.par_sort_unstable();
            v
        } else {
            Vec::new()
        };
        RotationSet {
            alpha,
            phase,
            rational,
            arc,
            n,
            sorted,
        }
    }

    /// `{m : frac(α m) < θ}` with `α` in the coefficient grammar.
    pub fn beatty(alpha: &str, theta: &str, n: u64) -> Result<Self> {
        Ok(Self::new(parse_real(alpha)?, parse_arc("0", theta)?, n))
    }

    pub fn alpha(&self) -> &SymbolicReal {
        &self.alpha
    }

    pub fn arc(&self) -> &Arc {
        &self.arc
    }

    /// Membership of any integer, inside the window or not.
    pub fn contains(&self, m: u64) -> bool {
        self.contains_int(i128::from(m))
    }

    fn contains_int(&self, m: i128) -> bool {
        match &self.rational {
            Some((p, q)) => {
                let r = (p * BigInt::from(m)).mod_floor(q);
                let q64 = q.try_into().ok();
                let r64 = (&r).try_into().ok();
                match (r64, q64) {
                    (Some(r), Some(q)) => self.arc.contains_ratio(r, q),
                    _ => {
                        let x = Rational::new(r, q.clone());
                        let (u, v) = self.arc.endpoints();
                        &x >= u && &x < v
                    }
                }
            }
            None => self.arc.contains(self.phase.times(m)),
        }
    }

    pub fn to_finite_set(&self) -> FiniteSet {
        FiniteSet::from_predicate(self.n, |m| self.contains(m))
    }
}

impl RecurrenceSet for RotationSet {
    fn window(&self) -> u64 {
        self.n
    }

    fn size(&self) -> u64 {
        self.intersection_count(&[])
    }

    fn intersection_count(&self, offsets: &[i128]) -> u64 {
        if self.rational.is_some() {
            return (1..=i128::from(self.n))
                .filter(|&m| self.contains_int(m) && offsets.iter().all(|&k| self.contains_int(m + k)))
                .count() as u64;
        }
        let base = PhaseArc::from_arc(&self.arc);
        let mut arcs = vec![base];
        arcs.extend(offsets.iter().map(|&k| base.shifted_back(self.phase.times(k))));
        intersect_all(&arcs)
            .iter()
            .map(|a| a.count_in(&self.sorted))
            .sum()
    }

    fn truncates(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecurrenceProfile {
    pub mode: NMode,
    pub window: u64,
    /// The `n` the profile ranges over.
    pub ns: Vec<u64>,
    /// `|E ∩ (E − [p_1(n)]) ∩ …| / N` for each `n`.
    pub terms: Vec<f64>,
    pub average: f64,
    pub density: f64,
    pub ell: usize,
    /// `density^{ℓ+1}`.
    pub bound: f64,
    /// `ℓ · max|offset| / N` for truncated windows, else 0.
    pub edge: f64,
    pub verdict: bool,
}

fn ns_for(mode: NMode, n_max: u64) -> Result<Vec<u64>> {
    Ok(match mode {
        NMode::All => (1..=n_max).collect(),
        NMode::Prime => {
            let sieve = SieveTable::new(n_max.max(2))?;
            sieve
                .primes()
                .iter()
                .map(|&p| u64::from(p))
                .take_while(|&p| p <= n_max)
                .collect()
        }
    })
}

pub(crate) fn offsets_at(evals: &[FloorEvaluator], n: u64) -> Result<Vec<i128>> {
    let n = i64::try_from(n).map_err(|_| Error::LimitExceeded("n beyond i64".into()))?;
    evals.iter().map(|e| e.try_floor_at(n)).collect()
}

/// Profile of shifted-intersection densities for `n ≤ n_max` (or prime
/// `n ≤ n_max`), with the verdict `average ≥ d(E)^{ℓ+1} − edge`.
pub fn recurrence_profile<E: RecurrenceSet>(
    e: &E,
    family: &PolynomialFamily,
    n_max: u64,
    mode: NMode,
) -> Result<RecurrenceProfile> {
    let window = e.window();
    if window == 0 {
        return Err(Error::EmptySet);
    }
    let ns = ns_for(mode, n_max)?;
    if ns.is_empty() {
        return Err(Error::invalid("no n in range"));
    }
    let evals: Vec<FloorEvaluator> = family.members().iter().map(FloorEvaluator::new).collect();
    let offsets: Vec<Vec<i128>> = ns
        .par_iter()
        .map(|&n| offsets_at(&evals, n))
        .collect::<Result<_>>()?;
    let max_offset = offsets
        .iter()
        .flatten()
        .map(|k| k.unsigned_abs())
        .max()
        .unwrap_or(0);
    if e.truncates() && 2 * max_offset > u128::from(window) {
        return Err(Error::LimitExceeded(format!(
            "offsets reach {max_offset}, beyond half the window {window}; lower n_max or widen the window"
        )));
    }
    let counts: Vec<u64> = offsets.par_iter().map(|ks| e.intersection_count(ks)).collect();
    let total: u128 = counts.iter().map(|&c| u128::from(c)).sum();
    let terms = counts.iter().map(|&c| c as f64 / window as f64).collect();
    let average = total as f64 / (ns.len() as f64 * window as f64);
    let density = e.size() as f64 / window as f64;
    let ell = family.len();
    let bound = density.powi(ell as i32 + 1);
    let edge = if e.truncates() {
        ell as f64 * max_offset as f64 / window as f64
    } else {
        0.0
    };
    Ok(RecurrenceProfile {
        mode,
        window,
        ns,
        terms,
        average,
        density,
        ell,
        bound,
        edge,
        verdict: average >= bound - edge,
    })
}

/// Exact measures `μ(A ∩ (A − [p_1(n)]α) ∩ …)` on the circle rotation by
/// `α`, for `n = 1..=n_max`.
pub fn rotation_recurrence_terms(
    alpha: &SymbolicReal,
    arc: &Arc,
    family: &PolynomialFamily,
    n_max: u64,
) -> Result<Vec<f64>> {
    let phase = Phase::from_symbolic(alpha);
    let base = PhaseArc::from_arc(arc);
    let evals: Vec<FloorEvaluator> = family.members().iter().map(FloorEvaluator::new).collect();
    (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let ks = offsets_at(&evals, n)?;
            let mut arcs = vec![base];
            arcs.extend(ks.iter().map(|&k| base.shifted_back(phase.times(k))));
            Ok(intersect_all(&arcs).iter().map(|a| a.measure()).sum())
        })
        .collect()
}

fn serialize_rational<S: Serializer>(q: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&q.to_string())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CyclicViolation {
    pub m: u64,
    pub set: Vec<u64>,
    #[serde(serialize_with = "serialize_rational")]
    pub average: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub bound: Rational,
}

fn poly_mod(coeffs: &[i64], n: u64, m: u64) -> u64 {
    let m = i128::from(m);
    let n = i128::from(n) % m;
    coeffs
        .iter()
        .rev()
        .fold(0i128, |acc, &c| (acc * n + i128::from(c)).rem_euclid(m)) as u64
}

/// Exact period average `(1/m) Σ_{n=1}^m |A ∩ (A − p_1(n)) ∩ …| / m` on `Z_m`
/// for integer polynomials (coefficients constant term first).
pub fn cyclic_recurrence_average(m: u64, set: &[u64], polys: &[Vec<i64>]) -> Result<Rational> {
    if m == 0 {
        return Err(Error::invalid("Z_m needs m >= 1"));
    }
    let mut member = vec![false; m as usize];
    for &a in set {
        if a >= m {
            return Err(Error::invalid(format!("{a} is not a residue mod {m}")));
        }
        member[a as usize] = true;
    }
    let mut total: u64 = 0;
    for n in 1..=m {
        let ks: Vec<u64> = polys.iter().map(|p| poly_mod(p, n, m)).collect();
        total += (0..m)
            .filter(|&x| member[x as usize] && ks.iter().all(|&k| member[((x + k) % m) as usize]))
            .count() as u64;
    }
    Ok(Rational::new(BigInt::from(total), BigInt::from(m * m)))
}

/// Every `(m, A)` with `m ≤ max_m` and `1 ≤ |A| ≤ max_size` whose period
/// average falls strictly below `(|A|/m)^{ℓ+1}`, decided exactly.
pub fn cyclic_counterexample_search(
    max_m: u64,
    max_size: u32,
    polys: &[Vec<i64>],
) -> Result<Vec<CyclicViolation>> {
    if max_m > MAX_CYCLIC_MODULUS {
        return Err(Error::LimitExceeded(format!(
            "exhaustive search needs m <= {MAX_CYCLIC_MODULUS}, got {max_m}"
        )));
    }
    if polys.is_empty() {
        return Err(Error::invalid("at least one polynomial is required"));
    }
    let ell = polys.len() as u32;
    let mut out = Vec::new();
    for m in 1..=max_m {
        let full: u32 = (1u32 << m) - 1;
        let rot = |a: u32, k: u64| -> u32 {
            // A − k = {x : x + k ∈ A}
            let k = (k % m) as u32;
            if k == 0 {
                a
            } else {
                ((a >> k) | (a << (m as u32 - k))) & full
            }
        };
        let offsets: Vec<Vec<u64>> = (1..=m)
            .map(|n| polys.iter().map(|p| poly_mod(p, n, m)).collect())
            .collect();
        let found: Vec<CyclicViolation> = (1..=full)
            .into_par_iter()
            .filter(|a| a.count_ones() <= max_size)
            .filter_map(|a| {
                let total: u64 = offsets
                    .iter()
                    .map(|ks| u64::from(ks.iter().fold(a, |acc, &k| acc & rot(a, k)).count_ones()))
                    .sum();
                let size = u64::from(a.count_ones());
                // total / m² < (size / m)^{ℓ+1}  ⇔  total · m^{ℓ−1} < size^{ℓ+1}
                let lhs = u128::from(total) * u128::from(m).pow(ell - 1);
                let rhs = u128::from(size).pow(ell + 1);
                (lhs < rhs).then(|| CyclicViolation {
                    m,
                    set: (0..m).filter(|&x| a >> x & 1 == 1).collect(),
                    average: Rational::new(BigInt::from(total), BigInt::from(m * m)),
                    bound: Rational::new(BigInt::from(size), BigInt::from(m)).pow(ell as i32 + 1),
                })
            })
            .collect();
        out.extend(found);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(a: i64, b: i64) -> Rational {
        Rational::new(BigInt::from(a), BigInt::from(b))
    }

    fn fam(texts: &[&str]) -> PolynomialFamily {
        PolynomialFamily::parse(texts).unwrap()
    }

    #[test]
    fn squares_on_z5_fall_below_the_bound() {
        // n² mod 5 over a period: 1, 4, 4, 1, 0
        let residues: Vec<u64> = (1..=5).map(|n| n * n % 5).collect();
        assert_eq!(residues, vec![1, 4, 4, 1, 0]);
        let avg = cyclic_recurrence_average(5, &[0, 2], &[vec![0, 0, 1]]).unwrap();
        assert_eq!(avg, q(2, 25));
        let found = cyclic_counterexample_search(5, 5, &[vec![0, 0, 1]]).unwrap();
        let hit = found.iter().find(|v| v.m == 5 && v.set == vec![0, 2]).unwrap();
        assert_eq!(hit.average, q(2, 25));
        assert_eq!(hit.bound, q(4, 25));
    }

    #[test]
    fn linear_recurrence_never_violates() {
        assert!(cyclic_counterexample_search(8, 8, &[vec![0, 1]]).unwrap().is_empty());
    }

    #[test]
    fn violations_are_rotation_invariant_and_never_full() {
        let found = cyclic_counterexample_search(8, 8, &[vec![0, 0, 1]]).unwrap();
        assert!(!found.is_empty());
        for v in &found {
            assert!(v.set.len() < v.m as usize);
            let moved: Vec<u64> = {
                let mut s: Vec<u64> = v.set.iter().map(|x| (x + 1) % v.m).collect();
                s.sort();
                s
            };
            let twin = found.iter().find(|w| w.m == v.m && w.set == moved).unwrap();
            assert_eq!(twin.average, v.average);
        }
    }

    #[test]
    fn full_window_profile_passes() {
        let e = FiniteSet::full(1000);
        let p = recurrence_profile(&e, &fam(&["t^2"]), 20, NMode::All).unwrap();
        assert!(p.verdict);
        assert!(p.terms.iter().zip(&p.ns).all(|(t, n)| (*t - (1000 - n * n) as f64 / 1000.0).abs() < 1e-12));
        assert!(recurrence_profile(&e, &fam(&["t^2"]), 23, NMode::All).is_err());
    }

    #[test]
    fn rotation_counts_match_membership() {
        let rot = RotationSet::beatty("sqrt(3)", "0.25", 5000).unwrap();
        let fin = rot.to_finite_set();
        for ks in [vec![], vec![7], vec![-3, 1000], vec![123_456_789]] {
            let direct = (1..=5000i128)
                .filter(|&m| rot.contains_int(m) && ks.iter().all(|&k| rot.contains_int(m + k)))
                .count() as u64;
            assert_eq!(rot.intersection_count(&ks), direct, "{ks:?}");
            if ks.iter().all(|k| k.abs() < 5000) {
                let inside = (1..=5000i128)
                    .filter(|&m| fin.contains(m) && ks.iter().all(|&k| fin.contains(m + k)))
                    .count() as u64;
                assert_eq!(fin.shifted_intersection_count(&ks), inside);
            }
        }
    }

    #[test]
    fn rational_rotation_sets_are_exact() {
        let rot = RotationSet::beatty("1/3", "1/3", 30).unwrap();
        let members: Vec<u64> = (1..=9).filter(|&m| rot.contains(m)).collect();
        assert_eq!(members, vec![3, 6, 9]);
        // no truncation: 30 + 3 still counts
        assert_eq!(rot.intersection_count(&[3]), 10);
    }

    #[test]
    fn half_beatty_set_recurs_at_the_square_of_its_density() {
        let rot = RotationSet::beatty("sqrt(3)", "1/2", 100_000).unwrap();
        let p = recurrence_profile(&rot, &fam(&["sqrt(2)*t^2 + t"]), 2000, NMode::All).unwrap();
        assert!(p.average >= 0.25 - 0.03, "{}", p.average);
    }

    #[test]
    fn arc_measure_terms() {
        let alpha = parse_real("sqrt(3)").unwrap();
        let arc = parse_arc("0", "0.25").unwrap();
        let terms = rotation_recurrence_terms(&alpha, &arc, &fam(&["t"]), 50).unwrap();
        let s3 = 3f64.sqrt();
        for (i, t) in terms.iter().enumerate() {
            let n = (i + 1) as f64;
            let frac = (n * s3).fract();
            let dist = frac.min(1.0 - frac);
            assert!((t - (0.25 - dist).max(0.0)).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn period_average_matches_double_loop(
            m in 1u64..=12,
            mask in any::<u16>(),
            c in prop::collection::vec(-5i64..6, 1..4),
        ) {
            let set: Vec<u64> = (0..m).filter(|&x| mask >> x & 1 == 1).collect();
            let mut total = 0i64;
            for n in 1..=m as i64 {
                let k: i64 = c.iter().enumerate().map(|(j, &cj)| cj * n.pow(j as u32)).sum();
                for &x in &set {
                    if set.contains(&((x as i64 + k).rem_euclid(m as i64) as u64)) {
                        total += 1;
                    }
                }
            }
            let avg = cyclic_recurrence_average(m, &set, &[c]).unwrap();
            prop_assert_eq!(avg, q(total, (m * m) as i64));
        }

        #[test]
        fn arc_intersection_counts_match_direct(
            a in 0u32..1000, b in 1u32..1000, k in -100_000i128..100_000,
        ) {
            let lo = a.min(b) as i64;
            let hi = a.max(b).max(lo as u32 + 1) as i64;
            let arc = Arc::exact(q(lo, 1000), q(hi, 1000)).unwrap();
            let rot = RotationSet::new(parse_real("sqrt(2)").unwrap(), arc, 700);
            let direct = (1..=700i128).filter(|&m| rot.contains_int(m) && rot.contains_int(m + k)).count() as u64;
            prop_assert_eq!(rot.intersection_count(&[k]), direct);
        }
    }
}
