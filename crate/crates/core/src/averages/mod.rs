//! Multiple ergodic averages along integer parts of polynomials.
//!
//! An average is measured either exactly in `x` (torus rotations with
//! trigonometric observables, where every product of characters collapses to
//! an exponential sum in `n`) or by sampling a fixed low-discrepancy grid of
//! start points, whose root-mean-square deviation stands in for the `L²(μ)`
//! distance.

pub mod engine;
mod equidist;
mod gowers;
mod weyl;
mod wtrick;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::{check_observable, dot_phase, haar_integral, Observable, Point, System};
use crate::error::{Error, Result};
use crate::fixed::Phase;
use crate::polyfam::{FloorEvaluator, PolynomialFamily, RealPolynomial};
use crate::primes::{ModifiedLambda, SieveTable};

pub use equidist::{equidistribution_test, EquidistReport, EQUIDIST_THRESHOLD};
pub use gowers::gowers_norm;
pub use weyl::{prime_vs_lambda, weyl_report, weyl_sum, PhasePolynomial};
pub use wtrick::{wtrick_discrepancy, WTrickCheckpoint, WTrickReport, DEFAULT_PHI_CAP};

pub const DEFAULT_GRID: usize = 256;
pub const DEFAULT_CHECKPOINTS: [u64; 4] = [1_000, 10_000, 100_000, 1_000_000];
/// Largest number of character tuples the exact backend will expand.
pub const MAX_CHARACTER_TUPLES: usize = 4096;
/// Allowed growth factor between successive checkpoint errors.
pub const TREND_SLACK: f64 = 1.5;
const TREND_FLOOR: f64 = 1e-12;

/// How the terms `n` are weighted and normalized.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// `(1/N) Σ_{n≤N}`.
    Cesaro,
    /// `(1/(N−M)) Σ_{M<n≤N}`.
    Uniform { m: u64 },
    /// `(1/π(N)) Σ_{p≤N prime}`.
    Prime,
    /// `(1/N) Σ_{n≤N} Λ′(n)`.
    LambdaWeighted,
    /// `(1/N) Σ_{n≤N} Λ′_{w,r}(n)`, iterates taken at `Wn + r`.
    WTricked { w: u64, r: u64 },
}

impl Scheme {
    pub fn label(&self) -> String {
        match self {
            Scheme::Cesaro => "cesaro".into(),
            Scheme::Uniform { m } => format!("uniform(M={m})"),
            Scheme::Prime => "prime".into(),
            Scheme::LambdaWeighted => "lambda_weighted".into(),
            Scheme::WTricked { w, r } => format!("w_tricked(w={w},r={r})"),
        }
    }
}

/// Which polynomials drive the iterates.
#[derive(Clone, Debug)]
pub enum Iterates {
    /// `T^{[p_1(n)]}, …, T^{[p_ℓ(n)]}`.
    Family(PolynomialFamily),
    /// `T^{[q(n)]}, T^{2[q(n)]}, …, T^{ℓ[q(n)]}`.
    Furstenberg { q: RealPolynomial, ell: usize },
}

impl Iterates {
    pub fn len(&self) -> usize {
        match self {
            Iterates::Family(f) => f.len(),
            Iterates::Furstenberg { ell, .. } => *ell,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn shifted(&self, w: u64, r: u64) -> Result<Iterates> {
        let r = i64::try_from(r).map_err(|_| Error::invalid("residue too large"))?;
        Ok(match self {
            Iterates::Family(f) => Iterates::Family(f.shift_rescale(w, r)?),
            Iterates::Furstenberg { q, ell } => Iterates::Furstenberg {
                q: q.shift_rescale(w, r)?,
                ell: *ell,
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Character expansion when the system and observables allow it,
    /// sampling on `grid` points otherwise.
    Auto { grid: usize },
    Character,
    Sampling { grid: usize },
}

impl Backend {
    pub const AUTO: Backend = Backend::Auto { grid: DEFAULT_GRID };
}

#[derive(Clone, Debug)]
pub struct AverageRequest {
    pub system: System,
    pub iterates: Iterates,
    pub observables: Vec<Observable>,
    pub scheme: Scheme,
    pub checkpoints: Vec<u64>,
    pub backend: Backend,
    /// Where `value` is read off; the origin when absent.
    pub start: Option<Point>,
}

impl AverageRequest {
    pub fn new(
        system: System,
        iterates: Iterates,
        observables: Vec<Observable>,
        scheme: Scheme,
        checkpoints: Vec<u64>,
    ) -> Self {
        AverageRequest {
            system,
            iterates,
            observables,
            scheme,
            checkpoints,
            backend: Backend::AUTO,
            start: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Pass,
    Fail,
}

impl Trend {
    /// Pass when no error grows by more than [`TREND_SLACK`] from one
    /// checkpoint to the next.
    pub fn of(errors: &[f64]) -> Trend {
        let ok = errors
            .windows(2)
            .all(|w| w[1] <= TREND_SLACK * w[0] + TREND_FLOOR);
        if ok {
            Trend::Pass
        } else {
            Trend::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Trend::Pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckpointReport {
    #[serde(rename = "N")]
    pub n: u64,
    pub value: Complex64,
    pub abs_error: f64,
    /// `L²(μ)` distance to the target (or to the reference average).
    pub l2_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<Complex64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub scheme: String,
    pub backend: String,
    pub checkpoints: Vec<CheckpointReport>,
    pub target: Complex64,
    /// Judged on `l2_error`.
    pub trend: Trend,
}

impl ConvergenceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Columns `N`, `re`, `im`, `err` (the absolute error).
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("N\tre\tim\terr\n");
        for c in &self.checkpoints {
            out.push_str(&format!(
                "{}\t{:e}\t{:e}\t{:e}\n",
                c.n, c.value.re, c.value.im, c.abs_error
            ));
        }
        out
    }

    pub fn last(&self) -> &CheckpointReport {
        self.checkpoints.last().expect("reports have checkpoints")
    }
}

/// Scheme-weighted average of `∏ f_i(T^{[p_i(n)]} x)` at each checkpoint.
pub fn multi_ergodic_average(req: &AverageRequest) -> Result<ConvergenceReport> {
    let prepared = Prepared::new(req, &req.scheme)?;
    let target = req
        .observables
        .iter()
        .map(|f| haar_integral(&req.system, f))
        .product::<Result<Complex64>>()?;
    let fields = prepared.measure()?;
    let checkpoints: Vec<CheckpointReport> = req
        .checkpoints
        .iter()
        .zip(&fields)
        .map(|(&n, field)| {
            let value = field.value();
            CheckpointReport {
                n,
                value,
                abs_error: (value - target).norm(),
                l2_error: field.l2_to_constant(target),
                reference: None,
            }
        })
        .collect();
    let trend = Trend::of(&checkpoints.iter().map(|c| c.l2_error).collect::<Vec<_>>());
    Ok(ConvergenceReport {
        scheme: req.scheme.label(),
        backend: prepared.plan.label(),
        checkpoints,
        target,
        trend,
    })
}

/// The `[q(n)], 2[q(n)], …, ℓ[q(n)]` average next to its linear counterpart
/// with iterates `n, 2n, …, ℓn` under Cesàro weights.
///
/// `l2_error` is the distance between the two averages at the same `N`; the
/// target is the reference at the last checkpoint.
pub fn furstenberg_average(
    system: &System,
    q: &RealPolynomial,
    ell: usize,
    observables: &[Observable],
    scheme: &Scheme,
    checkpoints: &[u64],
    backend: Backend,
) -> Result<ConvergenceReport> {
    let mut req = AverageRequest::new(
        system.clone(),
        Iterates::Furstenberg { q: q.clone(), ell },
        observables.to_vec(),
        scheme.clone(),
        checkpoints.to_vec(),
    );
    req.backend = backend;
    let main = Prepared::new(&req, scheme)?;
    let mut linear = req.clone();
    linear.iterates = Iterates::Furstenberg {
        q: RealPolynomial::identity(q.basis()),
        ell,
    };
    let reference = Prepared::new(&linear, &Scheme::Cesaro)?;
    let (ours, theirs) = (main.measure()?, reference.measure()?);
    let target = theirs.last().expect("checkpoints validated").value();
    let checkpoints: Vec<CheckpointReport> = checkpoints
        .iter()
        .zip(ours.iter().zip(&theirs))
        .map(|(&n, (a, b))| {
            let value = a.value();
            CheckpointReport {
                n,
                value,
                abs_error: (value - target).norm(),
                l2_error: a.l2_distance(b),
                reference: Some(b.value()),
            }
        })
        .collect();
    let trend = Trend::of(&checkpoints.iter().map(|c| c.l2_error).collect::<Vec<_>>());
    Ok(ConvergenceReport {
        scheme: format!("{} vs linear cesaro", scheme.label()),
        backend: main.plan.label(),
        checkpoints,
        target,
        trend,
    })
}

/// The iterate exponents `k_i(n) = mult_i · [poly_i(n)]`.
struct Kernel {
    evals: Vec<FloorEvaluator>,
    slots: Vec<(usize, i128)>,
}

impl Kernel {
    fn new(iterates: &Iterates) -> Kernel {
        match iterates {
            Iterates::Family(f) => Kernel {
                evals: f.members().iter().map(FloorEvaluator::new).collect(),
                slots: (0..f.len()).map(|i| (i, 1)).collect(),
            },
            Iterates::Furstenberg { q, ell } => Kernel {
                evals: vec![FloorEvaluator::new(q)],
                slots: (1..=*ell as i128).map(|j| (0, j)).collect(),
            },
        }
    }

    /// Fails early if some `[p(n)]` for `n ≤ n_max` could leave `i128`.
    fn check_range(&self, n_max: u64) -> Result<()> {
        let n = n_max as f64;
        for e in &self.evals {
            let bound: f64 = e
                .polynomial()
                .to_f64_coeffs()
                .iter()
                .enumerate()
                .map(|(j, c)| c.abs() * n.powi(j as i32))
                .sum();
            if !(bound < 1e36) {
                return Err(Error::LimitExceeded(format!(
                    "iterate exponents reach {bound:e} by n = {n_max}"
                )));
            }
        }
        Ok(())
    }

    fn exponents(&self, n: u64, out: &mut Vec<i128>) {
        let floors: Vec<i128> = self.evals.iter().map(|e| e.floor_at(n as i64)).collect();
        out.clear();
        out.extend(self.slots.iter().map(|&(i, m)| m.wrapping_mul(floors[i])));
    }
}

#[derive(Clone, Debug)]
enum WeightKind {
    One,
    Prime,
    Lambda,
    Tricked(ModifiedLambda),
    /// `Λ′_{w,r}(n) − 1`.
    TrickedCentered(ModifiedLambda),
}

#[derive(Clone, Debug)]
struct Weighting {
    start: u64,
    kind: WeightKind,
    sieve: Option<Arc<SieveTable>>,
}

impl Weighting {
    fn new(scheme: &Scheme, checkpoints: &[u64]) -> Result<Weighting> {
        let n_max = *checkpoints.last().expect("checkpoints validated");
        let sieve = |limit: u64| SieveTable::new(limit.max(2)).map(Arc::new).map(Some);
        Ok(match scheme {
            Scheme::Cesaro => Weighting {
                start: 0,
                kind: WeightKind::One,
                sieve: None,
            },
            Scheme::Uniform { m } => {
                if checkpoints[0] <= *m {
                    return Err(Error::SchemeIncompatible(format!(
                        "uniform averages need M < N, got M = {m}, N = {}",
                        checkpoints[0]
                    )));
                }
                Weighting {
                    start: *m,
                    kind: WeightKind::One,
                    sieve: None,
                }
            }
            Scheme::Prime => {
                if checkpoints[0] < 2 {
                    return Err(Error::SchemeIncompatible(
                        "prime averages need N >= 2".into(),
                    ));
                }
                Weighting {
                    start: 0,
                    kind: WeightKind::Prime,
                    sieve: sieve(n_max)?,
                }
            }
            Scheme::LambdaWeighted => Weighting {
                start: 0,
                kind: WeightKind::Lambda,
                sieve: sieve(n_max)?,
            },
            Scheme::WTricked { w, r } => {
                let ml = tricked_weight(*w, *r)?;
                let limit = ml.argument(n_max);
                Weighting {
                    start: 0,
                    kind: WeightKind::Tricked(ml),
                    sieve: sieve(limit)?,
                }
            }
        })
    }

    fn weight(&self, n: u64) -> f64 {
        let sieve = || self.sieve.as_ref().expect("weighted schemes carry a sieve");
        match &self.kind {
            WeightKind::One => 1.0,
            WeightKind::Prime => {
                if sieve().is_prime(n) {
                    1.0
                } else {
                    0.0
                }
            }
            WeightKind::Lambda => sieve().lambda_prime(n),
            WeightKind::Tricked(ml) => ml.at(sieve(), n),
            WeightKind::TrickedCentered(ml) => ml.at(sieve(), n) - 1.0,
        }
    }

    fn normalizer(&self, n: u64) -> f64 {
        match &self.kind {
            WeightKind::Prime => self.sieve.as_ref().expect("sieve").pi(n) as f64,
            _ => (n - self.start) as f64,
        }
    }
}

fn tricked_weight(w: u64, r: u64) -> Result<ModifiedLambda> {
    let ml = ModifiedLambda::new(w, r)?;
    if num_integer::gcd(r, ml.big_w) != 1 {
        return Err(Error::SchemeIncompatible(format!(
            "r = {r} is not coprime to W = {}",
            ml.big_w
        )));
    }
    Ok(ml)
}

/// One product of character terms, `∏ c_i e(h_i·x)`.
#[derive(Clone, Debug)]
struct Tuple {
    freq: Vec<i64>,
    coeff: Complex64,
    /// `h_i·α` for each factor.
    betas: Vec<Phase>,
}

#[derive(Clone, Debug)]
enum Plan {
    Character { tuples: Vec<Tuple>, x0: Vec<Phase> },
    /// The start point first, then the grid.
    Sampling { points: Vec<Point> },
}

impl Plan {
    fn label(&self) -> String {
        match self {
            Plan::Character { .. } => "character".into(),
            Plan::Sampling { points } => format!("sampling(G={})", points.len() - 1),
        }
    }
}

/// A measured average as a function of the start point.
#[derive(Clone, Debug)]
enum Field {
    /// Fourier coefficients `a_H`, with the point where the value is read.
    Coeffs {
        coeffs: BTreeMap<Vec<i64>, Complex64>,
        x0: Vec<Phase>,
    },
    /// Values at the start point and then at each grid point.
    Samples(Vec<Complex64>),
}

impl Field {
    fn value(&self) -> Complex64 {
        match self {
            Field::Coeffs { coeffs, x0 } => engine::compensated_sum(
                coeffs.iter().map(|(h, a)| a * dot_phase(h, x0).unit()),
            ),
            Field::Samples(s) => s[0],
        }
    }

    fn l2_to_constant(&self, c: Complex64) -> f64 {
        match self {
            Field::Coeffs { coeffs, .. } => {
                let mut sq = engine::Neumaier::default();
                let mut zero_seen = false;
                for (h, a) in coeffs {
                    if h.iter().all(|&v| v == 0) {
                        zero_seen = true;
                        sq.add((a - c).norm_sqr());
                    } else {
                        sq.add(a.norm_sqr());
                    }
                }
                if !zero_seen {
                    sq.add(c.norm_sqr());
                }
                sq.value().max(0.0).sqrt()
            }
            Field::Samples(s) => rms(s[1..].iter().map(|v| v - c)),
        }
    }

    fn l2_distance(&self, other: &Field) -> f64 {
        match (self, other) {
            (Field::Coeffs { coeffs: a, .. }, Field::Coeffs { coeffs: b, .. }) => {
                let mut keys: Vec<&Vec<i64>> = a.keys().chain(b.keys()).collect();
                keys.sort();
                keys.dedup();
                let zero = Complex64::new(0.0, 0.0);
                let mut sq = engine::Neumaier::default();
                for k in keys {
                    let d = a.get(k).copied().unwrap_or(zero) - b.get(k).copied().unwrap_or(zero);
                    sq.add(d.norm_sqr());
                }
                sq.value().max(0.0).sqrt()
            }
            (Field::Samples(a), Field::Samples(b)) => {
                rms(a[1..].iter().zip(&b[1..]).map(|(x, y)| x - y))
            }
            _ => unreachable!("both sides use the same backend"),
        }
    }
}

fn rms(values: impl Iterator<Item = Complex64>) -> f64 {
    let mut sq = engine::Neumaier::default();
    let mut count = 0usize;
    for v in values {
        sq.add(v.norm_sqr());
        count += 1;
    }
    (sq.value().max(0.0) / count.max(1) as f64).sqrt()
}

/// A validated request, ready to sum.
struct Prepared {
    system: System,
    kernel: Kernel,
    observables: Vec<Observable>,
    weighting: Weighting,
    plan: Plan,
    checkpoints: Vec<u64>,
}

impl Prepared {
    fn new(req: &AverageRequest, scheme: &Scheme) -> Result<Prepared> {
        validate_common(req)?;
        let (iterates, weighting) = match scheme {
            Scheme::WTricked { w, r } => (
                req.iterates.shifted(tricked_weight(*w, *r)?.big_w, *r)?,
                Weighting::new(scheme, &req.checkpoints)?,
            ),
            _ => (req.iterates.clone(), Weighting::new(scheme, &req.checkpoints)?),
        };
        Self::assemble(req, iterates, weighting)
    }

    fn assemble(req: &AverageRequest, iterates: Iterates, weighting: Weighting) -> Result<Prepared> {
        let kernel = Kernel::new(&iterates);
        kernel.check_range(*req.checkpoints.last().expect("validated"))?;
        let start = req.start.clone().unwrap_or_else(|| req.system.origin());
        req.system.check_point(&start)?;
        let plan = match &req.backend {
            Backend::Character => character_plan(req, &start)?,
            Backend::Sampling { grid } => sampling_plan(req, start, *grid)?,
            Backend::Auto { grid } => match character_plan(req, &start) {
                Ok(plan) => plan,
                Err(_) => sampling_plan(req, start, *grid)?,
            },
        };
        Ok(Prepared {
            system: req.system.clone(),
            kernel,
            observables: req.observables.clone(),
            weighting,
            plan,
            checkpoints: req.checkpoints.clone(),
        })
    }

    fn measure(&self) -> Result<Vec<Field>> {
        match &self.plan {
            Plan::Character { tuples, x0 } => {
                let sums = engine::checkpoint_sums(
                    self.weighting.start,
                    &self.checkpoints,
                    tuples.len(),
                    |n| self.weighting.weight(n),
                    |n, buf| {
                        let mut ks = Vec::with_capacity(self.kernel.slots.len());
                        self.kernel.exponents(n, &mut ks);
                        for (slot, t) in buf.iter_mut().zip(tuples) {
                            let phase = t
                                .betas
                                .iter()
                                .zip(&ks)
                                .fold(Phase::ZERO, |acc, (b, &k)| acc.add(b.times(k)));
                            *slot = phase.unit();
                        }
                    },
                );
                Ok(self
                    .checkpoints
                    .iter()
                    .zip(sums)
                    .map(|(&n, s)| {
                        let norm = self.weighting.normalizer(n);
                        let mut coeffs: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
                        for (t, v) in tuples.iter().zip(s) {
                            *coeffs.entry(t.freq.clone()).or_default() += t.coeff * (v / norm);
                        }
                        Field::Coeffs {
                            coeffs,
                            x0: x0.clone(),
                        }
                    })
                    .collect())
            }
            Plan::Sampling { points } => {
                let sums = engine::checkpoint_sums(
                    self.weighting.start,
                    &self.checkpoints,
                    points.len(),
                    |n| self.weighting.weight(n),
                    |n, buf| {
                        let mut ks = Vec::with_capacity(self.kernel.slots.len());
                        self.kernel.exponents(n, &mut ks);
                        self.sample(points, &ks, buf);
                    },
                );
                Ok(self
                    .checkpoints
                    .iter()
                    .zip(sums)
                    .map(|(&n, s)| {
                        let norm = self.weighting.normalizer(n);
                        Field::Samples(s.into_iter().map(|v| v / norm).collect())
                    })
                    .collect())
            }
        }
    }

    /// `∏ f_i(T^{k_i} p)` for every point `p`.
    fn sample(&self, points: &[Point], ks: &[i128], out: &mut [Complex64]) {
        let fs = &self.observables;
        match &self.system {
            System::Cyclic(c) => {
                for (slot, p) in out.iter_mut().zip(points) {
                    let Point::Residue(r) = p else { unreachable!() };
                    *slot = fs
                        .iter()
                        .zip(ks)
                        .map(|(f, &k)| f.eval_residue(c.iterate(*r, k), c.modulus()))
                        .product();
                }
            }
            System::Torus(t) => {
                let disp: Vec<Vec<Phase>> = ks
                    .iter()
                    .map(|&k| t.phases().iter().map(|a| a.times(k)).collect())
                    .collect();
                let mut scratch = vec![Phase::ZERO; t.dim()];
                for (slot, p) in out.iter_mut().zip(points) {
                    let Point::Coords(x) = p else { unreachable!() };
                    let mut acc = Complex64::new(1.0, 0.0);
                    for (f, d) in fs.iter().zip(&disp) {
                        for ((s, xi), di) in scratch.iter_mut().zip(x).zip(d) {
                            *s = xi.add(*di);
                        }
                        acc *= f.eval_phases(&scratch);
                    }
                    *slot = acc;
                }
            }
            System::Affine(a) => {
                for (slot, p) in out.iter_mut().zip(points) {
                    let Point::Coords(x) = p else { unreachable!() };
                    *slot = fs
                        .iter()
                        .zip(ks)
                        .map(|(f, &k)| {
                            let (u, v) = a.iterate(x[0], x[1], k);
                            f.eval_phases(&[u, v])
                        })
                        .product();
                }
            }
            System::Heisenberg(h) => {
                for (slot, p) in out.iter_mut().zip(points) {
                    let Point::Coords(x) = p else { unreachable!() };
                    *slot = fs
                        .iter()
                        .zip(ks)
                        .map(|(f, &k)| f.eval_phases(&h.iterate([x[0], x[1], x[2]], k)))
                        .product();
                }
            }
        }
    }
}

fn validate_common(req: &AverageRequest) -> Result<()> {
    if req.checkpoints.is_empty() {
        return Err(Error::invalid("at least one checkpoint is required"));
    }
    if req.checkpoints[0] == 0 {
        return Err(Error::invalid("checkpoints must be at least 1"));
    }
    if !req.checkpoints.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("checkpoints must be strictly increasing"));
    }
    if req.checkpoints.last().is_some_and(|&n| n > i64::MAX as u64) {
        return Err(Error::LimitExceeded("checkpoint beyond i64".into()));
    }
    if req.iterates.is_empty() {
        return Err(Error::invalid("at least one iterate is required"));
    }
    if req.observables.len() != req.iterates.len() {
        return Err(Error::DimensionMismatch {
            expected: req.iterates.len(),
            got: req.observables.len(),
        });
    }
    for f in &req.observables {
        check_observable(&req.system, f)?;
    }
    Ok(())
}

fn character_plan(req: &AverageRequest, start: &Point) -> Result<Plan> {
    let System::Torus(torus) = &req.system else {
        return Err(Error::SchemeIncompatible(
            "the character backend needs a torus rotation".into(),
        ));
    };
    let mut term_lists = Vec::with_capacity(req.observables.len());
    for f in &req.observables {
        let terms = f.terms().ok_or_else(|| {
            Error::UnsupportedObservable("the character backend needs trigonometric observables".into())
        })?;
        term_lists.push(terms);
    }
    let count = term_lists
        .iter()
        .try_fold(1usize, |acc, t| acc.checked_mul(t.len()))
        .unwrap_or(usize::MAX);
    if count > MAX_CHARACTER_TUPLES {
        return Err(Error::LimitExceeded(format!(
            "{count} character tuples exceed the limit {MAX_CHARACTER_TUPLES}"
        )));
    }
    let dim = torus.dim();
    let mut tuples = vec![Tuple {
        freq: vec![0; dim],
        coeff: Complex64::new(1.0, 0.0),
        betas: Vec::new(),
    }];
    for terms in term_lists {
        let mut next = Vec::with_capacity(tuples.len() * terms.len());
        for t in &tuples {
            for (h, c) in terms {
                let mut freq = t.freq.clone();
                for (acc, v) in freq.iter_mut().zip(h) {
                    *acc += v;
                }
                let mut betas = t.betas.clone();
                betas.push(dot_phase(h, torus.phases()));
                next.push(Tuple {
                    freq,
                    coeff: t.coeff * c,
                    betas,
                });
            }
        }
        tuples = next;
    }
    let Point::Coords(x0) = start else {
        unreachable!("torus points are coordinates")
    };
    Ok(Plan::Character {
        tuples,
        x0: x0.clone(),
    })
}

fn sampling_plan(req: &AverageRequest, start: Point, grid: usize) -> Result<Plan> {
    if grid == 0 {
        return Err(Error::invalid("the sampling grid needs at least one point"));
    }
    let mut points = vec![start];
    points.extend(req.system.grid(grid));
    Ok(Plan::Sampling { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{CyclicSystem, TorusRotation};
    use crate::symreal::RadicalBasis;

    fn torus(alpha: &str) -> System {
        let basis = RadicalBasis::new(&[2, 3]).unwrap();
        let a = crate::symreal::SymbolicReal::parse(alpha, &basis).unwrap();
        System::Torus(TorusRotation::new(vec![a]).unwrap())
    }

    fn family(texts: &[&str]) -> Iterates {
        Iterates::Family(PolynomialFamily::parse(texts).unwrap())
    }

    fn obs(text: &str) -> Observable {
        Observable::parse(text).unwrap()
    }

    #[test]
    fn linear_beatty_average_tends_to_the_closed_form() {
        // Oracle: [√2 n]√2 = 2n − √2{√2 n} and {√2 n} is equidistributed, so
        // the average tends to ∫_0^1 e(−√2 u) du, of modulus
        // |sin(π√2)|/(π√2). Recomputed here from the integral itself.
        let s = std::f64::consts::SQRT_2;
        let integral = Complex64::new(0.0, 1.0) * (Complex64::new(0.0, -2.0 * std::f64::consts::PI * s).exp() - 1.0)
            / (2.0 * std::f64::consts::PI * s);
        let closed = (std::f64::consts::PI * s).sin().abs() / (std::f64::consts::PI * s);
        assert!((integral.norm() - closed).abs() < 1e-15);
        assert!((closed - 0.2170).abs() < 5e-5);

        let req = AverageRequest::new(
            torus("sqrt(2)"),
            family(&["sqrt(2)*t"]),
            vec![obs("e(x)")],
            Scheme::Cesaro,
            vec![1000, 100_000],
        );
        let rep = multi_ergodic_average(&req).unwrap();
        assert_eq!(rep.backend, "character");
        assert!((rep.last().value.norm() - closed).abs() < 0.01);
        assert_eq!(rep.target, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn constant_observables_average_to_one() {
        let systems = [
            torus("sqrt(3)"),
            System::Cyclic(CyclicSystem::new(7, 3).unwrap()),
            System::from_json(&serde_json::json!({"kind": "heisenberg", "b": ["sqrt(2)", "sqrt(3)", "0"]})).unwrap(),
        ];
        for sys in systems {
            for scheme in [Scheme::Cesaro, Scheme::Prime, Scheme::Uniform { m: 3 }] {
                let req = AverageRequest::new(
                    sys.clone(),
                    family(&["sqrt(2)*t^2", "t"]),
                    vec![obs("1"), obs("1")],
                    scheme,
                    vec![10, 200],
                );
                let rep = multi_ergodic_average(&req).unwrap();
                for c in &rep.checkpoints {
                    assert!((c.value - 1.0).norm() < 1e-12, "{c:?}");
                }
            }
        }
    }

    #[test]
    fn cesaro_equals_uniform_from_zero_bitwise() {
        let mk = |scheme| {
            let req = AverageRequest::new(
                torus("sqrt(3)"),
                family(&["sqrt(2)*t^2"]),
                vec![obs("e(x) + 0.5*e(-2x)")],
                scheme,
                vec![100, 5000, 9000],
            );
            multi_ergodic_average(&req).unwrap()
        };
        let a = mk(Scheme::Cesaro);
        let b = mk(Scheme::Uniform { m: 0 });
        assert_eq!(a.checkpoints, b.checkpoints);
    }

    #[test]
    fn identity_family_is_the_birkhoff_average() {
        let sys = System::from_json(&serde_json::json!({"kind": "affine", "alpha": "sqrt(2)"})).unwrap();
        let f = obs("e(x + y)");
        let x0 = Point::from_f64(&[0.1, 0.7]);
        let mut req = AverageRequest::new(sys.clone(), family(&["t"]), vec![f.clone()], Scheme::Cesaro, vec![3000]);
        req.start = Some(x0.clone());
        let rep = multi_ergodic_average(&req).unwrap();
        let mut p = x0;
        let mut direct = Complex64::new(0.0, 0.0);
        for _ in 0..3000 {
            p = sys.iterate(&p, 1);
            direct += f.eval_point(&sys, &p);
        }
        direct /= 3000.0;
        assert!((rep.last().value - direct).norm() < 1e-12);
    }

    #[test]
    fn backends_agree_within_the_grid_tolerance() {
        for (texts, fs) in [
            (vec!["sqrt(2)*t^2"], vec!["e(x) + 0.3"]),
            (vec!["sqrt(2)*t", "t"], vec!["e(x)", "e(-x) + e(x)"]),
        ] {
            let mk = |backend| {
                let mut req = AverageRequest::new(
                    torus("sqrt(3)"),
                    family(&texts),
                    fs.iter().map(|s| obs(s)).collect(),
                    Scheme::Cesaro,
                    vec![500, 4000],
                );
                req.backend = backend;
                req.start = Some(Point::from_f64(&[0.25]));
                multi_ergodic_average(&req).unwrap()
            };
            let exact = mk(Backend::Character);
            let sampled = mk(Backend::Sampling { grid: 64 });
            let tol = 2.0 / 64f64.sqrt();
            for (a, b) in exact.checkpoints.iter().zip(&sampled.checkpoints) {
                assert!((a.l2_error - b.l2_error).abs() <= tol);
                assert!((a.value - b.value).norm() < 1e-9, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn cyclic_grid_average_is_exact() {
        // Z_5, f = 1_{0,2}, iterates n²: the L² distance to the target
        // squared is the variance of the orbit average over residues.
        let sys = System::Cyclic(CyclicSystem::new(5, 1).unwrap());
        let f = obs("box 0 0.4");
        let mut req = AverageRequest::new(sys, family(&["t^2"]), vec![f], Scheme::Cesaro, vec![5]);
        req.backend = Backend::Sampling { grid: 256 };
        let rep = multi_ergodic_average(&req).unwrap();
        // averages over x of 1_A(x + n²): n² mod 5 = 1, 4, 4, 1, 0
        let a = [0u64, 1];
        let avg = |x: u64| -> f64 {
            (1..=5u64)
                .filter(|n| a.contains(&((x + n * n) % 5)))
                .count() as f64
                / 5.0
        };
        let var: f64 = (0..5).map(|x| (avg(x) - 0.4).powi(2)).sum::<f64>() / 5.0;
        assert!((rep.last().l2_error - var.sqrt()).abs() < 1e-12);
        assert!((rep.target.re - 0.4).abs() < 1e-15);
    }

    #[test]
    fn furstenberg_reference_cancels_for_nonresonant_characters() {
        let sys = torus("sqrt(2)");
        let q = PolynomialFamily::parse(&["sqrt(2)*t^2"]).unwrap().members()[0].clone();
        let rep = furstenberg_average(
            &sys,
            &q,
            2,
            &[obs("e(x)"), obs("e(-x)")],
            &Scheme::Cesaro,
            &[1000, 10_000],
            Backend::AUTO,
        )
        .unwrap();
        // reference: e((h1 + 2h2) n α) with h1 + 2h2 = −1
        let bound = 1.0 / (2.0 * 10_000.0 * (std::f64::consts::SQRT_2 - 1.0));
        assert!(rep.last().reference.unwrap().norm() <= bound);
    }

    #[test]
    fn scheme_preconditions() {
        let mk = |scheme, cps: Vec<u64>| {
            let req = AverageRequest::new(torus("sqrt(2)"), family(&["t"]), vec![obs("e(x)")], scheme, cps);
            multi_ergodic_average(&req)
        };
        assert!(matches!(mk(Scheme::Uniform { m: 10 }, vec![10]), Err(Error::SchemeIncompatible(_))));
        assert!(matches!(mk(Scheme::Prime, vec![1]), Err(Error::SchemeIncompatible(_))));
        assert!(matches!(mk(Scheme::WTricked { w: 5, r: 3 }, vec![10]), Err(Error::SchemeIncompatible(_))));
        assert!(mk(Scheme::Cesaro, vec![10, 10]).is_err());
        assert!(mk(Scheme::WTricked { w: 5, r: 5 }, vec![10]).is_ok());
    }

    #[test]
    fn trend_rule() {
        assert!(Trend::of(&[0.1, 0.14, 0.2]).passed());
        assert!(!Trend::of(&[0.1, 0.16]).passed());
        assert!(Trend::of(&[0.0, 1e-13]).passed());
        assert!(Trend::of(&[0.3]).passed());
    }
}
