//! Concrete measure-preserving systems: cyclic rotations, torus rotations,
//! the affine skew product `(x, y) ↦ (x + α, y + x)` and the Heisenberg
//! nilsystem, plus observables with exactly known integrals.
//!
//! Continuous points are held as [`Phase`] coordinates so that iterates under
//! very large exponents `k` stay accurate: `k·α mod 1` is a wrapping integer
//! product on a 128-bit representation of `α`.

use std::fmt;
use std::ops::Neg;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{Num, ToPrimitive};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fixed::{FixedReal, Phase};
use crate::polyfam::infer_basis;
use crate::symreal::{RadicalBasis, Rational, SymbolicReal};

/// A point of one of the systems below.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Point {
    Residue(u64),
    Coords(Vec<Phase>),
}

impl Point {
    pub fn from_f64(coords: &[f64]) -> Point {
        Point::Coords(coords.iter().map(|&c| Phase::from_f64(c)).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            Point::Residue(r) => vec![*r as f64],
            Point::Coords(c) => c.iter().map(|p| p.to_f64()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CyclicSystem {
    m: u64,
    a: u64,
}

impl CyclicSystem {
    pub fn new(m: u64, a: i64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("cyclic modulus must be at least 1"));
        }
        Ok(CyclicSystem {
            m,
            a: a.rem_euclid(m as i64) as u64,
        })
    }

    pub fn modulus(&self) -> u64 {
        self.m
    }

    pub fn step(&self) -> u64 {
        self.a
    }

    pub fn iterate(&self, r: u64, k: i128) -> u64 {
        let m = u128::from(self.m);
        let k = k.rem_euclid(m as i128) as u128;
        ((u128::from(r) + k * u128::from(self.a)) % m) as u64
    }
}

#[derive(Clone, Debug)]
pub struct TorusRotation {
    alpha: Vec<SymbolicReal>,
    phases: Vec<Phase>,
}

impl TorusRotation {
    pub fn new(alpha: Vec<SymbolicReal>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::invalid("torus dimension must be at least 1"));
        }
        let phases = alpha.iter().map(Phase::from_symbolic).collect();
        Ok(TorusRotation { alpha, phases })
    }

    pub fn alpha(&self) -> &[SymbolicReal] {
        &self.alpha
    }

    /// `α mod 1` with 128-bit resolution.
    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn iterate(&self, x: &[Phase], k: i128) -> Vec<Phase> {
        x.iter()
            .zip(&self.phases)
            .map(|(x, a)| x.add(a.times(k)))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct AffineSkewSystem {
    alpha: SymbolicReal,
    phase: Phase,
}

impl AffineSkewSystem {
    pub fn new(alpha: SymbolicReal) -> Self {
        let phase = Phase::from_symbolic(&alpha);
        AffineSkewSystem { alpha, phase }
    }

    pub fn alpha(&self) -> &SymbolicReal {
        &self.alpha
    }

    /// `T^k(x, y) = (x + kα, y + kx + C(k,2)·α)`.
    pub fn iterate(&self, x: Phase, y: Phase, k: i128) -> (Phase, Phase) {
        (
            x.add(self.phase.times(k)),
            y.add(x.times(k)).add(self.phase.times_wrapped(binom2_wrapping(k))),
        )
    }
}

/// `k(k−1)/2 mod 2^128`.
fn binom2_wrapping(k: i128) -> u128 {
    let v = if k % 2 == 0 {
        (k / 2).wrapping_mul(k.wrapping_sub(1))
    } else {
        k.wrapping_mul((k - 1) / 2)
    };
    v as u128
}

/// Element `(x, y, z)` of the Heisenberg group with
/// `(x, y, z)·(x′, y′, z′) = (x + x′, y + y′, z + z′ + x·y′)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeisenbergElement<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T> HeisenbergElement<T>
where
    T: Clone + Num + Neg<Output = T>,
{
    pub fn new(x: T, y: T, z: T) -> Self {
        HeisenbergElement { x, y, z }
    }

    pub fn identity() -> Self {
        HeisenbergElement::new(T::zero(), T::zero(), T::zero())
    }

    pub fn mul(&self, o: &Self) -> Self {
        HeisenbergElement {
            x: self.x.clone() + o.x.clone(),
            y: self.y.clone() + o.y.clone(),
            z: self.z.clone() + o.z.clone() + self.x.clone() * o.y.clone(),
        }
    }

    pub fn inverse(&self) -> Self {
        HeisenbergElement {
            x: -self.x.clone(),
            y: -self.y.clone(),
            z: self.x.clone() * self.y.clone() - self.z.clone(),
        }
    }
}

/// `b^t = (t·a₁, t·a₂, t·a₃ + t(t−1)/2·a₁a₂)`.
pub fn heisenberg_power<T>(b: &HeisenbergElement<T>, t: &T) -> HeisenbergElement<T>
where
    T: Clone + Num + Neg<Output = T>,
{
    let two = T::one() + T::one();
    let tri = t.clone() * (t.clone() - T::one()) / two;
    HeisenbergElement {
        x: t.clone() * b.x.clone(),
        y: t.clone() * b.y.clone(),
        z: t.clone() * b.z.clone() + tri * b.x.clone() * b.y.clone(),
    }
}

/// Scalars with an integer part, for lattice reduction.
pub trait Floor: Clone + Num + Neg<Output = Self> + PartialOrd {
    fn floor_value(&self) -> Self;
}

impl Floor for f64 {
    fn floor_value(&self) -> f64 {
        self.floor()
    }
}

impl Floor for Rational {
    fn floor_value(&self) -> Rational {
        self.floor()
    }
}

/// Right-multiplies by `γ = (A, B, C) ∈ Z³` with `A = −⌊x⌋`, `B = −⌊y⌋`,
/// `C = −⌊z + x·B⌋`, landing in `[0, 1)³`.
pub fn reduce_mod_lattice<T: Floor>(g: &HeisenbergElement<T>) -> HeisenbergElement<T> {
    let a = -g.x.floor_value();
    let b = -g.y.floor_value();
    let zb = g.z.clone() + g.x.clone() * b.clone();
    let c = -zb.floor_value();
    let out = g.mul(&HeisenbergElement::new(a, b, c));
    // floating-point rounding can leave a coordinate exactly at 1
    HeisenbergElement {
        x: wrap_unit(out.x),
        y: wrap_unit(out.y),
        z: wrap_unit(out.z),
    }
}

fn wrap_unit<T: Floor>(v: T) -> T {
    if v >= T::one() || v < T::zero() {
        v.clone() - v.floor_value()
    } else {
        v
    }
}

/// The nilsystem `x ↦ b·x` on `G/Γ`, `Γ` the integer points.
#[derive(Clone, Debug)]
pub struct HeisenbergSystem {
    b: [SymbolicReal; 3],
    a1: FixedReal,
    a2: FixedReal,
    a3: Phase,
    a1a2: Phase,
}

impl HeisenbergSystem {
    pub fn new(b: [SymbolicReal; 3]) -> Result<Self> {
        let fixed = |v: &SymbolicReal| {
            FixedReal::from_symbolic(v)
                .ok_or_else(|| Error::LimitExceeded(format!("Heisenberg entry {v} too large")))
        };
        let a1 = fixed(&b[0])?;
        let a2 = fixed(&b[1])?;
        let a3 = Phase::from_symbolic(&b[2]);
        let a1a2 = Phase::from_symbolic(&b[0].checked_mul(&b[1])?);
        Ok(HeisenbergSystem {
            b,
            a1,
            a2,
            a3,
            a1a2,
        })
    }

    pub fn b(&self) -> &[SymbolicReal; 3] {
        &self.b
    }

    /// Reduced representative of `b^k·p`.
    pub fn iterate(&self, p: [Phase; 3], k: i128) -> [Phase; 3] {
        let [px, py, pz] = p;
        let kx = self.a1.checked_mul_int(k).expect("iterate exponent overflow");
        let ky = self.a2.checked_mul_int(k).expect("iterate exponent overflow");
        let f1 = kx.frac();
        let x_red = f1.add(px);
        let (y_frac, carry) = ky.frac().0.overflowing_add(py.0);
        let floor_y = ky.floor() + i128::from(carry);
        let z = self
            .a3
            .times(k)
            .add(self.a1a2.times_wrapped(binom2_wrapping(k)))
            .add(pz)
            .add(py.times(kx.floor()))
            .add(f1.mul_phase(py))
            .add(x_red.times(-floor_y));
        [x_red, Phase(y_frac), z]
    }
}

#[derive(Clone, Debug)]
pub enum System {
    Cyclic(CyclicSystem),
    Torus(TorusRotation),
    Affine(AffineSkewSystem),
    Heisenberg(HeisenbergSystem),
}

impl System {
    pub fn kind(&self) -> &'static str {
        match self {
            System::Cyclic(_) => "cyclic",
            System::Torus(_) => "torus",
            System::Affine(_) => "affine",
            System::Heisenberg(_) => "heisenberg",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            System::Cyclic(_) => 1,
            System::Torus(t) => t.dim(),
            System::Affine(_) => 2,
            System::Heisenberg(_) => 3,
        }
    }

    pub fn origin(&self) -> Point {
        match self {
            System::Cyclic(_) => Point::Residue(0),
            _ => Point::Coords(vec![Phase::ZERO; self.dim()]),
        }
    }

    pub fn check_point(&self, p: &Point) -> Result<()> {
        match (self, p) {
            (System::Cyclic(c), Point::Residue(r)) if *r < c.m => Ok(()),
            (System::Cyclic(c), Point::Residue(r)) => Err(Error::invalid(format!(
                "residue {r} outside Z_{}",
                c.m
            ))),
            (System::Cyclic(_), Point::Coords(_)) => {
                Err(Error::invalid("cyclic systems take residue points"))
            }
            (_, Point::Coords(c)) if c.len() == self.dim() => Ok(()),
            (_, Point::Coords(c)) => Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: c.len(),
            }),
            (_, Point::Residue(_)) => Err(Error::invalid("continuous systems take coordinate points")),
        }
    }

    /// `T^k(p)`.
    pub fn iterate(&self, p: &Point, k: i128) -> Point {
        match (self, p) {
            (System::Cyclic(c), Point::Residue(r)) => Point::Residue(c.iterate(*r, k)),
            (System::Torus(t), Point::Coords(x)) => Point::Coords(t.iterate(x, k)),
            (System::Affine(a), Point::Coords(x)) => {
                let (u, v) = a.iterate(x[0], x[1], k);
                Point::Coords(vec![u, v])
            }
            (System::Heisenberg(h), Point::Coords(x)) => {
                Point::Coords(h.iterate([x[0], x[1], x[2]], k).to_vec())
            }
            _ => panic!("point does not belong to a {} system", self.kind()),
        }
    }

    /// `G` deterministic start points spread evenly over the space. Cyclic
    /// systems with `m ≤ G` use every residue once, which makes grid
    /// averages exact.
    pub fn grid(&self, g: usize) -> Vec<Point> {
        match self {
            System::Cyclic(c) => {
                if c.m as usize <= g {
                    (0..c.m).map(Point::Residue).collect()
                } else {
                    (0..g as u64)
                        .map(|i| Point::Residue(((i as u128 * c.m as u128) / g as u128) as u64))
                        .collect()
                }
            }
            _ => rd_sequence(self.dim(), g)
                .into_iter()
                .map(Point::Coords)
                .collect(),
        }
    }

    /// Parses a JSON descriptor such as `{"kind":"torus","alpha":["sqrt(2)"],"dim":1}`.
    pub fn from_json(v: &Value) -> Result<System> {
        let kind = v
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Descriptor("missing \"kind\"".into()))?;
        match kind {
            "cyclic" => {
                let m = field_u64(v, "m")?;
                let a = v
                    .get("a")
                    .map(|a| a.as_i64().ok_or_else(|| Error::Descriptor("\"a\" must be an integer".into())))
                    .transpose()?
                    .unwrap_or(1);
                Ok(System::Cyclic(CyclicSystem::new(m, a)?))
            }
            "torus" => {
                let alpha = match v.get("alpha") {
                    Some(Value::Array(items)) => items.clone(),
                    Some(other) => vec![other.clone()],
                    None => return Err(Error::Descriptor("missing \"alpha\"".into())),
                };
                let alpha = real_list(&alpha)?;
                if let Some(dim) = v.get("dim") {
                    let dim = dim
                        .as_u64()
                        .ok_or_else(|| Error::Descriptor("\"dim\" must be an integer".into()))?;
                    if dim as usize != alpha.len() {
                        return Err(Error::DimensionMismatch {
                            expected: dim as usize,
                            got: alpha.len(),
                        });
                    }
                }
                Ok(System::Torus(TorusRotation::new(alpha)?))
            }
            "affine" => {
                let alpha = v
                    .get("alpha")
                    .ok_or_else(|| Error::Descriptor("missing \"alpha\"".into()))?;
                let mut alpha = real_list(std::slice::from_ref(alpha))?;
                Ok(System::Affine(AffineSkewSystem::new(alpha.remove(0))))
            }
            "heisenberg" => {
                let b = match v.get("b") {
                    Some(Value::Array(items)) if items.len() == 3 => real_list(items)?,
                    _ => return Err(Error::Descriptor("\"b\" must be a list of three reals".into())),
                };
                let [a1, a2, a3]: [SymbolicReal; 3] = b.try_into().expect("three entries");
                Ok(System::Heisenberg(HeisenbergSystem::new([a1, a2, a3])?))
            }
            other => Err(Error::Descriptor(format!("unknown system kind {other:?}"))),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            System::Cyclic(c) => json!({"kind": "cyclic", "m": c.m, "a": c.a}),
            System::Torus(t) => json!({
                "kind": "torus",
                "alpha": t.alpha.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                "dim": t.dim(),
            }),
            System::Affine(a) => json!({"kind": "affine", "alpha": a.alpha.to_string()}),
            System::Heisenberg(h) => json!({
                "kind": "heisenberg",
                "b": h.b.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            }),
        }
    }
}

fn field_u64(v: &Value, key: &str) -> Result<u64> {
    v.get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Descriptor(format!("\"{key}\" must be a non-negative integer")))
}

/// Reals given as JSON numbers (taken exactly) or strings in the coefficient
/// grammar, all over one inferred basis.
fn real_list(items: &[Value]) -> Result<Vec<SymbolicReal>> {
    let texts: Vec<String> = items
        .iter()
        .filter_map(|v| v.as_str().map(str::to_owned))
        .collect();
    let basis = infer_basis(&texts)?;
    items
        .iter()
        .map(|v| match v {
            Value::String(s) => SymbolicReal::parse(s, &basis),
            Value::Number(n) => {
                let f = n
                    .as_f64()
                    .ok_or_else(|| Error::Descriptor(format!("bad number {n}")))?;
                exact_real(f, &basis)
            }
            other => Err(Error::Descriptor(format!("expected a real, got {other}"))),
        })
        .collect()
}

/// The exact rational value of a finite `f64`.
pub fn exact_real(f: f64, basis: &std::sync::Arc<RadicalBasis>) -> Result<SymbolicReal> {
    Rational::from_float(f)
        .map(|q| SymbolicReal::from_rational(basis, q))
        .ok_or_else(|| Error::invalid(format!("{f} is not finite")))
}

/// First `g` points of the additive recurrence with the generalized golden
/// ratio in dimension `d`, offset by 1/2.
pub fn rd_sequence(d: usize, g: usize) -> Vec<Vec<Phase>> {
    // φ_d is the positive root of x^(d+1) = x + 1
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
    }
    let steps: Vec<Phase> = (1..=d)
        .map(|j| Phase::from_f64(phi.powi(-(j as i32))))
        .collect();
    (0..g)
        .map(|i| {
            steps
                .iter()
                .map(|s| Phase::HALF.add(s.times(i as i128)))
                .collect()
        })
        .collect()
}

/// A trigonometric polynomial `Σ c_h e(h·x)` or the indicator of a box of arcs.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    Trig(Vec<(Vec<i64>, Complex64)>),
    Box(Vec<Arc>),
}

/// Half-open arc `[u, v) ⊂ [0, 1)` with exact rational endpoints; `v = 1`
/// closes the circle.
#[derive(Clone, Debug, PartialEq)]
pub struct Arc {
    pub u: f64,
    pub v: f64,
    exact: (Rational, Rational),
    small: Option<[u128; 4]>,
    lo: u128,
    hi: u128,
    hi_is_one: bool,
}

impl Arc {
    pub fn new(u: f64, v: f64) -> Result<Arc> {
        let conv = |x: f64| {
            Rational::from_float(x).ok_or_else(|| Error::invalid(format!("{x} is not finite")))
        };
        Arc::exact(conv(u)?, conv(v)?)
    }

    pub fn exact(u: Rational, v: Rational) -> Result<Arc> {
        let zero = Rational::from_integer(0.into());
        let one = Rational::from_integer(1.into());
        if !(zero <= u && u < v && v <= one) {
            return Err(Error::invalid(format!("arc [{u}, {v}) must satisfy 0 ≤ u < v ≤ 1")));
        }
        let ceil_scaled = |x: &Rational| -> u128 {
            let n: BigInt = (x.numer() << 128u32) + x.denom() - 1;
            (n / x.denom()).to_u128().expect("endpoint below 1")
        };
        let hi_is_one = v == one;
        let small = [u.numer(), u.denom(), v.numer(), v.denom()]
            .iter()
            .map(|b| b.to_u64().map(u128::from))
            .collect::<Option<Vec<_>>>()
            .map(|v| [v[0], v[1], v[2], v[3]]);
        Ok(Arc {
            u: u.to_f64().unwrap_or(0.0),
            v: v.to_f64().unwrap_or(1.0),
            lo: ceil_scaled(&u),
            hi: if hi_is_one { 0 } else { ceil_scaled(&v) },
            hi_is_one,
            small,
            exact: (u, v),
        })
    }

    pub fn endpoints(&self) -> (&Rational, &Rational) {
        (&self.exact.0, &self.exact.1)
    }

    pub fn length(&self) -> f64 {
        (&self.exact.1 - &self.exact.0).to_f64().unwrap_or(0.0)
    }

    pub fn contains(&self, x: Phase) -> bool {
        x.0 >= self.lo && (self.hi_is_one || x.0 < self.hi)
    }

    /// `[lo, hi)` in units of `2^-128`, consistent with [`Arc::contains`];
    /// `hi = None` stands for 1.
    pub fn phase_bounds(&self) -> (u128, Option<u128>) {
        (self.lo, (!self.hi_is_one).then_some(self.hi))
    }

    /// Whether `r/m` lies in the arc, decided exactly.
    pub fn contains_ratio(&self, r: u64, m: u64) -> bool {
        let (r128, m128) = (u128::from(r), u128::from(m));
        match self.small {
            Some([un, ud, vn, vd]) => r128 * ud >= un * m128 && r128 * vd < vn * m128,
            None => {
                let x = Rational::new(r.into(), m.into());
                x >= self.exact.0 && x < self.exact.1
            }
        }
    }

    /// `#{0 ≤ r < m : r/m ∈ [u, v)}`.
    pub fn count_residues(&self, m: u64) -> u64 {
        (0..m).filter(|&r| self.contains_ratio(r, m)).count() as u64
    }
}

/// Reads a decimal (`0.25`), a fraction (`1/4`) or scientific notation
/// (`2.5e-1`, taken at its `f64` value) as an exact rational.
pub fn parse_exact_decimal(s: &str) -> Result<Rational> {
    let bad = || Error::syntax(0, format!("bad number {s:?}"));
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d == BigInt::from(0) {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    if s.contains(['e', 'E']) {
        let f: f64 = s.parse().map_err(|_| bad())?;
        return Rational::from_float(f).ok_or_else(bad);
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty()
        || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    let digits: BigInt = format!("0{int}{frac}").parse().map_err(|_| bad())?;
    let q = Rational::new(digits, BigInt::from(10u8).pow(frac.len() as u32));
    Ok(if neg { -q } else { q })
}

impl Observable {
    pub fn constant(c: f64) -> Observable {
        Observable::Trig(vec![(vec![], Complex64::new(c, 0.0))])
    }

    /// The character `e(h·x)`.
    pub fn character(h: &[i64]) -> Observable {
        Observable::Trig(vec![(h.to_vec(), Complex64::new(1.0, 0.0))])
    }

    pub fn boxed(arcs: &[(f64, f64)]) -> Result<Observable> {
        Ok(Observable::Box(
            arcs.iter()
                .map(|&(u, v)| Arc::new(u, v))
                .collect::<Result<_>>()?,
        ))
    }

    /// Builds a trigonometric polynomial, merging repeated frequencies and
    /// dropping zero coefficients.
    pub fn trig(terms: Vec<(Vec<i64>, Complex64)>) -> Observable {
        let mut merged: Vec<(Vec<i64>, Complex64)> = Vec::new();
        for (mut h, c) in terms {
            while h.last() == Some(&0) {
                h.pop();
            }
            match merged.iter_mut().find(|(g, _)| *g == h) {
                Some((_, acc)) => *acc += c,
                None => merged.push((h, c)),
            }
        }
        merged.retain(|(_, c)| *c != Complex64::new(0.0, 0.0));
        Observable::Trig(merged)
    }

    /// Number of leading coordinates the observable looks at.
    pub fn dim(&self) -> usize {
        match self {
            Observable::Trig(terms) => terms.iter().map(|(h, _)| h.len()).max().unwrap_or(0),
            Observable::Box(arcs) => arcs.len(),
        }
    }

    pub fn is_trig(&self) -> bool {
        matches!(self, Observable::Trig(_))
    }

    /// Trig terms, or `None` for a box.
    pub fn terms(&self) -> Option<&[(Vec<i64>, Complex64)]> {
        match self {
            Observable::Trig(t) => Some(t),
            Observable::Box(_) => None,
        }
    }

    /// Value at a continuous point; `x` must cover [`Observable::dim`] coordinates.
    pub fn eval_phases(&self, x: &[Phase]) -> Complex64 {
        match self {
            Observable::Trig(terms) => terms
                .iter()
                .map(|(h, c)| c * dot_phase(h, x).unit())
                .sum(),
            Observable::Box(arcs) => indicator(arcs.iter().zip(x).all(|(a, &p)| a.contains(p))),
        }
    }

    /// Value at the residue `r` of `Z_m`, viewed as the point `r/m` of the circle.
    pub fn eval_residue(&self, r: u64, m: u64) -> Complex64 {
        match self {
            Observable::Trig(terms) => terms
                .iter()
                .map(|(h, c)| {
                    let h0 = h.first().copied().unwrap_or(0);
                    let k = (i128::from(h0) * i128::from(r)).rem_euclid(i128::from(m));
                    c * Phase::from_ratio(k, u128::from(m)).unit()
                })
                .sum(),
            Observable::Box(arcs) => indicator(arcs[0].contains_ratio(r, m)),
        }
    }

    pub fn eval_point(&self, system: &System, p: &Point) -> Complex64 {
        match (system, p) {
            (System::Cyclic(c), Point::Residue(r)) => self.eval_residue(*r, c.m),
            (_, Point::Coords(x)) => self.eval_phases(x),
            _ => panic!("point does not belong to a {} system", system.kind()),
        }
    }

    /// Parses the observable mini-language:
    /// `e(h1 x + h2 y + ...)` characters with optional real multipliers and
    /// constants joined by `+`/`-`, or `box u1 v1 [u2 v2 ...]`.
    pub fn parse(text: &str) -> Result<Observable> {
        let trimmed = text.trim();
        if let Some(rest) = trimmed.strip_prefix("box") {
            let nums = rest
                .split_whitespace()
                .map(parse_exact_decimal)
                .collect::<Result<Vec<Rational>>>()?;
            if nums.is_empty() || nums.len() % 2 != 0 {
                return Err(Error::syntax(0, "box needs pairs of bounds"));
            }
            let arcs = nums
                .chunks(2)
                .map(|c| Arc::exact(c[0].clone(), c[1].clone()))
                .collect::<Result<_>>()?;
            return Ok(Observable::Box(arcs));
        }
        ObsParser::new(text).parse()
    }
}

fn indicator(b: bool) -> Complex64 {
    Complex64::new(if b { 1.0 } else { 0.0 }, 0.0)
}

/// `h·x mod 1`.
pub fn dot_phase(h: &[i64], x: &[Phase]) -> Phase {
    h.iter()
        .zip(x)
        .fold(Phase::ZERO, |acc, (&h, p)| acc.add(p.times(i128::from(h))))
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Box(arcs) => {
                write!(f, "box")?;
                for a in arcs {
                    write!(f, " {} {}", a.u, a.v)?;
                }
                Ok(())
            }
            Observable::Trig(terms) if terms.is_empty() => write!(f, "0"),
            Observable::Trig(terms) => {
                for (i, (h, c)) in terms.iter().enumerate() {
                    let re = c.re;
                    if i > 0 {
                        write!(f, " {} ", if re < 0.0 { '-' } else { '+' })?;
                    } else if re < 0.0 {
                        write!(f, "-")?;
                    }
                    let mag = re.abs();
                    if h.iter().all(|&v| v == 0) {
                        write!(f, "{mag}")?;
                        continue;
                    }
                    if mag != 1.0 {
                        write!(f, "{mag}*")?;
                    }
                    write!(f, "e(")?;
                    let mut first = true;
                    for (j, &hj) in h.iter().enumerate().filter(|(_, &v)| v != 0) {
                        let var = ["x", "y", "z"][j];
                        if first {
                            if hj < 0 {
                                write!(f, "-")?;
                            }
                        } else {
                            write!(f, " {} ", if hj < 0 { '-' } else { '+' })?;
                        }
                        if hj.abs() != 1 {
                            write!(f, "{}", hj.abs())?;
                        }
                        write!(f, "{var}")?;
                        first = false;
                    }
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

struct ObsParser<'a> {
    text: &'a [u8],
    pos: usize,
}

impl<'a> ObsParser<'a> {
    fn new(text: &'a str) -> Self {
        ObsParser {
            text: text.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::syntax(self.pos, msg))
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len() {
            let c = self.text[self.pos];
            let exp_sign = (c == b'-' || c == b'+')
                && self.pos > start
                && matches!(self.text[self.pos - 1], b'e' | b'E')
                && self.text[start..self.pos].iter().all(|b| b.is_ascii_digit() || *b == b'.' || *b == b'e' || *b == b'E');
            if c.is_ascii_digit() || c == b'.' || exp_sign {
                self.pos += 1;
            } else if (c == b'e' || c == b'E')
                && self.pos > start
                && self.text.get(self.pos + 1).is_some_and(|n| n.is_ascii_digit() || *n == b'-' || *n == b'+')
            {
                self.pos += 1;
            } else {
                break;
            }
        }
        let s = std::str::from_utf8(&self.text[start..self.pos]).expect("ascii");
        s.parse::<f64>().or_else(|_| self.err(format!("bad number {s:?}")))
    }

    fn parse(mut self) -> Result<Observable> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        if self.eat(b'-') {
            sign = -1.0;
        }
        loop {
            terms.push(self.term(sign)?);
            sign = match self.peek() {
                Some(b'+') => 1.0,
                Some(b'-') => -1.0,
                None => break,
                Some(c) => return self.err(format!("unexpected {:?}", c as char)),
            };
            self.pos += 1;
        }
        Ok(Observable::trig(terms))
    }

    fn term(&mut self, sign: f64) -> Result<(Vec<i64>, Complex64)> {
        let coeff = match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let v = self.number()?;
                if !self.eat(b'*') {
                    return Ok((vec![], Complex64::new(sign * v, 0.0)));
                }
                v
            }
            Some(b'e') => 1.0,
            _ => return self.err("expected a number or e(...)"),
        };
        if !(self.eat(b'e') && self.eat(b'(')) {
            return self.err("expected e(...)");
        }
        let h = self.linear()?;
        if !self.eat(b')') {
            return self.err("expected ')'");
        }
        Ok((h, Complex64::new(sign * coeff, 0.0)))
    }

    fn linear(&mut self) -> Result<Vec<i64>> {
        let mut h = vec![0i64; 3];
        let mut sign = if self.eat(b'-') { -1 } else { 1 };
        loop {
            let mut k = 1i64;
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                let start = self.pos;
                while self.pos < self.text.len() && self.text[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                k = std::str::from_utf8(&self.text[start..self.pos])
                    .expect("ascii")
                    .parse()
                    .or_else(|_| self.err("frequency too large"))?;
                self.eat(b'*');
            }
            let var = match self.peek() {
                Some(b'x') => 0,
                Some(b'y') => 1,
                Some(b'z') => 2,
                _ => return self.err("expected variable x, y or z"),
            };
            self.pos += 1;
            h[var] += sign * k;
            sign = match self.peek() {
                Some(b'+') => 1,
                Some(b'-') => -1,
                _ => break,
            };
            self.pos += 1;
        }
        Ok(h)
    }
}

/// `∫ f dμ`, exactly (up to the final `f64` rounding).
pub fn haar_integral(system: &System, f: &Observable) -> Result<Complex64> {
    check_observable(system, f)?;
    match (system, f) {
        (System::Cyclic(c), Observable::Trig(terms)) => Ok(terms
            .iter()
            .filter(|(h, _)| h.first().copied().unwrap_or(0) % c.m as i64 == 0)
            .map(|(_, c)| *c)
            .sum()),
        (System::Cyclic(c), Observable::Box(arcs)) => Ok(Complex64::new(
            arcs[0].count_residues(c.m) as f64 / c.m as f64,
            0.0,
        )),
        (_, Observable::Trig(terms)) => Ok(terms
            .iter()
            .filter(|(h, _)| h.iter().all(|&v| v == 0))
            .map(|(_, c)| *c)
            .sum()),
        (_, Observable::Box(arcs)) => Ok(Complex64::new(
            arcs.iter().map(Arc::length).product(),
            0.0,
        )),
    }
}

/// Rejects observables the system cannot integrate exactly.
pub fn check_observable(system: &System, f: &Observable) -> Result<()> {
    if f.dim() > system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            got: f.dim(),
        });
    }
    if let (System::Heisenberg(_), Observable::Trig(terms)) = (system, f) {
        if terms.iter().any(|(h, _)| h.get(2).is_some_and(|&v| v != 0)) {
            return Err(Error::UnsupportedObservable(
                "characters on the Heisenberg nilmanifold may depend on x and y only".into(),
            ));
        }
    }
    Ok(())
}

/// `f(p)` with the dimension checked.
pub fn evaluate_observable(system: &System, f: &Observable, p: &Point) -> Result<Complex64> {
    check_observable(system, f)?;
    system.check_point(p)?;
    Ok(f.eval_point(system, p))
}

/// `T^k(p)` with the point checked against the system.
pub fn iterate(system: &System, p: &Point, k: i128) -> Result<Point> {
    system.check_point(p)?;
    Ok(system.iterate(p, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn he<T>(x: T, y: T, z: T) -> HeisenbergElement<T> {
        HeisenbergElement { x, y, z }
    }

    fn torus(alpha: &str) -> System {
        System::from_json(&json!({"kind": "torus", "alpha": [alpha], "dim": 1})).unwrap()
    }

    #[test]
    fn iterate_examples() {
        let c = System::from_json(&json!({"kind": "cyclic", "m": 4, "a": 1})).unwrap();
        assert_eq!(c.iterate(&Point::Residue(0), 6), Point::Residue(2));

        let t = torus("1/4");
        assert_eq!(t.iterate(&t.origin(), 3).to_f64(), vec![0.75]);

        let a = System::from_json(&json!({"kind": "affine", "alpha": "1/2"})).unwrap();
        let direct = a.iterate(&a.origin(), 2);
        assert_eq!(direct.to_f64(), vec![0.0, 0.5]);
        let stepped = a.iterate(&a.iterate(&a.origin(), 1), 1);
        assert_eq!(direct, stepped);
    }

    #[test]
    fn affine_closed_form_matches_repeated_steps() {
        let a = System::from_json(&json!({"kind": "affine", "alpha": "sqrt(2)"})).unwrap();
        let start = Point::from_f64(&[0.3, 0.8]);
        let mut p = start.clone();
        for k in 1..=50 {
            p = a.iterate(&p, 1);
            let closed = a.iterate(&start, k).to_f64();
            let step = p.to_f64();
            for (u, v) in closed.iter().zip(&step) {
                let d = (u - v).abs();
                assert!(d.min(1.0 - d) < 1e-12, "k={k}");
            }
        }
    }

    #[test]
    fn heisenberg_power_examples() {
        let b = HeisenbergElement::new(q(1, 1), q(1, 1), q(0, 1));
        assert_eq!(heisenberg_power(&b, &q(1, 1)), b);
        assert_eq!(heisenberg_power(&b, &q(2, 1)), HeisenbergElement::new(q(2, 1), q(2, 1), q(1, 1)));
        assert_eq!(heisenberg_power(&b, &q(0, 1)), HeisenbergElement::identity());
        assert_eq!(b.mul(&b), heisenberg_power(&b, &q(2, 1)));
    }

    #[test]
    fn reduction_examples() {
        let r = |x: f64, y: f64, z: f64| reduce_mod_lattice(&HeisenbergElement::new(x, y, z));
        assert_eq!(r(0.5, 0.5, 0.5), HeisenbergElement::new(0.5, 0.5, 0.5));
        assert_eq!(r(1.25, 0.0, 0.0), HeisenbergElement::new(0.25, 0.0, 0.0));
        let g = r(0.5, 1.5, 0.25);
        assert_eq!(g, HeisenbergElement::new(0.5, 0.5, 0.75));
        assert_eq!(reduce_mod_lattice(&g), g);
    }

    #[test]
    fn heisenberg_iterate_matches_exact_group_arithmetic() {
        let sys = System::from_json(&json!({"kind": "heisenberg", "b": ["sqrt(2)", "sqrt(3)", "1/7"]})).unwrap();
        let System::Heisenberg(h) = &sys else { unreachable!() };
        let b = he(h.b[0].clone(), h.b[1].clone(), h.b[2].clone());
        let start = [Phase::from_f64(0.25), Phase::from_f64(0.625), Phase::from_f64(0.125)];
        for k in [1i128, 2, 7, -3, 1000, 123_456_789] {
            let got = h.iterate(start, k);
            // exact oracle with high-precision enclosures
            let kk = Rational::from_integer(k.into());
            let bk = he(
                b.x.scale(&kk),
                b.y.scale(&kk),
                &b.z.scale(&kk) + &(&b.x * &b.y).scale(&(&kk * (&kk - q(1, 1)) / q(2, 1))),
            );
            let p = he(q(1, 4), q(5, 8), q(1, 8));
            let basis = b.x.basis().clone();
            let lift = |v: &Rational| SymbolicReal::from_rational(&basis, v.clone());
            let prod = he(
                &bk.x + &lift(&p.x),
                &bk.y + &lift(&p.y),
                &(&bk.z + &lift(&p.z)) + &(&bk.x * &lift(&p.y)),
            );
            let bx = prod.x.floor_exact().unwrap();
            let by = prod.y.floor_exact().unwrap();
            let xr = &prod.x - &SymbolicReal::from_rational(&basis, Rational::from_integer(bx));
            let yr = &prod.y - &SymbolicReal::from_rational(&basis, Rational::from_integer(by.clone()));
            let zfull = &prod.z - &(&prod.x * &SymbolicReal::from_rational(&basis, Rational::from_integer(by)));
            let zf = zfull.floor_exact().unwrap();
            let zr = &zfull - &SymbolicReal::from_rational(&basis, Rational::from_integer(zf));
            for (g, e) in got.iter().zip([xr, yr, zr]) {
                let d = (g.to_f64() - e.to_f64()).abs();
                assert!(d.min(1.0 - d) < 1e-12, "k={k}: {} vs {}", g.to_f64(), e.to_f64());
            }
        }
    }

    #[test]
    fn observable_examples() {
        let t = torus("sqrt(2)");
        let e = Observable::parse("e(x)").unwrap();
        let v = evaluate_observable(&t, &e, &Point::from_f64(&[0.5])).unwrap();
        assert_eq!(v, Complex64::new(-1.0, 0.0));
        let b = Observable::parse("box 0 0.5").unwrap();
        assert_eq!(b.eval_phases(&[Phase::from_f64(0.75)]), Complex64::new(0.0, 0.0));
        let h = Observable::parse("e(x + 2y)").unwrap();
        let v = h.eval_phases(&[Phase::from_f64(0.25), Phase::from_f64(0.125)]);
        assert_eq!(v, Complex64::new(-1.0, 0.0));

        assert_eq!(haar_integral(&t, &Observable::parse("e(3x)").unwrap()).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(haar_integral(&t, &Observable::parse("box 0 0.25").unwrap()).unwrap(), Complex64::new(0.25, 0.0));
        assert_eq!(haar_integral(&t, &Observable::parse("3 + e(x)").unwrap()).unwrap(), Complex64::new(3.0, 0.0));
        assert!(matches!(
            evaluate_observable(&t, &h, &Point::from_f64(&[0.5])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn observable_language() {
        let o = Observable::parse("2*e(1x) - 0.5*e(-x + 3y) + 1 + e(x)").unwrap();
        assert_eq!(o.to_string(), "3*e(x) - 0.5*e(-x + 3y) + 1");
        assert_eq!(Observable::parse(&o.to_string()).unwrap(), o);
        assert_eq!(Observable::parse("e(x) - e(x)").unwrap(), Observable::Trig(vec![]));
        assert!(Observable::parse("e(w)").is_err());
        assert!(Observable::parse("box 0.5 0.25").is_err());
        assert!(Observable::parse("box 0 1 0.1").is_err());
        assert_eq!(Observable::parse("1e-1").unwrap(), Observable::constant(0.1));
    }

    #[test]
    fn heisenberg_rejects_vertical_characters() {
        let h = System::from_json(&json!({"kind": "heisenberg", "b": [0.5, 0.25, 0]})).unwrap();
        assert!(haar_integral(&h, &Observable::parse("e(z)").unwrap()).is_err());
        assert_eq!(
            haar_integral(&h, &Observable::parse("box 0 0.5 0 0.5 0 0.5").unwrap()).unwrap(),
            Complex64::new(0.125, 0.0)
        );
    }

    #[test]
    fn cyclic_integrals_use_counting_measure() {
        let c = System::from_json(&json!({"kind": "cyclic", "m": 5, "a": 1})).unwrap();
        assert_eq!(haar_integral(&c, &Observable::parse("e(5x) + e(x)").unwrap()).unwrap(), Complex64::new(1.0, 0.0));
        // residues 0, 1 lie in [0, 0.4); 2/5 = 0.4 does not
        assert_eq!(haar_integral(&c, &Observable::parse("box 0 0.4").unwrap()).unwrap(), Complex64::new(0.4, 0.0));
        let direct: Complex64 = (0..5)
            .map(|r| Observable::parse("box 0 0.4").unwrap().eval_residue(r, 5))
            .sum();
        assert_eq!(direct, Complex64::new(2.0, 0.0));
    }

    #[test]
    fn descriptors_round_trip() {
        for d in [
            json!({"kind": "torus", "alpha": ["sqrt(2)", "sqrt(3)"], "dim": 2}),
            json!({"kind": "cyclic", "m": 5, "a": 1}),
            json!({"kind": "affine", "alpha": "sqrt(2)"}),
            json!({"kind": "heisenberg", "b": ["sqrt(2)", "sqrt(3)", "0"]}),
        ] {
            let s = System::from_json(&d).unwrap();
            assert_eq!(s.to_json(), d);
        }
        assert!(System::from_json(&json!({"kind": "torus", "alpha": ["sqrt(2)"], "dim": 2})).is_err());
        assert!(System::from_json(&json!({"kind": "moebius"})).is_err());
    }

    #[test]
    fn measure_preservation_on_a_grid() {
        let systems = [
            System::from_json(&json!({"kind": "heisenberg", "b": ["sqrt(2)", "sqrt(3)", "1/3"]})).unwrap(),
            System::from_json(&json!({"kind": "affine", "alpha": "sqrt(5)"})).unwrap(),
        ];
        let boxes = [[(0.0, 0.5), (0.25, 0.75), (0.0, 0.3)], [(0.1, 0.6), (0.0, 0.5), (0.0, 1.0)]];
        for sys in &systems {
            let d = sys.dim();
            for arcs in &boxes {
                let obs = Observable::boxed(&arcs[..d]).unwrap();
                let vol = haar_integral(sys, &obs).unwrap().re;
                let mut hits = 0usize;
                let total = 64usize.pow(d as u32);
                for idx in 0..total {
                    let coords: Vec<f64> = (0..d)
                        .map(|j| ((idx / 64usize.pow(j as u32)) % 64) as f64 / 64.0 + 1.0 / 128.0)
                        .collect();
                    let p = sys.iterate(&Point::from_f64(&coords), 17);
                    hits += (obs.eval_point(sys, &p).re == 1.0) as usize;
                }
                let freq = hits as f64 / total as f64;
                assert!((freq - vol).abs() <= 3.0 / 64.0, "{} {freq} vs {vol}", sys.kind());
            }
        }
    }

    #[test]
    fn parseval_for_products() {
        let f = Observable::parse("2*e(x) + 3*e(-2x) + 1").unwrap();
        let g = Observable::parse("e(-x) - e(2x) + 0.5*e(3x)").unwrap();
        let (Observable::Trig(ft), Observable::Trig(gt)) = (&f, &g) else { unreachable!() };
        let mut prod = Vec::new();
        for (h1, c1) in ft {
            for (h2, c2) in gt {
                let h = (0..h1.len().max(h2.len()))
                    .map(|j| h1.get(j).unwrap_or(&0) + h2.get(j).unwrap_or(&0))
                    .collect();
                prod.push((h, c1 * c2));
            }
        }
        let t = torus("sqrt(2)");
        let lhs = haar_integral(&t, &Observable::trig(prod)).unwrap();
        // convolution at zero: Σ_h f̂(h)·ĝ(−h)
        let rhs: Complex64 = ft
            .iter()
            .flat_map(|(h1, c1)| {
                gt.iter().filter_map(move |(h2, c2)| {
                    let s = h1.first().unwrap_or(&0) + h2.first().unwrap_or(&0);
                    (s == 0).then_some(c1 * c2)
                })
            })
            .sum();
        assert_eq!(lhs, rhs);
    }

    fn arb_rational() -> impl Strategy<Value = Rational> {
        (-50i64..50, 1i64..12).prop_map(|(n, d)| q(n, d))
    }

    fn arb_element() -> impl Strategy<Value = HeisenbergElement<Rational>> {
        (arb_rational(), arb_rational(), arb_rational()).prop_map(|(x, y, z)| HeisenbergElement::new(x, y, z))
    }

    proptest! {
        #[test]
        fn power_law(b in arb_element(), s in arb_rational(), t in arb_rational()) {
            let lhs = heisenberg_power(&b, &s).mul(&heisenberg_power(&b, &t));
            prop_assert_eq!(lhs, heisenberg_power(&b, &(s + t)));
        }

        #[test]
        fn group_axioms(a in arb_element(), b in arb_element(), c in arb_element()) {
            prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
            prop_assert_eq!(a.mul(&a.inverse()), HeisenbergElement::identity());
        }

        #[test]
        fn reduction_is_idempotent(g in arb_element()) {
            let r = reduce_mod_lattice(&g);
            prop_assert_eq!(reduce_mod_lattice(&r), r.clone());
            for v in [&r.x, &r.y, &r.z] {
                prop_assert!(*v >= q(0, 1) && *v < q(1, 1));
            }
            // same coset: g⁻¹·r has integer coordinates
            let gamma = g.inverse().mul(&r);
            prop_assert!(gamma.x.is_integer() && gamma.y.is_integer() && gamma.z.is_integer());
        }

        #[test]
        fn iterates_compose(j in -10_000i64..10_000, k in -10_000i64..10_000, r in 0u64..7, x in 0.0f64..1.0) {
            let c = System::Cyclic(CyclicSystem::new(7, 3).unwrap());
            let p = Point::Residue(r);
            prop_assert_eq!(c.iterate(&c.iterate(&p, j.into()), k.into()), c.iterate(&p, (j + k).into()));

            let t = torus("sqrt(3)");
            let p = Point::from_f64(&[x]);
            prop_assert_eq!(t.iterate(&t.iterate(&p, j.into()), k.into()), t.iterate(&p, (j + k).into()));

            let h = System::from_json(&json!({"kind": "heisenberg", "b": ["sqrt(2)", "sqrt(3)", "0"]})).unwrap();
            let p = Point::from_f64(&[x, 1.0 - x / 2.0, x / 3.0]);
            let a = h.iterate(&h.iterate(&p, j.into()), k.into()).to_f64();
            let b = h.iterate(&p, (j + k).into()).to_f64();
            for (u, v) in a.iter().zip(&b) {
                let d = (u - v).abs();
                prop_assert!(d.min(1.0 - d) < 1e-9);
            }
        }
    }

    #[test]
    fn rational_floor_trait() {
        assert_eq!(q(-7, 2).floor_value(), q(-4, 1));
        assert_eq!((-3.5f64).floor_value(), -4.0);
    }
}
