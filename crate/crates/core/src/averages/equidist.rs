//! Character and box discrepancy of product orbits
//! `Φ(n) = (T^{[p_1(n)]}x, …, T^{[p_ℓ(n)]}x)`.

use rayon::prelude::*;
use serde::Serialize;

use super::engine::ComplexSum;
use crate::dynamics::{Point, System};
use crate::error::{Error, Result};
use crate::fixed::{mul_wide, Phase};
use crate::polyfam::{FloorEvaluator, PolynomialFamily};

/// Both discrepancies must stay below this for the orbit to count as
/// equidistributed.
pub const EQUIDIST_THRESHOLD: f64 = 0.05;
const MAX_FREQUENCIES: u64 = 200_000;
const MAX_CELLS: u64 = 1 << 22;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquidistReport {
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "H")]
    pub h: u32,
    pub grid: u32,
    pub character_discrepancy: f64,
    pub worst_frequency: Vec<i64>,
    pub box_discrepancy: f64,
    pub worst_cell: Vec<u32>,
    pub threshold: f64,
    pub equidistributed: bool,
}

impl EquidistReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Coordinates of one orbit point: the ones characters see, then all of them
/// (as cell indices along each axis).
fn coordinates(system: &System, p: &Point, grid: u64) -> (Vec<Phase>, Vec<u64>) {
    match (system, p) {
        (System::Cyclic(c), Point::Residue(r)) => (
            vec![Phase::from_ratio(*r as i128, c.modulus() as u128)],
            vec![(*r as u128 * grid as u128 / c.modulus() as u128) as u64],
        ),
        (_, Point::Coords(x)) => {
            let cells = x.iter().map(|v| mul_wide(v.0, grid as u128).0 as u64).collect();
            let horizontal = match system {
                System::Heisenberg(_) => x[..2].to_vec(),
                _ => x.clone(),
            };
            (horizontal, cells)
        }
        _ => unreachable!("point checked against the system"),
    }
}

/// Discrepancy of the first `n` product-orbit points: characters with
/// `‖h‖_∞ ≤ h_max` (Heisenberg orbits through their horizontal projection)
/// and a `grid^dim` box partition.
pub fn equidistribution_test(
    system: &System,
    family: &PolynomialFamily,
    x: &Point,
    n: u64,
    h_max: u32,
    grid: u32,
) -> Result<EquidistReport> {
    if h_max < 1 {
        return Err(Error::invalid("H must be at least 1"));
    }
    if grid < 2 {
        return Err(Error::invalid("grid must be at least 2"));
    }
    if n == 0 || n > i64::MAX as u64 {
        return Err(Error::invalid("N must lie in 1..=i64::MAX"));
    }
    system.check_point(x)?;
    let ell = family.len();
    let char_dim_each = match system {
        System::Heisenberg(_) => 2,
        _ => system.dim(),
    };
    let char_dim = ell * char_dim_each;
    let box_dim = ell * system.dim();

    let side = 2 * u64::from(h_max) + 1;
    let freq_count = checked_pow(side, char_dim).map(|c| (c - 1) / 2);
    if freq_count.is_none_or(|c| c > MAX_FREQUENCIES) {
        return Err(Error::LimitExceeded(format!(
            "too many frequencies for H = {h_max} in dimension {char_dim}"
        )));
    }
    let cells = checked_pow(u64::from(grid), box_dim)
        .filter(|&c| c <= MAX_CELLS)
        .ok_or_else(|| Error::LimitExceeded(format!("grid^{box_dim} cells exceed {MAX_CELLS}")))?;

    let evals: Vec<FloorEvaluator> = family.members().iter().map(FloorEvaluator::new).collect();
    for e in &evals {
        e.try_floor_at(n as i64)?;
    }
    let orbit: Vec<(Vec<Phase>, u64)> = (1..=n)
        .into_par_iter()
        .map(|k| {
            let mut phases = Vec::with_capacity(char_dim);
            let mut cell = 0u64;
            for e in &evals {
                let p = system.iterate(x, e.floor_at(k as i64));
                let (ph, cs) = coordinates(system, &p, u64::from(grid));
                phases.extend(ph);
                for c in cs {
                    cell = cell * u64::from(grid) + c;
                }
            }
            (phases, cell)
        })
        .collect();

    let (character_discrepancy, worst_frequency) = character_part(system, &orbit, char_dim, h_max, n);
    let (box_discrepancy, worst_cell) = box_part(system, &orbit, cells, box_dim, grid, n);
    let threshold = EQUIDIST_THRESHOLD;
    Ok(EquidistReport {
        n,
        h: h_max,
        grid,
        character_discrepancy,
        worst_frequency,
        box_discrepancy,
        worst_cell,
        threshold,
        equidistributed: character_discrepancy <= threshold && box_discrepancy <= threshold,
    })
}

fn checked_pow(base: u64, exp: usize) -> Option<u64> {
    u32::try_from(exp).ok().and_then(|e| base.checked_pow(e))
}

/// Nonzero frequencies in `[−H, H]^d` up to sign (first nonzero entry
/// positive), skipping characters that are trivial on the space.
fn frequencies(system: &System, d: usize, h_max: u32) -> Vec<Vec<i64>> {
    let h = i64::from(h_max);
    let mut out = Vec::new();
    let mut cur = vec![-h; d];
    loop {
        let lead = cur.iter().find(|&&v| v != 0);
        let trivial = match system {
            System::Cyclic(c) => cur.iter().all(|&v| v % c.modulus() as i64 == 0),
            _ => lead.is_none(),
        };
        if lead.is_some_and(|&v| v > 0) && !trivial {
            out.push(cur.clone());
        }
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < h {
                cur[i] += 1;
                break;
            }
            cur[i] = -h;
        }
    }
}

fn character_part(
    system: &System,
    orbit: &[(Vec<Phase>, u64)],
    d: usize,
    h_max: u32,
    n: u64,
) -> (f64, Vec<i64>) {
    let freqs = frequencies(system, d, h_max);
    let values: Vec<f64> = freqs
        .par_iter()
        .map(|h| {
            let mut acc = ComplexSum::default();
            for (phases, _) in orbit {
                let phase = phases
                    .iter()
                    .zip(h)
                    .fold(Phase::ZERO, |a, (p, &k)| a.add(p.times(i128::from(k))));
                acc.add(phase.unit());
            }
            acc.value().norm() / n as f64
        })
        .collect();
    values
        .iter()
        .zip(&freqs)
        .fold((0.0, Vec::new()), |best, (&v, h)| {
            if v > best.0 {
                (v, h.clone())
            } else {
                best
            }
        })
}

fn box_part(
    system: &System,
    orbit: &[(Vec<Phase>, u64)],
    cells: u64,
    box_dim: usize,
    grid: u32,
    n: u64,
) -> (f64, Vec<u32>) {
    let mut counts = vec![0u64; cells as usize];
    for (_, c) in orbit {
        counts[*c as usize] += 1;
    }
    // volume of the slab j along one axis
    let axis_volume: Vec<f64> = match system {
        System::Cyclic(c) => {
            let m = c.modulus();
            let mut per = vec![0u64; grid as usize];
            for r in 0..m {
                per[(r as u128 * u128::from(grid) / m as u128) as usize] += 1;
            }
            per.iter().map(|&k| k as f64 / m as f64).collect()
        }
        _ => vec![1.0 / f64::from(grid); grid as usize],
    };
    let mut best = (0.0f64, 0u64);
    for (idx, &count) in counts.iter().enumerate() {
        let mut rest = idx as u64;
        let mut vol = 1.0;
        for _ in 0..box_dim {
            vol *= axis_volume[(rest % u64::from(grid)) as usize];
            rest /= u64::from(grid);
        }
        let d = (count as f64 / n as f64 - vol).abs();
        if d > best.0 {
            best = (d, idx as u64);
        }
    }
    let mut cell = vec![0u32; box_dim];
    let mut rest = best.1;
    for slot in cell.iter_mut().rev() {
        *slot = (rest % u64::from(grid)) as u32;
        rest /= u64::from(grid);
    }
    (best.0, cell)
}
