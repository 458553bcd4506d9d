//! Discrepancy between `Λ′_{w,r}`-weighted and plain averages, maximized
//! over the residues `r` coprime to `W`.

use serde::Serialize;

use super::{AverageRequest, Prepared, Trend, WeightKind, Weighting};
use crate::error::{Error, Result};
use crate::primes::{coprime_residues, SieveTable, W_of};
use std::sync::Arc;

/// Default cap on `φ(W)`, the number of subruns.
pub const DEFAULT_PHI_CAP: u64 = 64;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WTrickCheckpoint {
    #[serde(rename = "N")]
    pub n: u64,
    pub discrepancy: f64,
    pub worst_r: u64,
    /// One entry per residue in [`WTrickReport::residues`].
    pub per_residue: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WTrickReport {
    pub w: u64,
    #[serde(rename = "W")]
    pub big_w: u64,
    pub residues: Vec<u64>,
    pub checkpoints: Vec<WTrickCheckpoint>,
    pub trend: Trend,
}

impl WTrickReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("N\tdiscrepancy\tworst_r\n");
        for c in &self.checkpoints {
            out.push_str(&format!("{}\t{:e}\t{}\n", c.n, c.discrepancy, c.worst_r));
        }
        out
    }

    pub fn last(&self) -> &WTrickCheckpoint {
        self.checkpoints.last().expect("reports have checkpoints")
    }
}

/// `max_r ‖(1/N) Σ_{n≤N} (Λ′_{w,r}(n) − 1) ∏ f_i(T^{[p_i(Wn+r)]} x)‖`, the norm
/// being the `L²(μ)` proxy of the request's backend. The request's scheme
/// is not used.
pub fn wtrick_discrepancy(req: &AverageRequest, w: u64, phi_cap: u64) -> Result<WTrickReport> {
    let (big_w, phi) = W_of(w)?;
    if phi > phi_cap {
        return Err(Error::LimitExceeded(format!(
            "phi(W) = {phi} subruns exceed the cap {phi_cap}"
        )));
    }
    super::validate_common(req)?;
    let residues = coprime_residues(big_w);
    let n_max = *req.checkpoints.last().expect("validated");
    let sieve = Arc::new(SieveTable::new((big_w * n_max + big_w).max(2))?);
    let mut per_r: Vec<Vec<f64>> = Vec::with_capacity(residues.len());
    for &r in &residues {
        let ml = super::tricked_weight(w, r)?;
        let weighting = Weighting {
            start: 0,
            kind: WeightKind::TrickedCentered(ml),
            sieve: Some(sieve.clone()),
        };
        let iterates = req.iterates.shifted(big_w, r)?;
        let prepared = Prepared::assemble(req, iterates, weighting)?;
        let zero = num_complex::Complex64::new(0.0, 0.0);
        per_r.push(prepared.measure()?.iter().map(|f| f.l2_to_constant(zero)).collect());
    }
    let checkpoints: Vec<WTrickCheckpoint> = req
        .checkpoints
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let per_residue: Vec<f64> = per_r.iter().map(|v| v[j]).collect();
            let (idx, &discrepancy) = per_residue
                .iter()
                .enumerate()
                .fold(None, |best: Option<(usize, &f64)>, (i, v)| match best {
                    Some((_, b)) if b >= v => best,
                    _ => Some((i, v)),
                })
                .expect("at least one residue");
            WTrickCheckpoint {
                n,
                discrepancy,
                worst_r: residues[idx],
                per_residue,
            }
        })
        .collect();
    let trend = Trend::of(&checkpoints.iter().map(|c| c.discrepancy).collect::<Vec<_>>());
    Ok(WTrickReport {
        w,
        big_w,
        residues,
        checkpoints,
        trend,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averages::{Iterates, Scheme};
    use crate::dynamics::{Observable, System};
    use crate::polyfam::PolynomialFamily;
    use crate::primes::modified_lambda;

    fn request(texts: &[&str], fs: &[&str], cps: Vec<u64>) -> AverageRequest {
        let sys = System::from_json(&serde_json::json!({"kind": "torus", "alpha": "sqrt(3)"})).unwrap();
        AverageRequest::new(
            sys,
            Iterates::Family(PolynomialFamily::parse(texts).unwrap()),
            fs.iter().map(|s| Observable::parse(s).unwrap()).collect(),
            Scheme::Cesaro,
            cps,
        )
    }

    #[test]
    fn single_term_unfolds() {
        let req = request(&["sqrt(2)*t^2"], &["e(x)"], vec![1]);
        let rep = wtrick_discrepancy(&req, 5, DEFAULT_PHI_CAP).unwrap();
        assert_eq!(rep.big_w, 6);
        assert_eq!(rep.residues, vec![1, 5]);
        for (r, v) in rep.residues.iter().zip(&rep.last().per_residue) {
            let expect = (modified_lambda(5, *r, 1).unwrap() - 1.0).abs();
            assert!((v - expect).abs() < 1e-12, "r = {r}: {v} vs {expect}");
        }
    }

    #[test]
    fn constant_observable_measures_the_weight_bias() {
        let req = request(&["t"], &["1"], vec![1000, 100_000]);
        let rep = wtrick_discrepancy(&req, 3, DEFAULT_PHI_CAP).unwrap();
        assert!(rep.last().discrepancy <= 0.05, "{:?}", rep.last());
    }

    #[test]
    fn phi_cap_is_enforced() {
        let req = request(&["t"], &["1"], vec![10]);
        assert!(matches!(wtrick_discrepancy(&req, 12, 8), Err(Error::LimitExceeded(_))));
        assert!(wtrick_discrepancy(&req, 2, 8).is_err());
    }
}
