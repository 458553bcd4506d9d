//! Decision procedure for strong independence.
//!
//! A family `{p_1, ..., p_l}` is strongly independent when every nonzero real
//! combination `Σ λ_i p_i` keeps an irrational coefficient on some positive
//! power of `t`. Decomposing `R` as a vector space over the coefficient field
//! `F`, every real solution splits into `F`-valued solutions, so it is enough
//! to search `λ ∈ F^l`. Writing `λ_i = Σ_k λ_ik b_k` over the field basis turns
//! "every non-constant coefficient is rational" into a homogeneous `Q`-linear
//! system in the `l·m` unknowns `λ_ik`; the family is independent exactly
//! when that system has only the trivial solution.

use num_traits::{One, Zero};

use super::{PolynomialFamily, RealPolynomial};
use crate::error::Result;
use crate::symreal::{Rational, SymbolicReal};

/// Outcome of [`PolynomialFamily::is_strongly_independent`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndependenceVerdict {
    pub independent: bool,
    /// Present exactly when `independent` is false.
    pub witness: Option<Witness>,
}

/// A nonzero `λ` whose combination has only rational non-constant
/// coefficients; `rho[j - 1]` is the coefficient of `t^j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub lambda: Vec<SymbolicReal>,
    pub rho: Vec<Rational>,
}

impl Witness {
    /// Recomputes `Σ λ_i p_i` and checks the witness claims from scratch.
    pub fn validate(&self, family: &PolynomialFamily) -> Result<bool> {
        if self.lambda.iter().all(SymbolicReal::is_zero) {
            return Ok(false);
        }
        let combo = family.combine(&self.lambda)?;
        let d = family.max_degree();
        Ok((1..=d).all(|j| {
            combo.coefficient(j).to_rational().as_ref() == self.rho.get(j - 1)
        }))
    }
}

pub(super) fn decide(family: &PolynomialFamily) -> Result<IndependenceVerdict> {
    let basis = family.basis();
    let m = basis.dimension();
    let ell = family.len();
    let d = family.max_degree();
    let ncols = ell * m;

    // Row (j, u): the coordinate on non-unit element u of the t^j coefficient
    // of Σ_i λ_i p_i must vanish.
    let mut rows: Vec<Vec<Rational>> = Vec::new();
    for j in 1..=d {
        let mut block = vec![vec![Rational::zero(); ncols]; m];
        for (i, p) in family.members().iter().enumerate() {
            let c = p.coefficient(j);
            for k in 0..m {
                for (e, q) in c.coords() {
                    let (s, u) = basis.product(k, e);
                    if u != 0 {
                        block[u][i * m + k] += q * Rational::from_integer(s.into());
                    }
                }
            }
        }
        rows.extend(
            block
                .into_iter()
                .skip(1)
                .filter(|r| r.iter().any(|x| !x.is_zero())),
        );
    }

    let (reduced, pivots) = rref(rows, ncols);
    let Some(free) = (0..ncols).find(|c| !pivots.contains(c)) else {
        return Ok(IndependenceVerdict {
            independent: true,
            witness: None,
        });
    };

    let mut x = vec![Rational::zero(); ncols];
    x[free] = Rational::one();
    for (row, &pc) in reduced.iter().zip(&pivots) {
        x[pc] = -row[free].clone();
    }
    let mut lambda: Vec<SymbolicReal> = (0..ell)
        .map(|i| SymbolicReal::from_coords(basis, (0..m).map(|k| (k, x[i * m + k].clone()))))
        .collect();
    let combo = family.combine(&lambda)?;
    let mut rho = non_constant_rational_part(&combo, d);

    // Scale so the first nonzero entry of rho is 1.
    if let Some(lead) = rho.iter().find(|r| !r.is_zero()).cloned() {
        let inv = lead.recip();
        lambda = lambda.iter().map(|l| l.scale(&inv)).collect();
        rho = rho.iter().map(|r| r * &inv).collect();
    }

    Ok(IndependenceVerdict {
        independent: false,
        witness: Some(Witness { lambda, rho }),
    })
}

fn non_constant_rational_part(p: &RealPolynomial, d: usize) -> Vec<Rational> {
    (1..=d)
        .map(|j| {
            p.coefficient(j)
                .to_rational()
                .expect("null-space combination has rational non-constant coefficients")
        })
        .collect()
}

/// Reduced row-echelon form over `Q`; returns the nonzero rows and their
/// pivot columns.
fn rref(mut rows: Vec<Vec<Rational>>, ncols: usize) -> (Vec<Vec<Rational>>, Vec<usize>) {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == rows.len() {
            break;
        }
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = rows[r][c].recip();
        for x in rows[r].iter_mut() {
            *x *= &inv;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (d, s) in row.iter_mut().zip(&pivot_row) {
                if !s.is_zero() {
                    *d -= &f * s;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    rows.truncate(r);
    (rows, pivots)
}
