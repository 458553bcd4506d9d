//! Uniformity norms on `Z_m` by the shift recursion
//! `‖f‖_{k+1}^{2^{k+1}} = avg_t ‖conj(f)·f(·+t)‖_k^{2^k}`, `‖f‖_1 = |avg f|`.

use num_complex::Complex64;

use super::engine::{compensated_sum, Neumaier};
use crate::error::{Error, Result};

pub const MAX_GOWERS_ORDER: u32 = 4;

/// `‖f‖_{U^k}` on `Z_m`, `m = f.len()`. Costs `O(m^k)`.
pub fn gowers_norm(f: &[Complex64], k: u32) -> Result<f64> {
    if f.is_empty() {
        return Err(Error::invalid("the group Z_m needs m >= 1"));
    }
    if !(1..=MAX_GOWERS_ORDER).contains(&k) {
        return Err(Error::invalid(format!(
            "order k must lie in 1..={MAX_GOWERS_ORDER}, got {k}"
        )));
    }
    let power = gowers_power(f, k);
    Ok(power.max(0.0).powf(1.0 / f64::from(1u32 << k)))
}

/// `‖f‖_k^{2^k}`.
fn gowers_power(f: &[Complex64], k: u32) -> f64 {
    let m = f.len();
    if k == 1 {
        return (compensated_sum(f.iter().copied()) / m as f64).norm_sqr();
    }
    let mut acc = Neumaier::default();
    let mut g = vec![Complex64::new(0.0, 0.0); m];
    for t in 0..m {
        for (x, slot) in g.iter_mut().enumerate() {
            *slot = f[x].conj() * f[(x + t) % m];
        }
        acc.add(gowers_power(&g, k - 1));
    }
    acc.value() / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed::Phase;
    use proptest::prelude::*;

    fn character(m: usize, h: i128) -> Vec<Complex64> {
        (0..m)
            .map(|x| Phase::from_ratio(h * x as i128, m as u128).unit())
            .collect()
    }

    /// `Σ_h |f̂(h)|^4` with `f̂(h) = (1/m) Σ_x f(x) e(−hx/m)`.
    fn fourier_fourth_moment(f: &[Complex64]) -> f64 {
        let m = f.len();
        (0..m)
            .map(|h| {
                let fh: Complex64 = f
                    .iter()
                    .enumerate()
                    .map(|(x, v)| v * Phase::from_ratio(-((h * x) as i128), m as u128).unit())
                    .sum::<Complex64>()
                    / m as f64;
                fh.norm_sqr().powi(2)
            })
            .sum()
    }

    #[test]
    fn constants_and_characters() {
        for m in [1, 5, 12] {
            let one = vec![Complex64::new(1.0, 0.0); m];
            for k in 1..=3 {
                assert!((gowers_norm(&one, k).unwrap() - 1.0).abs() < 1e-12);
            }
        }
        assert!(gowers_norm(&character(9, 1), 1).unwrap() < 1e-12);
        // a character has U^2 norm 1: every shifted product is constant
        assert!((gowers_norm(&character(9, 2), 2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn order_out_of_range() {
        let f = vec![Complex64::new(1.0, 0.0); 4];
        assert!(gowers_norm(&f, 0).is_err());
        assert!(gowers_norm(&f, 5).is_err());
        assert!(gowers_norm(&[], 1).is_err());
    }

    fn values(m: usize) -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), m)
            .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn u2_matches_the_fourier_identity(f in values(16)) {
            let lhs = gowers_norm(&f, 2).unwrap().powi(4);
            prop_assert!((lhs - fourier_fourth_moment(&f)).abs() < 1e-10);
        }

        #[test]
        fn norms_increase_with_order(f in (1usize..=32).prop_flat_map(values), k in 1u32..3) {
            let a = gowers_norm(&f, k).unwrap();
            let b = gowers_norm(&f, k + 1).unwrap();
            prop_assert!(a <= b + 1e-9, "{a} > {b}");
        }
    }
}
