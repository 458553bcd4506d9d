//! Deterministic weighted summation over `n`.
//!
//! The range is cut into pieces at fixed multiples of [`PIECE`] and at every
//! checkpoint. Pieces are summed independently (compensated, ascending `n`)
//! and then combined with a pairwise tree whose shape depends only on the
//! piece count, so the result is bit-identical for any worker count.

use num_complex::Complex64;
use rayon::prelude::*;

pub const PIECE: u64 = 4096;

/// Neumaier's compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ComplexSum {
    re: Neumaier,
    im: Neumaier,
}

impl ComplexSum {
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Compensated sum of a slice in index order.
pub fn compensated_sum(values: impl IntoIterator<Item = Complex64>) -> Complex64 {
    let mut acc = ComplexSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// For each checkpoint `N_k`, the vector `Σ_{start < n ≤ N_k} w(n)·g(n)`.
///
/// `summand(n, buf)` fills `buf` (length `width`) with `g(n)`; it is only
/// called where the weight is nonzero.
pub fn checkpoint_sums<W, G>(
    start: u64,
    checkpoints: &[u64],
    width: usize,
    weight: W,
    summand: G,
) -> Vec<Vec<Complex64>>
where
    W: Fn(u64) -> f64 + Sync,
    G: Fn(u64, &mut [Complex64]) + Sync,
{
    let Some(&last) = checkpoints.last() else {
        return Vec::new();
    };
    debug_assert!(checkpoints.windows(2).all(|w| w[0] < w[1]));
    debug_assert!(checkpoints[0] > start);

    let mut bounds = vec![start];
    let mut next_cp = checkpoints.iter().peekable();
    let mut edge = (start / PIECE + 1) * PIECE;
    loop {
        let cp = next_cp.peek().copied().copied();
        let b = match cp {
            Some(c) if c <= edge => {
                next_cp.next();
                c
            }
            _ => edge,
        };
        if b > last {
            break;
        }
        if b > *bounds.last().expect("nonempty") {
            bounds.push(b);
        }
        if b == edge {
            edge += PIECE;
        }
        if b == last {
            break;
        }
    }

    let pieces: Vec<Vec<Complex64>> = bounds
        .par_windows(2)
        .map(|w| {
            let mut acc = vec![ComplexSum::default(); width];
            let mut buf = vec![Complex64::new(0.0, 0.0); width];
            for n in w[0] + 1..=w[1] {
                let wt = weight(n);
                if wt == 0.0 {
                    continue;
                }
                summand(n, &mut buf);
                for (a, v) in acc.iter_mut().zip(&buf) {
                    a.add(v * wt);
                }
            }
            acc.iter().map(ComplexSum::value).collect()
        })
        .collect();

    checkpoints
        .iter()
        .map(|&cp| {
            let count = bounds[1..].iter().take_while(|&&b| b <= cp).count();
            pairwise(&pieces[..count], width)
        })
        .collect()
}

fn pairwise(pieces: &[Vec<Complex64>], width: usize) -> Vec<Complex64> {
    match pieces.len() {
        0 => vec![Complex64::new(0.0, 0.0); width],
        1 => pieces[0].clone(),
        len => {
            let (a, b) = pieces.split_at(len / 2);
            let (a, b) = (pairwise(a, width), pairwise(b, width));
            a.iter().zip(&b).map(|(x, y)| x + y).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_cancelled_mass() {
        let mut s = Neumaier::default();
        for x in [1.0, 1e100, 1.0, -1e100] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn checkpoint_sums_match_direct_sums() {
        let cps = [5, 4096, 4097, 10_000, 20_000];
        let sums = checkpoint_sums(
            0,
            &cps,
            2,
            |n| if n % 3 == 0 { 0.0 } else { 1.0 },
            |n, buf| {
                buf[0] = Complex64::new(n as f64, 0.0);
                buf[1] = Complex64::new(0.0, 1.0);
            },
        );
        for (cp, s) in cps.iter().zip(&sums) {
            let direct: f64 = (1..=*cp).filter(|n| n % 3 != 0).map(|n| n as f64).sum();
            let count = (1..=*cp).filter(|n| n % 3 != 0).count() as f64;
            assert_eq!(s[0].re, direct);
            assert_eq!(s[1].im, count);
        }
    }

    #[test]
    fn offsets_and_thread_counts_do_not_change_bits() {
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    checkpoint_sums(
                        1234,
                        &[2000, 50_000, 99_999],
                        1,
                        |n| 1.0 / n as f64,
                        |n, buf| buf[0] = Complex64::from_polar(1.0, n as f64 * 0.7),
                    )
                })
        };
        let one = run(1);
        for t in [2, 4, 8] {
            let other = run(t);
            for (a, b) in one.iter().zip(&other) {
                assert_eq!(a[0].re.to_bits(), b[0].re.to_bits());
                assert_eq!(a[0].im.to_bits(), b[0].im.to_bits());
            }
        }
    }
}
