//! Prime sieve and the von Mangoldt weights `Λ′`, `Λ′_{w,r}`.

use crate::error::{Error, Result};

/// Default ceiling on sieve size; raise it with [`SieveTable::with_cap`].
pub const DEFAULT_SIEVE_CAP: u64 = 1_000_000_000;

/// Limits above this are sieved segment by segment.
pub const SEGMENTED_ABOVE: u64 = 100_000_000;

const SEGMENT_BITS: u64 = 1 << 22;

/// Primality table for `[0, limit]`, with `π(n)` by rank queries.
#[derive(Clone, Debug)]
pub struct SieveTable {
    limit: u64,
    bits: Vec<u64>,
    rank: Vec<u32>,
    primes: Vec<u32>,
}

impl SieveTable {
    pub fn new(limit: u64) -> Result<Self> {
        Self::with_cap(limit, DEFAULT_SIEVE_CAP)
    }

    pub fn with_cap(limit: u64, cap: u64) -> Result<Self> {
        if limit < 2 {
            return Err(Error::invalid(format!("sieve limit must be at least 2, got {limit}")));
        }
        if limit > cap.min(u32::MAX as u64) {
            return Err(Error::LimitExceeded(format!(
                "sieve limit {limit} exceeds the cap {}",
                cap.min(u32::MAX as u64)
            )));
        }
        let bits = if limit > SEGMENTED_ABOVE {
            segmented_sieve(limit)
        } else {
            plain_sieve(limit)
        };
        let mut rank = Vec::with_capacity(bits.len() + 1);
        let mut acc = 0u32;
        for w in &bits {
            rank.push(acc);
            acc += w.count_ones();
        }
        rank.push(acc);
        let mut primes = Vec::with_capacity(acc as usize);
        for (i, &w) in bits.iter().enumerate() {
            let mut w = w;
            while w != 0 {
                let b = w.trailing_zeros() as u64;
                primes.push((i as u64 * 64 + b) as u32);
                w &= w - 1;
            }
        }
        Ok(SieveTable {
            limit,
            bits,
            rank,
            primes,
        })
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn primes(&self) -> &[u32] {
        &self.primes
    }

    /// Primality; beyond the table falls back to Miller–Rabin.
    pub fn is_prime(&self, n: u64) -> bool {
        if n <= self.limit {
            self.bits[(n / 64) as usize] >> (n % 64) & 1 == 1
        } else {
            is_prime_u64(n)
        }
    }

    /// `π(n)` for `n ≤ limit`.
    pub fn pi(&self, n: u64) -> u64 {
        let n = n.min(self.limit);
        let word = (n / 64) as usize;
        let mask = if n % 64 == 63 {
            u64::MAX
        } else {
            (1u64 << (n % 64 + 1)) - 1
        };
        u64::from(self.rank[word]) + u64::from((self.bits[word] & mask).count_ones())
    }

    /// `Λ′(n) = log n` on primes, 0 elsewhere.
    pub fn lambda_prime(&self, n: u64) -> f64 {
        if self.is_prime(n) {
            (n as f64).ln()
        } else {
            0.0
        }
    }
}

fn plain_sieve(limit: u64) -> Vec<u64> {
    let words = (limit / 64 + 1) as usize;
    let mut bits = vec![u64::MAX; words];
    clear_above(&mut bits, limit);
    bits[0] &= !0b11;
    let mut p = 2u64;
    while p * p <= limit {
        if bits[(p / 64) as usize] >> (p % 64) & 1 == 1 {
            let mut m = p * p;
            while m <= limit {
                bits[(m / 64) as usize] &= !(1 << (m % 64));
                m += p;
            }
        }
        p += 1;
    }
    bits
}

fn segmented_sieve(limit: u64) -> Vec<u64> {
    let root = isqrt(limit);
    let base = plain_sieve(root.max(2));
    let base_primes: Vec<u64> = (2..=root)
        .filter(|&p| base[(p / 64) as usize] >> (p % 64) & 1 == 1)
        .collect();
    let words = (limit / 64 + 1) as usize;
    let mut bits = vec![u64::MAX; words];
    clear_above(&mut bits, limit);
    bits[0] &= !0b11;
    let mut lo = 0u64;
    while lo <= limit {
        let hi = (lo + SEGMENT_BITS - 1).min(limit);
        for &p in &base_primes {
            let start = (p * p).max(lo.div_ceil(p) * p);
            let mut m = start;
            while m <= hi {
                bits[(m / 64) as usize] &= !(1 << (m % 64));
                m += p;
            }
        }
        lo += SEGMENT_BITS;
    }
    bits
}

fn clear_above(bits: &mut [u64], limit: u64) {
    let last = bits.len() - 1;
    let keep = limit % 64 + 1;
    if keep < 64 {
        bits[last] &= (1u64 << keep) - 1;
    }
}

fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Deterministic Miller–Rabin for all `u64`.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let s = d.trailing_zeros();
    d >>= s;
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut a: u64, mut e: u64| {
        let mut r = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                r = mul(r, a);
            }
            a = mul(a, a);
            e >>= 1;
        }
        r
    };
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// The sieve for `[0, n]`.
pub fn primes_up_to(n: u64) -> Result<SieveTable> {
    SieveTable::new(n)
}

/// `Λ′(n)` without a table.
pub fn lambda_prime(n: u64) -> f64 {
    if is_prime_u64(n) {
        (n as f64).ln()
    } else {
        0.0
    }
}

/// `W = Π p` over primes `p < w`, together with `φ(W) = Π (p − 1)`.
#[allow(non_snake_case)]
pub fn W_of(w: u64) -> Result<(u64, u64)> {
    if w <= 2 {
        return Err(Error::invalid(format!("w must exceed 2, got {w}")));
    }
    let mut big_w = 1u64;
    let mut phi = 1u64;
    for p in (2..w).filter(|&p| is_prime_u64(p)) {
        big_w = big_w
            .checked_mul(p)
            .ok_or_else(|| Error::LimitExceeded(format!("W overflows u64 at w = {w}")))?;
        phi *= p - 1;
    }
    Ok((big_w, phi))
}

/// The W-tricked weight `Λ′_{w,r}(n) = (φ(W)/W)·Λ′(Wn + r)`.
#[derive(Clone, Debug)]
pub struct ModifiedLambda {
    pub w: u64,
    pub r: u64,
    pub big_w: u64,
    pub phi: u64,
}

impl ModifiedLambda {
    pub fn new(w: u64, r: u64) -> Result<Self> {
        let (big_w, phi) = W_of(w)?;
        if r < 1 || r > big_w {
            return Err(Error::invalid(format!("r must lie in [1, {big_w}], got {r}")));
        }
        Ok(ModifiedLambda { w, r, big_w, phi })
    }

    /// The argument `Wn + r` fed to `Λ′`.
    pub fn argument(&self, n: u64) -> u64 {
        self.big_w * n + self.r
    }

    pub fn scale(&self) -> f64 {
        self.phi as f64 / self.big_w as f64
    }

    pub fn at(&self, sieve: &SieveTable, n: u64) -> f64 {
        self.scale() * sieve.lambda_prime(self.argument(n))
    }
}

pub fn modified_lambda(w: u64, r: u64, n: u64) -> Result<f64> {
    let m = ModifiedLambda::new(w, r)?;
    Ok(m.scale() * lambda_prime(m.argument(n)))
}

/// Residues `1 ≤ r ≤ W` coprime to `W`.
pub fn coprime_residues(big_w: u64) -> Vec<u64> {
    (1..=big_w).filter(|&r| num_integer::gcd(r, big_w) == 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
    }

    #[test]
    fn small_tables() {
        let s = primes_up_to(10).unwrap();
        assert_eq!(s.primes(), &[2, 3, 5, 7]);
        assert_eq!(s.pi(10), 4);
        assert_eq!(primes_up_to(2).unwrap().pi(2), 1);
        let s = primes_up_to(100).unwrap();
        assert_eq!(s.pi(100), 25);
        assert_eq!(s.pi(63), 18);
        assert_eq!(s.pi(64), 18);
        assert!(primes_up_to(1).is_err());
        assert!(SieveTable::with_cap(1000, 999).is_err());
    }

    #[test]
    fn segmented_matches_plain() {
        let limit = 3 * SEGMENT_BITS + 12345;
        assert_eq!(segmented_sieve(limit), plain_sieve(limit));
    }

    #[test]
    fn prime_counts_against_known_values() {
        let s = primes_up_to(1_000_000).unwrap();
        assert_eq!(s.pi(1_000_000), 78_498);
        assert_eq!(s.pi(10_000), 1_229);
    }

    #[test]
    fn lambda_values() {
        assert_eq!(lambda_prime(7), 7f64.ln());
        assert_eq!(lambda_prime(8), 0.0);
        assert_eq!(lambda_prime(1), 0.0);
        let s = primes_up_to(50).unwrap();
        assert_eq!(s.lambda_prime(47), 47f64.ln());
        // beyond the table
        assert_eq!(s.lambda_prime(1_000_003), 1_000_003f64.ln());
    }

    #[test]
    fn w_values() {
        assert_eq!(W_of(3).unwrap(), (2, 1));
        assert_eq!(W_of(5).unwrap(), (6, 2));
        assert_eq!(W_of(8).unwrap(), (210, 48));
        assert!(W_of(2).is_err());
        assert!(W_of(60).is_err());
    }

    #[test]
    fn modified_lambda_values() {
        assert_eq!(modified_lambda(3, 1, 3).unwrap(), 7f64.ln() / 2.0);
        assert_eq!(modified_lambda(3, 1, 4).unwrap(), 0.0);
        assert!(modified_lambda(3, 3, 1).is_err());
        // Wn + r = 1 is impossible for n ≥ 1, r ≥ 1; n = 0 reaches it
        assert_eq!(modified_lambda(3, 1, 0).unwrap(), 0.0);
    }

    #[test]
    fn normalized_lambda_sum_near_one() {
        let s = primes_up_to(1_000_000).unwrap();
        let total: f64 = s.primes().iter().map(|&p| (p as f64).ln()).sum();
        let ratio = total / 1e6;
        assert!((0.98..=1.02).contains(&ratio), "{ratio}");
    }

    #[test]
    fn non_coprime_classes_carry_no_primes() {
        let s = primes_up_to(300_000).unwrap();
        for w in [3u64, 5, 7] {
            let (big_w, _) = W_of(w).unwrap();
            for r in (1..=big_w).filter(|&r| num_integer::gcd(r, big_w) > 1) {
                let m = ModifiedLambda::new(w, r).unwrap();
                for n in 1..=10_000u64 {
                    assert_eq!(m.at(&s, n), 0.0, "w={w} r={r} n={n}");
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn sieve_agrees_with_trial_division(n in 0u64..200_000) {
            static TABLE: std::sync::OnceLock<SieveTable> = std::sync::OnceLock::new();
            let s = TABLE.get_or_init(|| primes_up_to(200_000).unwrap());
            prop_assert_eq!(s.is_prime(n), trial_division(n));
            prop_assert_eq!(is_prime_u64(n), trial_division(n));
        }
    }
}
