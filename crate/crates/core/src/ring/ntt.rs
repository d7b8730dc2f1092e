//! Negacyclic number-theoretic transforms over word-sized primes.
//!
//! Every prime in [`NTT_PRIMES_60`] / [`NTT_PRIMES_49`] satisfies p ≡ 1 (mod 2^14),
//! so a primitive 2N-th root of unity exists for all power-of-two N up to 8192 and
//! multiplication in Z_p[X]/(X^N+1) reduces to pointwise products in the transform
//! domain.

/// 60-bit primes p ≡ 1 (mod 2^14), descending from 2^60.
pub const NTT_PRIMES_60: [u64; 6] = [
    1152921504606830593, // 0xFFFFFFFFFFFC001
    1152921504606748673, // 0xFFFFFFFFFFE8001
    1152921504606683137, // 0xFFFFFFFFFFD8001
    1152921504606601217, // 0xFFFFFFFFFFC4001
    1152921504606584833, // 0xFFFFFFFFFFC0001
    1152921504606109697, // 0xFFFFFFFFFF4C001
];

/// 49-bit primes p ≡ 1 (mod 2^14).
pub const NTT_PRIMES_49: [u64; 2] = [
    562949952847873, // 0x1FFFFFF74001... see test_primes
    562949952798721,
];

pub const MAX_LOG2_N: u32 = 13;

#[inline(always)]
pub fn mulmod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

#[inline(always)]
fn addmod(a: u64, b: u64, p: u64) -> u64 {
    let s = a + b;
    if s >= p {
        s - p
    } else {
        s
    }
}

#[inline(always)]
fn submod(a: u64, b: u64, p: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + p - b
    }
}

/// Shoup multiplication by a constant w with precomputed w' = floor(w * 2^64 / p).
#[inline(always)]
fn mulmod_shoup(x: u64, w: u64, w_shoup: u64, p: u64) -> u64 {
    let q = ((x as u128 * w_shoup as u128) >> 64) as u64;
    let r = x.wrapping_mul(w).wrapping_sub(q.wrapping_mul(p));
    if r >= p {
        r - p
    } else {
        r
    }
}

pub fn powmod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mulmod(acc, base, p);
        }
        base = mulmod(base, base, p);
        exp >>= 1;
    }
    acc
}

pub fn invmod(a: u64, p: u64) -> u64 {
    powmod(a, p - 2, p)
}

/// Deterministic Miller-Rabin, exact for all u64.
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
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mulmod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    x.reverse_bits() >> (usize::BITS - bits)
}

/// Precomputed transform tables for one (prime, degree) pair.
pub struct NttTable {
    pub p: u64,
    pub n: usize,
    // psi^i in bit-reversed order, with Shoup companions
    w: Vec<u64>,
    w_shoup: Vec<u64>,
    w_inv: Vec<u64>,
    w_inv_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

impl NttTable {
    pub fn new(p: u64, n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2);
        let log_n = n.trailing_zeros();
        assert!(
            log_n <= MAX_LOG2_N,
            "degree exceeds supported transform size"
        );
        assert_eq!(
            (p - 1) % (2 * n as u64),
            0,
            "prime does not support 2N-th roots"
        );

        let psi = find_primitive_2n_root(p, n as u64);
        let psi_inv = invmod(psi, p);

        let mut w = vec![0u64; n];
        let mut w_inv = vec![0u64; n];
        let mut pow = 1u64;
        let mut pow_inv = 1u64;
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            w[r] = pow;
            w_inv[r] = pow_inv;
            pow = mulmod(pow, psi, p);
            pow_inv = mulmod(pow_inv, psi_inv, p);
        }
        let shoup = |v: &Vec<u64>| {
            v.iter()
                .map(|&x| (((x as u128) << 64) / p as u128) as u64)
                .collect()
        };
        let n_inv = invmod(n as u64, p);
        Self {
            p,
            n,
            w_shoup: shoup(&w),
            w_inv_shoup: shoup(&w_inv),
            w,
            w_inv,
            n_inv,
            n_inv_shoup: (((n_inv as u128) << 64) / p as u128) as u64,
        }
    }

    /// In-place forward negacyclic NTT (Cooley-Tukey); output in bit-reversed order.
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let p = self.p;
        let mut t = self.n;
        let mut m = 1;
        while m < self.n {
            t /= 2;
            for i in 0..m {
                let w = self.w[m + i];
                let ws = self.w_shoup[m + i];
                let base = 2 * i * t;
                for j in base..base + t {
                    let u = a[j];
                    let v = mulmod_shoup(a[j + t], w, ws, p);
                    a[j] = addmod(u, v, p);
                    a[j + t] = submod(u, v, p);
                }
            }
            m *= 2;
        }
    }

    /// In-place inverse negacyclic NTT (Gentleman-Sande); input in bit-reversed order.
    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let p = self.p;
        let mut t = 1;
        let mut m = self.n;
        while m > 1 {
            let h = m / 2;
            for i in 0..h {
                let w = self.w_inv[h + i];
                let ws = self.w_inv_shoup[h + i];
                let base = 2 * i * t;
                for j in base..base + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = addmod(u, v, p);
                    a[j + t] = mulmod_shoup(submod(u, v, p), w, ws, p);
                }
            }
            t *= 2;
            m = h;
        }
        for x in a.iter_mut() {
            *x = mulmod_shoup(*x, self.n_inv, self.n_inv_shoup, p);
        }
    }

    /// Pointwise product c[i] = a[i] * b[i] mod p.
    pub fn pointwise(&self, a: &[u64], b: &[u64], c: &mut [u64]) {
        for i in 0..self.n {
            c[i] = mulmod(a[i], b[i], self.p);
        }
    }

    /// c[i] += a[i] * b[i] mod p.
    pub fn pointwise_acc(&self, a: &[u64], b: &[u64], c: &mut [u64]) {
        for i in 0..self.n {
            c[i] = addmod(c[i], mulmod(a[i], b[i], self.p), self.p);
        }
    }

    /// Negacyclic product of two residue vectors in coefficient order.
    pub fn convolve(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        let mut fa = a.to_vec();
        let mut fb = b.to_vec();
        self.forward(&mut fa);
        self.forward(&mut fb);
        let mut fc = vec![0u64; self.n];
        self.pointwise(&fa, &fb, &mut fc);
        self.inverse(&mut fc);
        fc
    }
}

fn find_primitive_2n_root(p: u64, n: u64) -> u64 {
    // psi must satisfy psi^n = -1 mod p.
    let exp = (p - 1) / (2 * n);
    let mut candidate = 2u64;
    loop {
        let psi = powmod(candidate, exp, p);
        if powmod(psi, n, p) == p - 1 {
            return psi;
        }
        candidate += 1;
        assert!(
            candidate < 1000,
            "no primitive root found; modulus not prime?"
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn test_primes() {
        for p in NTT_PRIMES_60 {
            assert!(is_prime_u64(p), "{p} not prime");
            assert_eq!((p - 1) % (1 << 14), 0);
            assert_eq!(p >> 59, 1);
        }
        for p in NTT_PRIMES_49 {
            assert!(is_prime_u64(p), "{p} not prime");
            assert_eq!((p - 1) % (1 << 14), 0);
            assert_eq!(p >> 48, 1);
        }
    }

    fn schoolbook_negacyclic(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
        let n = a.len();
        let mut c = vec![0u64; n];
        for i in 0..n {
            for j in 0..n {
                let prod = mulmod(a[i], b[j], p);
                let k = (i + j) % n;
                if i + j < n {
                    c[k] = addmod(c[k], prod, p);
                } else {
                    c[k] = submod(c[k], prod, p);
                }
            }
        }
        c
    }

    #[test]
    fn forward_inverse_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for n in [8usize, 64, 1024] {
            for &p in &[NTT_PRIMES_60[0], NTT_PRIMES_49[0]] {
                let table = NttTable::new(p, n);
                let a: Vec<u64> = (0..n).map(|_| rng.gen_range(0..p)).collect();
                let mut f = a.clone();
                table.forward(&mut f);
                table.inverse(&mut f);
                assert_eq!(f, a);
            }
        }
    }

    #[test]
    fn convolution_matches_schoolbook() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for n in [8usize, 64, 256] {
            let p = NTT_PRIMES_60[1];
            let table = NttTable::new(p, n);
            for _ in 0..20 {
                let a: Vec<u64> = (0..n).map(|_| rng.gen_range(0..p)).collect();
                let b: Vec<u64> = (0..n).map(|_| rng.gen_range(0..p)).collect();
                assert_eq!(table.convolve(&a, &b), schoolbook_negacyclic(&a, &b, p));
            }
        }
    }

    #[test]
    fn negacyclic_wrap_sign() {
        // X^(n-1) * X = X^n = -1
        let p = NTT_PRIMES_60[0];
        let n = 8;
        let table = NttTable::new(p, n);
        let mut a = vec![0u64; n];
        a[n - 1] = 1;
        let mut b = vec![0u64; n];
        b[1] = 1;
        let c = table.convolve(&a, &b);
        let mut expected = vec![0u64; n];
        expected[0] = p - 1;
        assert_eq!(c, expected);
    }
}
