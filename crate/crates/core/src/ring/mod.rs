//! Exact arithmetic in the negacyclic rings R_q = Z_q[X]/(X^N+1) and
//! R_t = Z_t[X]/(X^N+1).
//!
//! The ciphertext modulus q is a product of one or two word-sized NTT primes
//! (up to 120 bits total) and multiplication mod q runs in the residue system
//! of its factors. The plaintext modulus t is a power of two, so products in
//! R_t are computed as exact integer convolutions over a CRT prime basis and
//! reduced afterwards.

pub mod ntt;

use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_traits::{ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use ntt::{is_prime_u64, mulmod, powmod, NttTable, NTT_PRIMES_60};

/// Which coefficient modulus a polynomial lives under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModTag {
    /// ciphertext ring R_q
    Cipher,
    /// plaintext ring R_t
    Plain,
}

impl ModTag {
    pub fn as_u8(self) -> u8 {
        match self {
            ModTag::Cipher => 0,
            ModTag::Plain => 1,
        }
    }
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(ModTag::Cipher),
            1 => Ok(ModTag::Plain),
            _ => Err(Error::Serialization(format!("unknown modulus tag {v}"))),
        }
    }
}

/// Ring dimensions and moduli shared by every polynomial of one instantiation.
pub struct RingParams {
    n: usize,
    q: u128,
    q_factors: Vec<u64>,
    log_t: u32,
    lambda: u32,
    delta: u128,
    q_tables: Vec<NttTable>,
    plain_conv: CrtConvolver,
    tensor_conv: CrtConvolver,
}

impl std::fmt::Debug for RingParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RingParams")
            .field("n", &self.n)
            .field("q_factors", &self.q_factors)
            .field("log_t", &self.log_t)
            .finish()
    }
}

impl PartialEq for RingParams {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.q_factors == other.q_factors && self.log_t == other.log_t
    }
}
impl Eq for RingParams {}

impl RingParams {
    /// Build parameters from a degree, the prime factorization of q and log2(t).
    pub fn new(n: usize, q_factors: &[u64], log_t: u32) -> Result<Arc<Self>> {
        if !n.is_power_of_two() || n < 8 {
            return Err(Error::InvalidParams(format!(
                "N must be a power of two >= 8, got {n}"
            )));
        }
        if q_factors.is_empty() || q_factors.len() > 2 {
            return Err(Error::InvalidParams(
                "q must be a product of 1 or 2 primes".into(),
            ));
        }
        let mut q: u128 = 1;
        for (i, &p) in q_factors.iter().enumerate() {
            if !is_prime_u64(p) {
                return Err(Error::InvalidParams(format!("q factor {p} is not prime")));
            }
            if (p - 1) % (2 * n as u64) != 0 {
                return Err(Error::InvalidParams(format!(
                    "q factor {p} lacks 2N-th roots"
                )));
            }
            if q_factors[..i].contains(&p) {
                return Err(Error::InvalidParams("q factors must be distinct".into()));
            }
            q *= p as u128;
        }
        if bit_len(q) > 120 {
            return Err(Error::InvalidParams("q exceeds 120 bits".into()));
        }
        if log_t == 0 || log_t > 40 {
            return Err(Error::InvalidParams(format!(
                "log2(t) = {log_t} out of range"
            )));
        }
        let t = 1u128 << log_t;
        if t >= q {
            return Err(Error::InvalidParams("t must be smaller than q".into()));
        }

        let q_tables = q_factors.iter().map(|&p| NttTable::new(p, n)).collect();
        // exact integer convolution bases: magnitudes bounded by N*(mod/2)^2
        let plain_bits = 2 + n.ilog2() + 2 * log_t;
        let tensor_bits = 2 + n.ilog2() + 2 * bit_len(q);
        Ok(Arc::new(Self {
            n,
            q,
            q_factors: q_factors.to_vec(),
            log_t,
            lambda: 128,
            delta: q / t,
            q_tables,
            plain_conv: CrtConvolver::new(n, plain_bits),
            tensor_conv: CrtConvolver::new(n, tensor_bits),
        }))
    }

    /// The production-sized instantiation: N = 4096, 109-bit q
    /// (60+49-bit primes), t = 2^20.
    pub fn standard() -> Arc<Self> {
        Self::new(4096, &[ntt::NTT_PRIMES_60[0], ntt::NTT_PRIMES_49[0]], 20).unwrap()
    }

    /// N = 2048 with a single 60-bit prime and t = 2^12; fast variant for tests.
    pub fn desk() -> Arc<Self> {
        Self::new(2048, &[ntt::NTT_PRIMES_60[0]], 12).unwrap()
    }

    /// N = 1024 two-prime variant, roomy plaintext space for quantization sweeps.
    pub fn small(log_t: u32) -> Arc<Self> {
        Self::new(1024, &[ntt::NTT_PRIMES_60[0], ntt::NTT_PRIMES_49[0]], log_t).unwrap()
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn q(&self) -> u128 {
        self.q
    }
    pub fn q_factors(&self) -> &[u64] {
        &self.q_factors
    }
    pub fn log_t(&self) -> u32 {
        self.log_t
    }
    pub fn t(&self) -> u128 {
        1u128 << self.log_t
    }
    /// Scale factor applied to plaintexts on encryption.
    pub fn delta(&self) -> u128 {
        self.delta
    }
    pub fn lambda(&self) -> u32 {
        self.lambda
    }
    pub fn q_bits(&self) -> u32 {
        bit_len(self.q)
    }

    pub fn modulus(&self, tag: ModTag) -> u128 {
        match tag {
            ModTag::Cipher => self.q,
            ModTag::Plain => self.t(),
        }
    }

    /// Stable 64-bit fingerprint of (N, q, t) used in wire headers.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.n as u64);
        for &f in &self.q_factors {
            eat(f);
        }
        eat(self.log_t as u64);
        h
    }

    pub(crate) fn q_tables(&self) -> &[NttTable] {
        &self.q_tables
    }
    pub(crate) fn tensor_conv(&self) -> &CrtConvolver {
        &self.tensor_conv
    }

    /// Recombine residues mod the q factors to a canonical residue in [0, q).
    pub(crate) fn crt_lift(&self, residues: &[u64]) -> u128 {
        match self.q_factors.len() {
            1 => residues[0] as u128,
            2 => {
                let (p1, p2) = (self.q_factors[0], self.q_factors[1]);
                let inv_p1 = powmod(p1 % p2, p2 - 2, p2);
                let x1 = residues[0];
                let x2 = residues[1];
                let diff = (x2 + p2 - x1 % p2) % p2;
                let k = mulmod(diff, inv_p1, p2);
                x1 as u128 + p1 as u128 * k as u128
            }
            _ => unreachable!(),
        }
    }
}

fn bit_len(v: u128) -> u32 {
    128 - v.leading_zeros()
}

/// An element of R_q or R_t: exactly N coefficients in [0, modulus).
#[derive(Clone)]
pub struct RingPoly {
    params: Arc<RingParams>,
    tag: ModTag,
    coeffs: Vec<u128>,
}

impl std::fmt::Debug for RingPoly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "RingPoly(n={}, tag={:?}, c[0..4]={:?})",
            self.params.n,
            self.tag,
            &self.coeffs[..4.min(self.coeffs.len())]
        )
    }
}

impl RingPoly {
    pub fn zero(params: &Arc<RingParams>, tag: ModTag) -> Self {
        Self {
            params: params.clone(),
            tag,
            coeffs: vec![0; params.n],
        }
    }

    pub fn one(params: &Arc<RingParams>, tag: ModTag) -> Self {
        let mut p = Self::zero(params, tag);
        p.coeffs[0] = 1;
        p
    }

    pub fn monomial(params: &Arc<RingParams>, tag: ModTag, degree: usize) -> Self {
        assert!(degree < params.n);
        let mut p = Self::zero(params, tag);
        p.coeffs[degree] = 1;
        p
    }

    pub fn from_coeffs(params: &Arc<RingParams>, tag: ModTag, coeffs: Vec<u128>) -> Result<Self> {
        if coeffs.len() != params.n {
            return Err(Error::DimensionMismatch {
                expected: params.n,
                got: coeffs.len(),
            });
        }
        let m = params.modulus(tag);
        if coeffs.iter().any(|&c| c >= m) {
            return Err(Error::Domain("coefficient out of range".into()));
        }
        Ok(Self {
            params: params.clone(),
            tag,
            coeffs,
        })
    }

    /// Build from signed values, reducing into [0, modulus).
    pub fn from_signed(params: &Arc<RingParams>, tag: ModTag, vals: &[i128]) -> Result<Self> {
        if vals.len() != params.n {
            return Err(Error::DimensionMismatch {
                expected: params.n,
                got: vals.len(),
            });
        }
        let m = params.modulus(tag) as i128;
        let coeffs = vals.iter().map(|&v| v.rem_euclid(m) as u128).collect();
        Ok(Self {
            params: params.clone(),
            tag,
            coeffs,
        })
    }

    pub fn params(&self) -> &Arc<RingParams> {
        &self.params
    }
    pub fn tag(&self) -> ModTag {
        self.tag
    }
    pub fn coeffs(&self) -> &[u128] {
        &self.coeffs
    }
    pub fn coeff(&self, i: usize) -> u128 {
        self.coeffs[i]
    }
    pub fn modulus(&self) -> u128 {
        self.params.modulus(self.tag)
    }

    fn check_compat(&self, other: &Self) -> Result<()> {
        if !Arc::ptr_eq(&self.params, &other.params) && self.params != other.params {
            return Err(Error::ParamMismatch("ring parameters differ".into()));
        }
        if self.tag != other.tag {
            return Err(Error::ParamMismatch("modulus tags differ".into()));
        }
        Ok(())
    }

    /// Coefficient-wise sum mod the shared modulus.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compat(other)?;
        let m = self.modulus();
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| {
                let s = a + b;
                if s >= m {
                    s - m
                } else {
                    s
                }
            })
            .collect();
        Ok(Self {
            params: self.params.clone(),
            tag: self.tag,
            coeffs,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compat(other)?;
        let m = self.modulus();
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| if a >= b { a - b } else { a + m - b })
            .collect();
        Ok(Self {
            params: self.params.clone(),
            tag: self.tag,
            coeffs,
        })
    }

    pub fn neg(&self) -> Self {
        let m = self.modulus();
        let coeffs = self
            .coeffs
            .iter()
            .map(|&a| if a == 0 { 0 } else { m - a })
            .collect();
        Self {
            params: self.params.clone(),
            tag: self.tag,
            coeffs,
        }
    }

    /// Product in Z_mod[X]/(X^N+1).
    ///
    /// Mod q this runs per prime factor and recombines; mod t (a power of two)
    /// the exact integer convolution is taken over a CRT basis and reduced.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_compat(other)?;
        let coeffs = match self.tag {
            ModTag::Cipher => {
                let tables = self.params.q_tables();
                let mut residues: Vec<Vec<u64>> = Vec::with_capacity(tables.len());
                for table in tables {
                    let a: Vec<u64> = self
                        .coeffs
                        .iter()
                        .map(|&c| (c % table.p as u128) as u64)
                        .collect();
                    let b: Vec<u64> = other
                        .coeffs
                        .iter()
                        .map(|&c| (c % table.p as u128) as u64)
                        .collect();
                    residues.push(table.convolve(&a, &b));
                }
                (0..self.params.n)
                    .map(|i| {
                        let r: Vec<u64> = residues.iter().map(|v| v[i]).collect();
                        self.params.crt_lift(&r)
                    })
                    .collect()
            }
            ModTag::Plain => {
                let conv = &self.params.plain_conv;
                let fa = conv.forward_signed(&self.center_lift());
                let fb = conv.forward_signed(&other.center_lift());
                let prod = conv.pointwise(&fa, &fb);
                let t = self.modulus() as i128;
                conv.inverse_centered_i128(&prod)
                    .into_iter()
                    .map(|v| v.rem_euclid(t) as u128)
                    .collect()
            }
        };
        Ok(Self {
            params: self.params.clone(),
            tag: self.tag,
            coeffs,
        })
    }

    /// Multiply every coefficient by a scalar; scalar * coeff must stay below 2^127.
    pub fn scalar_mul(&self, scalar: u128) -> Self {
        let m = self.modulus();
        let coeffs = self
            .coeffs
            .iter()
            .map(|&c| {
                debug_assert!(scalar.checked_mul(c).is_some());
                (scalar * c) % m
            })
            .collect();
        Self {
            params: self.params.clone(),
            tag: self.tag,
            coeffs,
        }
    }

    /// Coefficients uniform over the modulus.
    pub fn sample_uniform<R: Rng>(params: &Arc<RingParams>, tag: ModTag, rng: &mut R) -> Self {
        let m = params.modulus(tag);
        let coeffs = (0..params.n).map(|_| uniform_u128(m, rng)).collect();
        Self {
            params: params.clone(),
            tag,
            coeffs,
        }
    }

    /// Coefficients uniform over {-1, 0, 1}, represented mod q.
    pub fn sample_ternary<R: Rng>(params: &Arc<RingParams>, rng: &mut R) -> Self {
        let q = params.q;
        let coeffs = (0..params.n)
            .map(|_| match rng.gen_range(0u8..3) {
                0 => 0u128,
                1 => 1,
                _ => q - 1,
            })
            .collect();
        Self {
            params: params.clone(),
            tag: ModTag::Cipher,
            coeffs,
        }
    }

    /// Centered binomial error with parameter eta, represented mod q.
    pub fn sample_cbd<R: Rng>(params: &Arc<RingParams>, eta: u32, rng: &mut R) -> Self {
        assert!(eta >= 1 && eta <= 21);
        let q = params.q;
        let coeffs = (0..params.n)
            .map(|_| {
                let bits = rng.gen::<u64>();
                let a = (bits & ((1 << eta) - 1)).count_ones() as i64;
                let b = ((bits >> eta) & ((1 << eta) - 1)).count_ones() as i64;
                let v = a - b;
                if v >= 0 {
                    v as u128
                } else {
                    q - (-v) as u128
                }
            })
            .collect();
        Self {
            params: params.clone(),
            tag: ModTag::Cipher,
            coeffs,
        }
    }

    /// Signed interpretation: c if c < mod/2, else c - mod; mod/2 maps to -mod/2.
    pub fn center_lift(&self) -> Vec<i128> {
        let m = self.modulus();
        self.coeffs
            .iter()
            .map(|&c| {
                if c < m.div_ceil(2) {
                    c as i128
                } else {
                    c as i128 - m as i128
                }
            })
            .collect()
    }

    pub fn infinity_norm(&self) -> u128 {
        self.center_lift()
            .iter()
            .map(|&v| v.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    /// Reinterpret a plaintext-ring polynomial as q-residues (no scaling).
    pub fn lift_to_cipher(&self) -> Self {
        debug_assert_eq!(self.tag, ModTag::Plain);
        Self {
            params: self.params.clone(),
            tag: ModTag::Cipher,
            coeffs: self.coeffs.clone(),
        }
    }

    /// Wire form: 16-byte header {magic "RPLY", N, modulus bit-length, tag, pad}
    /// then fixed-width little-endian coefficients.
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = self.modulus();
        let width = (bit_len(m).div_ceil(8)) as usize;
        let mut out = Vec::with_capacity(16 + width * self.params.n);
        out.extend_from_slice(b"RPLY");
        out.extend_from_slice(&(self.params.n as u32).to_le_bytes());
        out.extend_from_slice(&(bit_len(m) as u16).to_le_bytes());
        out.push(self.tag.as_u8());
        out.extend_from_slice(&[0u8; 5]);
        for &c in &self.coeffs {
            out.extend_from_slice(&c.to_le_bytes()[..width]);
        }
        out
    }

    pub fn from_bytes(params: &Arc<RingParams>, data: &[u8]) -> Result<Self> {
        if data.len() < 16 || &data[0..4] != b"RPLY" {
            return Err(Error::Serialization("bad polynomial header".into()));
        }
        let n = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
        let bits = u16::from_le_bytes(data[8..10].try_into().unwrap()) as u32;
        let tag = ModTag::from_u8(data[10])?;
        if n != params.n {
            return Err(Error::ParamMismatch(format!("degree {n} != {}", params.n)));
        }
        let m = params.modulus(tag);
        if bits != bit_len(m) {
            return Err(Error::ParamMismatch("modulus bit-length mismatch".into()));
        }
        let width = (bits.div_ceil(8)) as usize;
        let body = &data[16..];
        if body.len() != width * n {
            return Err(Error::Serialization("truncated polynomial payload".into()));
        }
        let mut coeffs = Vec::with_capacity(n);
        for chunk in body.chunks_exact(width) {
            let mut buf = [0u8; 16];
            buf[..width].copy_from_slice(chunk);
            let c = u128::from_le_bytes(buf);
            if c >= m {
                return Err(Error::Serialization("coefficient exceeds modulus".into()));
            }
            coeffs.push(c);
        }
        Ok(Self {
            params: params.clone(),
            tag,
            coeffs,
        })
    }
}

/// Rejection-sampled uniform residue below `m`.
pub fn uniform_u128<R: Rng>(m: u128, rng: &mut R) -> u128 {
    let bits = bit_len(m);
    let mask = if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    };
    loop {
        let v = ((rng.gen::<u64>() as u128) << 64 | rng.gen::<u64>() as u128) & mask;
        if v < m {
            return v;
        }
    }
}

/// Exact integer negacyclic convolution over a basis of NTT primes, for values
/// whose products stay below half the basis product.
pub struct CrtConvolver {
    n: usize,
    tables: Vec<NttTable>,
    modulus: BigUint,
    // CRT weights: w_i = M_i * (M_i^{-1} mod p_i) with M_i = M / p_i
    weights: Vec<BigUint>,
}

/// Per-prime NTT-domain residues of one polynomial.
pub struct CrtForm {
    residues: Vec<Vec<u64>>,
}

impl CrtConvolver {
    pub fn new(n: usize, value_bits: u32) -> Self {
        let mut primes = Vec::new();
        let mut bits = 0u32;
        for &p in NTT_PRIMES_60.iter() {
            if bits >= value_bits + 1 {
                break;
            }
            primes.push(p);
            bits += 59;
        }
        assert!(
            bits >= value_bits + 1,
            "convolution basis too small for {value_bits} bits"
        );
        let tables: Vec<NttTable> = primes.iter().map(|&p| NttTable::new(p, n)).collect();
        let modulus: BigUint = primes.iter().fold(BigUint::from(1u32), |acc, &p| acc * p);
        let weights = primes
            .iter()
            .map(|&p| {
                let m_i = &modulus / p;
                let m_i_mod = (&m_i % p).to_u64_digits()[0];
                let y = powmod(m_i_mod, p - 2, p);
                m_i * y
            })
            .collect();
        Self {
            n,
            tables,
            modulus,
            weights,
        }
    }

    pub fn forward_signed(&self, vals: &[i128]) -> CrtForm {
        debug_assert_eq!(vals.len(), self.n);
        let residues = self
            .tables
            .iter()
            .map(|table| {
                let p = table.p as i128;
                let mut r: Vec<u64> = vals.iter().map(|&v| v.rem_euclid(p) as u64).collect();
                table.forward(&mut r);
                r
            })
            .collect();
        CrtForm { residues }
    }

    pub fn pointwise(&self, a: &CrtForm, b: &CrtForm) -> CrtForm {
        let residues = self
            .tables
            .iter()
            .enumerate()
            .map(|(k, table)| {
                let mut c = vec![0u64; self.n];
                table.pointwise(&a.residues[k], &b.residues[k], &mut c);
                c
            })
            .collect();
        CrtForm { residues }
    }

    pub fn pointwise_acc(&self, a: &CrtForm, b: &CrtForm, acc: &mut CrtForm) {
        for (k, table) in self.tables.iter().enumerate() {
            table.pointwise_acc(&a.residues[k], &b.residues[k], &mut acc.residues[k]);
        }
    }

    pub fn zero_form(&self) -> CrtForm {
        CrtForm {
            residues: vec![vec![0u64; self.n]; self.tables.len()],
        }
    }

    /// Inverse transforms and recombines to centered big integers.
    pub fn inverse_centered(&self, form: &CrtForm) -> Vec<BigInt> {
        let coeff_residues = self.inverse_residues(form);
        let half = &self.modulus / 2u32;
        (0..self.n)
            .map(|i| {
                let mut acc = BigUint::zero();
                for (k, w) in self.weights.iter().enumerate() {
                    acc += w * coeff_residues[k][i];
                }
                acc %= &self.modulus;
                if acc > half {
                    BigInt::from(acc) - BigInt::from(self.modulus.clone())
                } else {
                    BigInt::from(acc)
                }
            })
            .collect()
    }

    /// Centered recombination for values known to fit in i128.
    pub fn inverse_centered_i128(&self, form: &CrtForm) -> Vec<i128> {
        self.inverse_centered(form)
            .into_iter()
            .map(|v| v.to_i128().expect("convolution value exceeds i128"))
            .collect()
    }

    fn inverse_residues(&self, form: &CrtForm) -> Vec<Vec<u64>> {
        self.tables
            .iter()
            .enumerate()
            .map(|(k, table)| {
                let mut r = form.residues[k].clone();
                table.inverse(&mut r);
                r
            })
            .collect()
    }
}

/// Gadget decomposition of q-residue coefficients into base-2^w digits.
pub fn gadget_digits(poly: &RingPoly, base_log: u32) -> Vec<Vec<u64>> {
    let q_bits = poly.params().q_bits();
    let levels = q_bits.div_ceil(base_log) as usize;
    let mask = (1u128 << base_log) - 1;
    let mut out = vec![vec![0u64; poly.params().n()]; levels];
    for (i, &c) in poly.coeffs().iter().enumerate() {
        let mut v = c;
        for level in out.iter_mut() {
            level[i] = (v & mask) as u64;
            v >>= base_log;
        }
    }
    out
}
