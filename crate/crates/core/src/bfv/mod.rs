//! BFV over the ring layer: key generation, encryption, homomorphic add and
//! multiply with relinearization, key-switching and noise accounting.
//!
//! Plaintexts are R_t polynomials scaled by Delta = floor(q/t) on encryption.
//! Multiplication takes the exact integer tensor of the centered ciphertexts
//! and rescales by t/q, so products decrypt to the negacyclic product of the
//! plaintexts in R_t.

mod wire;

pub use wire::{
    ciphertext_from_bytes, ciphertext_to_bytes, ciphertext_wire_len, max_safe_truncation,
};

use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{Euclid, Signed, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::ring::{gadget_digits, ModTag, RingParams, RingPoly};

/// Default gadget base 2^16 for relinearization and switching keys.
pub const DEFAULT_BASE_LOG: u32 = 16;
/// Centered-binomial parameter for RLWE error sampling.
pub const ERROR_ETA: u32 = 3;

pub type Seed = [u8; 32];

/// Expand a 32-byte seed into a uniform ring element.
pub fn expand_uniform(params: &Arc<RingParams>, tag: ModTag, seed: &Seed) -> RingPoly {
    let mut rng = ChaCha20Rng::from_seed(*seed);
    RingPoly::sample_uniform(params, tag, &mut rng)
}

#[derive(Clone)]
pub struct SecretKey {
    s: RingPoly,
    s_squared: RingPoly,
    id: u64,
}

impl SecretKey {
    pub fn poly(&self) -> &RingPoly {
        &self.s
    }
    pub fn id(&self) -> u64 {
        self.id
    }
    pub fn params(&self) -> &Arc<RingParams> {
        self.s.params()
    }
    pub(crate) fn from_poly(s: RingPoly, id: u64) -> Self {
        let s_squared = s.mul(&s).unwrap();
        Self { s, s_squared, id }
    }
}

#[derive(Clone)]
pub struct PublicKey {
    b: RingPoly,
    a: RingPoly,
    a_seed: Seed,
    key_id: u64,
}

impl PublicKey {
    pub fn params(&self) -> &Arc<RingParams> {
        self.b.params()
    }
    pub fn key_id(&self) -> u64 {
        self.key_id
    }
    pub fn b(&self) -> &RingPoly {
        &self.b
    }
    pub fn a(&self) -> &RingPoly {
        &self.a
    }
    pub fn a_seed(&self) -> &Seed {
        &self.a_seed
    }
    pub(crate) fn from_parts(b: RingPoly, a_seed: Seed, key_id: u64) -> Self {
        let a = expand_uniform(b.params(), ModTag::Cipher, &a_seed);
        Self {
            b,
            a,
            a_seed,
            key_id,
        }
    }

    /// 64-bit fingerprint over the key polynomial, for idempotence checks.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for &c in self.b.coeffs() {
            for byte in c.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

/// Gadget-decomposed key material re-encrypting some source secret under a
/// destination secret. Used both for key-switching (source = s) and
/// relinearization (source = s^2).
#[derive(Clone)]
pub struct SwitchKey {
    pairs: Vec<(RingPoly, RingPoly)>,
    // transform-domain images of the pairs per q factor, for fast application
    ntt_b: Vec<Vec<Vec<u64>>>,
    ntt_a: Vec<Vec<Vec<u64>>>,
    base_log: u32,
    src_id: u64,
    dst_id: u64,
}

impl SwitchKey {
    pub fn base_log(&self) -> u32 {
        self.base_log
    }
    pub fn levels(&self) -> usize {
        self.pairs.len()
    }
    pub fn src_id(&self) -> u64 {
        self.src_id
    }
    pub fn dst_id(&self) -> u64 {
        self.dst_id
    }
    pub fn pairs(&self) -> &[(RingPoly, RingPoly)] {
        &self.pairs
    }
    pub fn params(&self) -> &Arc<RingParams> {
        self.pairs[0].0.params()
    }

    pub(crate) fn from_pairs(
        pairs: Vec<(RingPoly, RingPoly)>,
        base_log: u32,
        src_id: u64,
        dst_id: u64,
    ) -> Self {
        let params = pairs[0].0.params().clone();
        let tables = params.q_tables();
        let mut ntt_b = Vec::with_capacity(tables.len());
        let mut ntt_a = Vec::with_capacity(tables.len());
        for table in tables {
            let mut bs = Vec::with_capacity(pairs.len());
            let mut as_ = Vec::with_capacity(pairs.len());
            for (b, a) in &pairs {
                let mut rb: Vec<u64> = b
                    .coeffs()
                    .iter()
                    .map(|&c| (c % table.p as u128) as u64)
                    .collect();
                let mut ra: Vec<u64> = a
                    .coeffs()
                    .iter()
                    .map(|&c| (c % table.p as u128) as u64)
                    .collect();
                table.forward(&mut rb);
                table.forward(&mut ra);
                bs.push(rb);
                as_.push(ra);
            }
            ntt_b.push(bs);
            ntt_a.push(as_);
        }
        Self {
            pairs,
            ntt_b,
            ntt_a,
            base_log,
            src_id,
            dst_id,
        }
    }
}

pub type RelinKey = SwitchKey;

/// A BFV ciphertext: 2 components at degree 1, 3 at degree 2.
#[derive(Clone)]
pub struct Ciphertext {
    components: Vec<RingPoly>,
    key_id: u64,
    seed: Option<Seed>,
    truncated_bits: u32,
}

impl Ciphertext {
    pub fn degree(&self) -> usize {
        self.components.len() - 1
    }
    pub fn components(&self) -> &[RingPoly] {
        &self.components
    }
    pub fn key_id(&self) -> u64 {
        self.key_id
    }
    pub fn is_seeded(&self) -> bool {
        self.seed.is_some()
    }
    pub fn seed(&self) -> Option<&Seed> {
        self.seed.as_ref()
    }
    pub fn truncated_bits(&self) -> u32 {
        self.truncated_bits
    }
    pub fn params(&self) -> &Arc<RingParams> {
        self.components[0].params()
    }

    pub(crate) fn new(components: Vec<RingPoly>, key_id: u64) -> Self {
        debug_assert!(components.len() == 2 || components.len() == 3);
        Self {
            components,
            key_id,
            seed: None,
            truncated_bits: 0,
        }
    }

    pub(crate) fn with_seed(components: Vec<RingPoly>, key_id: u64, seed: Seed) -> Self {
        debug_assert_eq!(components.len(), 2);
        Self {
            components,
            key_id,
            seed: Some(seed),
            truncated_bits: 0,
        }
    }

    pub(crate) fn set_truncated(&mut self, bits: u32) {
        self.truncated_bits = bits;
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.key_id != other.key_id {
            return Err(Error::ParamMismatch(
                "ciphertexts under different keys".into(),
            ));
        }
        if self.degree() != other.degree() {
            return Err(Error::ParamMismatch(format!(
                "degree mismatch: {} vs {}",
                self.degree(),
                other.degree()
            )));
        }
        Ok(())
    }
}

/// Fresh RLWE key pair; `lambda` is informational (the parameter presets are
/// sized for the declared level).
pub fn keygen<R: Rng>(params: &Arc<RingParams>, rng: &mut R) -> (PublicKey, SecretKey) {
    let s = RingPoly::sample_ternary(params, rng);
    let key_id = rng.gen::<u64>();
    let sk = SecretKey::from_poly(s, key_id);

    let mut a_seed = [0u8; 32];
    rng.fill(&mut a_seed);
    let a = expand_uniform(params, ModTag::Cipher, &a_seed);
    let e = RingPoly::sample_cbd(params, ERROR_ETA, rng);
    // b = -(a*s + e)
    let b = a.mul(&sk.s).unwrap().add(&e).unwrap().neg();
    (
        PublicKey {
            b,
            a,
            a_seed,
            key_id,
        },
        sk,
    )
}

/// Standard public-key encryption: ct = (b*u + e1 + Delta*m, a*u + e2).
pub fn encrypt<R: Rng>(pk: &PublicKey, m: &RingPoly, rng: &mut R) -> Result<Ciphertext> {
    let params = pk.params();
    if m.tag() != ModTag::Plain {
        return Err(Error::ParamMismatch("plaintext must live in R_t".into()));
    }
    if m.params() != params {
        return Err(Error::ParamMismatch(
            "plaintext parameters differ from key".into(),
        ));
    }
    let u = RingPoly::sample_ternary(params, rng);
    let e1 = RingPoly::sample_cbd(params, ERROR_ETA, rng);
    let e2 = RingPoly::sample_cbd(params, ERROR_ETA, rng);
    let scaled = m.lift_to_cipher().scalar_mul(params.delta());
    let c0 = pk.b.mul(&u)?.add(&e1)?.add(&scaled)?;
    let c1 = pk.a.mul(&u)?.add(&e2)?;
    Ok(Ciphertext::new(vec![c0, c1], pk.key_id))
}

/// Symmetric-key encryption whose uniform component is expanded from a seed,
/// so the wire form carries one polynomial plus 32 bytes. Only a secret-key
/// holder can produce this shape: a public-key encryptor cannot make its
/// second component a public function of a seed without giving up semantic
/// security.
pub fn encrypt_seeded<R: Rng>(
    sk: &SecretKey,
    m: &RingPoly,
    seed: Seed,
    rng: &mut R,
) -> Result<Ciphertext> {
    let params = sk.params();
    if m.tag() != ModTag::Plain {
        return Err(Error::ParamMismatch("plaintext must live in R_t".into()));
    }
    if m.params() != params {
        return Err(Error::ParamMismatch(
            "plaintext parameters differ from key".into(),
        ));
    }
    let a = expand_uniform(params, ModTag::Cipher, &seed);
    let e = RingPoly::sample_cbd(params, ERROR_ETA, rng);
    let scaled = m.lift_to_cipher().scalar_mul(params.delta());
    // c0 = -(a*s + e) + Delta*m pairs with c1 = a
    let c0 = a.mul(&sk.s)?.add(&e)?.neg().add(&scaled)?;
    Ok(Ciphertext::with_seed(vec![c0, a], sk.id, seed))
}

/// The decryption phase c0 + c1*s (+ c2*s^2) in R_q.
fn phase(sk: &SecretKey, ct: &Ciphertext) -> Result<RingPoly> {
    if sk.id != ct.key_id {
        return Err(Error::ParamMismatch("ciphertext not under this key".into()));
    }
    let mut acc = ct.components[0].add(&ct.components[1].mul(&sk.s)?)?;
    if ct.degree() == 2 {
        acc = acc.add(&ct.components[2].mul(&sk.s_squared)?)?;
    }
    Ok(acc)
}

/// Rounding decode round(t * v / q) mod t per coefficient.
fn decode_phase(v: &RingPoly) -> RingPoly {
    let params = v.params();
    let q = params.q();
    let t = params.t();
    let log_t = params.log_t();
    let coeffs: Vec<u128> = if params.q_bits() + log_t <= 126 {
        v.coeffs()
            .iter()
            .map(|&c| (((c << log_t) + q / 2) / q) & (t - 1))
            .collect()
    } else {
        let qq = BigInt::from(q);
        let half = BigInt::from(q / 2);
        v.coeffs()
            .iter()
            .map(|&c| {
                let num = (BigInt::from(c) << log_t) + &half;
                let m = (num / &qq) % BigInt::from(t);
                m.to_u128().unwrap()
            })
            .collect()
    };
    RingPoly::from_coeffs(params, ModTag::Plain, coeffs).unwrap()
}

/// Decrypt a degree-1 or degree-2 ciphertext. Beyond the noise budget the
/// output is undefined (silently wrong), as usual for this scheme family.
pub fn decrypt(sk: &SecretKey, ct: &Ciphertext) -> Result<RingPoly> {
    Ok(decode_phase(&phase(sk, ct)?))
}

/// Component-wise homomorphic addition.
pub fn eval_add(ct1: &Ciphertext, ct2: &Ciphertext) -> Result<Ciphertext> {
    ct1.check_same_shape(ct2)?;
    let components = ct1
        .components
        .iter()
        .zip(&ct2.components)
        .map(|(a, b)| a.add(b))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ciphertext::new(components, ct1.key_id))
}

/// Add a plaintext: c0 += Delta * p. Works at degree 1 or 2.
pub fn eval_add_plain(ct: &Ciphertext, p: &RingPoly) -> Result<Ciphertext> {
    if p.tag() != ModTag::Plain {
        return Err(Error::ParamMismatch("operand must live in R_t".into()));
    }
    let params = ct.params();
    if p.params() != params {
        return Err(Error::ParamMismatch("operand parameters differ".into()));
    }
    let scaled = p.lift_to_cipher().scalar_mul(params.delta());
    let mut components = ct.components.clone();
    components[0] = components[0].add(&scaled)?;
    Ok(Ciphertext::new(components, ct.key_id))
}

/// Homomorphic multiplication: exact integer tensor of centered components,
/// rescaled by t/q. Degree 2 result, or degree 1 when a relinearization key
/// is supplied.
pub fn eval_mul(
    ct1: &Ciphertext,
    ct2: &Ciphertext,
    relin: Option<&RelinKey>,
) -> Result<Ciphertext> {
    ct1.check_same_shape(ct2)?;
    if ct1.degree() != 1 {
        return Err(Error::Contract(
            "multiplication requires degree-1 inputs".into(),
        ));
    }
    let params = ct1.params();
    let conv = params.tensor_conv();

    let f = |p: &RingPoly| conv.forward_signed(&p.center_lift());
    let a0 = f(&ct1.components[0]);
    let a1 = f(&ct1.components[1]);
    let b0 = f(&ct2.components[0]);
    let b1 = f(&ct2.components[1]);

    let t0 = conv.pointwise(&a0, &b0);
    let mut t1 = conv.pointwise(&a0, &b1);
    conv.pointwise_acc(&a1, &b0, &mut t1);
    let t2 = conv.pointwise(&a1, &b1);

    let scale = |form: &crate::ring::CrtForm| -> RingPoly {
        let ints = conv.inverse_centered(form);
        let q = BigInt::from(params.q());
        let half = BigInt::from(params.q() / 2);
        let coeffs: Vec<u128> = ints
            .into_iter()
            .map(|x| {
                // round(t*x/q) mod q, with floor(a/b) rounding toward -inf
                let num = (x << params.log_t()) + &half;
                let rounded = num.div_euclid(&q);
                let r = rounded.mod_floor_ref(&q);
                r.to_u128().unwrap()
            })
            .collect();
        RingPoly::from_coeffs(params, ModTag::Cipher, coeffs).unwrap()
    };

    let ct = Ciphertext::new(vec![scale(&t0), scale(&t1), scale(&t2)], ct1.key_id);
    match relin {
        Some(key) => relinearize(&ct, key),
        None => Ok(ct),
    }
}

trait ModFloorRef {
    fn mod_floor_ref(&self, m: &BigInt) -> BigInt;
}
impl ModFloorRef for BigInt {
    fn mod_floor_ref(&self, m: &BigInt) -> BigInt {
        let r = self % m;
        if r.is_negative() {
            r + m
        } else {
            r
        }
    }
}

/// Gadget-decomposed switching key from `sk_src` to `sk_dst`.
pub fn swkeygen<R: Rng>(
    sk_src: &SecretKey,
    sk_dst: &SecretKey,
    base_log: u32,
    rng: &mut R,
) -> Result<SwitchKey> {
    swkeygen_for_poly(&sk_src.s, sk_src.id, sk_dst, base_log, rng)
}

/// Relinearization key: a switching key whose source is s^2.
pub fn relin_keygen<R: Rng>(sk: &SecretKey, base_log: u32, rng: &mut R) -> Result<RelinKey> {
    swkeygen_for_poly(&sk.s_squared, sk.id, sk, base_log, rng)
}

fn swkeygen_for_poly<R: Rng>(
    src: &RingPoly,
    src_id: u64,
    sk_dst: &SecretKey,
    base_log: u32,
    rng: &mut R,
) -> Result<SwitchKey> {
    let params = sk_dst.params();
    if src.params() != params {
        return Err(Error::ParamMismatch(
            "keys under different parameters".into(),
        ));
    }
    if base_log == 0 || base_log > 32 {
        return Err(Error::InvalidParams("gadget base out of range".into()));
    }
    let levels = params.q_bits().div_ceil(base_log);
    let mut pairs = Vec::with_capacity(levels as usize);
    for j in 0..levels {
        let a_j = RingPoly::sample_uniform(params, ModTag::Cipher, rng);
        let e_j = RingPoly::sample_cbd(params, ERROR_ETA, rng);
        // b_j = -(a_j * s_dst + e_j) + 2^(w*j) * src
        let shifted = src.scalar_shift(base_log * j);
        let b_j = a_j.mul(&sk_dst.s)?.add(&e_j)?.neg().add(&shifted)?;
        pairs.push((b_j, a_j));
    }
    Ok(SwitchKey::from_pairs(pairs, base_log, src_id, sk_dst.id))
}

/// Apply gadget pairs to the digits of `poly`: returns (sum d_j*b_j, sum d_j*a_j).
fn apply_gadget(key: &SwitchKey, poly: &RingPoly) -> (RingPoly, RingPoly) {
    let params = poly.params();
    let digits = gadget_digits(poly, key.base_log);
    debug_assert_eq!(digits.len(), key.levels());
    let tables = params.q_tables();
    let n = params.n();

    let mut out_b_res: Vec<Vec<u64>> = Vec::with_capacity(tables.len());
    let mut out_a_res: Vec<Vec<u64>> = Vec::with_capacity(tables.len());
    for (fi, table) in tables.iter().enumerate() {
        let mut acc_b = vec![0u64; n];
        let mut acc_a = vec![0u64; n];
        for (j, digit) in digits.iter().enumerate() {
            let mut d: Vec<u64> = digit.iter().map(|&v| v % table.p).collect();
            table.forward(&mut d);
            table.pointwise_acc(&d, &key.ntt_b[fi][j], &mut acc_b);
            table.pointwise_acc(&d, &key.ntt_a[fi][j], &mut acc_a);
        }
        table.inverse(&mut acc_b);
        table.inverse(&mut acc_a);
        out_b_res.push(acc_b);
        out_a_res.push(acc_a);
    }

    let lift = |residues: &[Vec<u64>]| -> RingPoly {
        let coeffs = (0..n)
            .map(|i| {
                let r: Vec<u64> = residues.iter().map(|v| v[i]).collect();
                params.crt_lift(&r)
            })
            .collect();
        RingPoly::from_coeffs(params, ModTag::Cipher, coeffs).unwrap()
    };
    (lift(&out_b_res), lift(&out_a_res))
}

/// Reduce a degree-2 ciphertext to degree 1 using a relinearization key.
pub fn relinearize(ct: &Ciphertext, key: &RelinKey) -> Result<Ciphertext> {
    if ct.degree() != 2 {
        return Err(Error::Contract(
            "relinearization expects a degree-2 ciphertext".into(),
        ));
    }
    if key.dst_id != ct.key_id {
        return Err(Error::ParamMismatch(
            "relinearization key targets a different secret".into(),
        ));
    }
    let (gb, ga) = apply_gadget(key, &ct.components[2]);
    let c0 = ct.components[0].add(&gb)?;
    let c1 = ct.components[1].add(&ga)?;
    Ok(Ciphertext::new(vec![c0, c1], ct.key_id))
}

/// Re-encrypt a degree-1 ciphertext from the key's source secret to its
/// destination secret without decryption.
pub fn switching(ct: &Ciphertext, key: &SwitchKey) -> Result<Ciphertext> {
    if ct.degree() != 1 {
        return Err(Error::Contract(
            "switching expects a degree-1 ciphertext (relinearize first)".into(),
        ));
    }
    if key.src_id != ct.key_id {
        return Err(Error::ParamMismatch(
            "switching key source does not match ciphertext".into(),
        ));
    }
    let (gb, ga) = apply_gadget(key, &ct.components[1]);
    let c0 = ct.components[0].add(&gb)?;
    Ok(Ciphertext::new(vec![c0, ga], key.dst_id))
}

/// Remaining noise headroom in bits: log2(q/(2t)) - log2(|noise|_inf),
/// floored at zero. A positive budget means decryption is still exact.
pub fn noise_budget(sk: &SecretKey, ct: &Ciphertext) -> Result<u32> {
    let params = ct.params();
    let v = phase(sk, ct)?;
    let m = decode_phase(&v);
    let noise = v.sub(&m.lift_to_cipher().scalar_mul(params.delta()))?;
    let norm = noise.infinity_norm();
    let capacity = params.q_bits() - params.log_t() - 1;
    let used = 128 - norm.leading_zeros();
    Ok(capacity.saturating_sub(used))
}

impl RingPoly {
    /// Multiply by 2^shift mod the coefficient modulus; the intermediate is
    /// kept below 2^128 by shifting a few bits at a time.
    fn scalar_shift(&self, shift: u32) -> RingPoly {
        let m = self.modulus();
        let coeffs = self
            .coeffs()
            .iter()
            .map(|&c| {
                let mut v = c;
                let mut remaining = shift;
                while remaining > 0 {
                    let step = remaining.min(7);
                    v = (v << step) % m;
                    remaining -= step;
                }
                v
            })
            .collect();
        RingPoly::from_coeffs(self.params(), self.tag(), coeffs).unwrap()
    }
}
