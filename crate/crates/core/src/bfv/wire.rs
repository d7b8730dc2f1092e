//! Wire formats for ciphertexts and key material.
//!
//! Ciphertext: `{magic "CMCT", params hash, degree, seeded, truncate_bits}`
//! followed by fixed-width little-endian coefficients. A seeded ciphertext
//! carries its first component plus the 32-byte seed for the second.
//! Low-bit truncation drops `truncate_bits` from every coefficient and is
//! only legal on degree-1, unseeded ciphertexts headed straight for
//! decryption; dropped bits are re-padded with zeros on the way in.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ring::{ModTag, RingParams, RingPoly};

use super::{expand_uniform, Ciphertext, PublicKey, SecretKey, Seed, SwitchKey};

const CT_MAGIC: &[u8; 4] = b"CMCT";
const PK_MAGIC: &[u8; 4] = b"CMPK";
const SK_MAGIC: &[u8; 4] = b"CMSK";
const KS_MAGIC: &[u8; 4] = b"CMKS";

fn coeff_width(bits: u32) -> usize {
    bits.div_ceil(8) as usize
}

fn write_poly_packed(out: &mut Vec<u8>, poly: &RingPoly, truncate_bits: u32) {
    let bits = 128 - poly.modulus().leading_zeros();
    let width = coeff_width(bits - truncate_bits);
    for &c in poly.coeffs() {
        out.extend_from_slice(&(c >> truncate_bits).to_le_bytes()[..width]);
    }
}

fn read_poly_packed(
    params: &Arc<RingParams>,
    data: &[u8],
    pos: &mut usize,
    truncate_bits: u32,
) -> Result<RingPoly> {
    let bits = params.q_bits();
    let width = coeff_width(bits - truncate_bits);
    let n = params.n();
    let need = width * n;
    if data.len() < *pos + need {
        return Err(Error::Serialization("ciphertext payload truncated".into()));
    }
    let q = params.q();
    let mut coeffs = Vec::with_capacity(n);
    for chunk in data[*pos..*pos + need].chunks_exact(width) {
        let mut buf = [0u8; 16];
        buf[..width].copy_from_slice(chunk);
        let c = u128::from_le_bytes(buf) << truncate_bits;
        if c >= q {
            return Err(Error::Serialization("coefficient exceeds modulus".into()));
        }
        coeffs.push(c);
    }
    *pos += need;
    RingPoly::from_coeffs(params, ModTag::Cipher, coeffs)
}

/// Serialize a ciphertext, optionally dropping `truncate_bits` low bits of
/// every coefficient.
pub fn ciphertext_to_bytes(ct: &Ciphertext, truncate_bits: u32) -> Result<Vec<u8>> {
    let params = ct.params();
    if truncate_bits > 0 {
        if ct.degree() != 1 {
            return Err(Error::Contract(
                "low-bit truncation is only valid for degree-1 ciphertexts".into(),
            ));
        }
        if ct.is_seeded() {
            return Err(Error::Contract(
                "a seeded ciphertext is meant for evaluation, not truncation".into(),
            ));
        }
        if truncate_bits >= params.q_bits() - params.log_t() - 1 {
            return Err(Error::Contract(
                "truncation would reach the plaintext bits".into(),
            ));
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(CT_MAGIC);
    out.extend_from_slice(&params.hash().to_le_bytes());
    out.push(ct.degree() as u8);
    out.push(ct.is_seeded() as u8);
    out.push(truncate_bits as u8);
    out.push(0);
    if let Some(seed) = ct.seed() {
        write_poly_packed(&mut out, &ct.components()[0], 0);
        out.extend_from_slice(seed);
    } else {
        for comp in ct.components() {
            write_poly_packed(&mut out, comp, truncate_bits);
        }
    }
    Ok(out)
}

/// Parse a ciphertext produced by [`ciphertext_to_bytes`]; truncated
/// coefficients come back with zeroed low bits and the truncation recorded.
pub fn ciphertext_from_bytes(
    params: &Arc<RingParams>,
    data: &[u8],
    key_id: u64,
) -> Result<Ciphertext> {
    if data.len() < 16 || &data[0..4] != CT_MAGIC {
        return Err(Error::Serialization("bad ciphertext magic".into()));
    }
    let hash = u64::from_le_bytes(data[4..12].try_into().unwrap());
    if hash != params.hash() {
        return Err(Error::Serialization("parameter hash mismatch".into()));
    }
    let degree = data[12] as usize;
    let seeded = data[13] != 0;
    let truncate_bits = data[14] as u32;
    if !(1..=2).contains(&degree) {
        return Err(Error::Serialization(format!("unsupported degree {degree}")));
    }
    let mut pos = 16;
    if seeded {
        if degree != 1 || truncate_bits != 0 {
            return Err(Error::Serialization(
                "malformed seeded ciphertext header".into(),
            ));
        }
        let c0 = read_poly_packed(params, data, &mut pos, 0)?;
        if data.len() != pos + 32 {
            return Err(Error::Serialization("bad seed length".into()));
        }
        let mut seed: Seed = [0u8; 32];
        seed.copy_from_slice(&data[pos..pos + 32]);
        let a = expand_uniform(params, ModTag::Cipher, &seed);
        Ok(Ciphertext::with_seed(vec![c0, a], key_id, seed))
    } else {
        let mut components = Vec::with_capacity(degree + 1);
        for _ in 0..=degree {
            components.push(read_poly_packed(params, data, &mut pos, truncate_bits)?);
        }
        if pos != data.len() {
            return Err(Error::Serialization(
                "trailing bytes after ciphertext".into(),
            ));
        }
        let mut ct = Ciphertext::new(components, key_id);
        ct.set_truncated(truncate_bits);
        Ok(ct)
    }
}

/// Exact wire length of the ciphertext starting at `data`, from its header.
pub fn ciphertext_wire_len(params: &Arc<RingParams>, data: &[u8]) -> Result<usize> {
    if data.len() < 16 || &data[0..4] != CT_MAGIC {
        return Err(Error::Serialization("bad ciphertext magic".into()));
    }
    let degree = data[12] as usize;
    let seeded = data[13] != 0;
    let truncate_bits = data[14] as u32;
    let n = params.n();
    Ok(if seeded {
        16 + coeff_width(params.q_bits()) * n + 32
    } else {
        16 + (degree + 1) * coeff_width(params.q_bits() - truncate_bits) * n
    })
}

/// Largest truncation (in bits) whose induced decryption error stays below
/// the rounding threshold except with probability < 2^-38 per coefficient,
/// given the current noise magnitude in bits.
pub fn max_safe_truncation(params: &Arc<RingParams>, noise_bits: u32) -> u32 {
    let threshold = (params.q_bits() - params.log_t() - 1) as f64; // log2(Delta/2), within one bit
    let noise = noise_bits as f64;
    // zeroing B low bits of (c0, c1) adds eps0 + eps1*s to the phase; the c1
    // part concentrates around 2^B * sqrt(2N/9) and an 8-sigma excursion is
    // far below the 2^-38 target
    let spread = (2.0 * params.n() as f64 / 9.0).sqrt();
    let mut best = 0u32;
    for b in 1..params.q_bits() - params.log_t() {
        let err = b as f64 + (1.0 + 8.0 * spread).log2();
        let total = err.max(noise) + 1.0; // + existing noise, within one bit
        if total < threshold - 1.0 {
            best = b;
        } else {
            break;
        }
    }
    best
}

fn write_params_block(out: &mut Vec<u8>, params: &RingParams) {
    out.extend_from_slice(&(params.n() as u32).to_le_bytes());
    out.push(params.log_t() as u8);
    out.push(params.q_factors().len() as u8);
    for &f in params.q_factors() {
        out.extend_from_slice(&f.to_le_bytes());
    }
}

fn read_params_block(data: &[u8], pos: &mut usize) -> Result<Arc<RingParams>> {
    if data.len() < *pos + 6 {
        return Err(Error::Serialization("short parameter block".into()));
    }
    let n = u32::from_le_bytes(data[*pos..*pos + 4].try_into().unwrap()) as usize;
    let log_t = data[*pos + 4] as u32;
    let k = data[*pos + 5] as usize;
    *pos += 6;
    if data.len() < *pos + 8 * k {
        return Err(Error::Serialization("short parameter block".into()));
    }
    let mut factors = Vec::with_capacity(k);
    for _ in 0..k {
        factors.push(u64::from_le_bytes(data[*pos..*pos + 8].try_into().unwrap()));
        *pos += 8;
    }
    RingParams::new(n, &factors, log_t)
}

impl PublicKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(PK_MAGIC);
        write_params_block(&mut out, self.params());
        out.extend_from_slice(&self.key_id().to_le_bytes());
        out.extend_from_slice(&self.b().to_bytes());
        out.extend_from_slice(self.a_seed());
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 4 || &data[0..4] != PK_MAGIC {
            return Err(Error::Serialization("bad public key magic".into()));
        }
        let mut pos = 4;
        let params = read_params_block(data, &mut pos)?;
        let key_id = u64::from_le_bytes(data[pos..pos + 8].try_into().unwrap());
        pos += 8;
        let poly_len = 16 + params.q_bits().div_ceil(8) as usize * params.n();
        let b = RingPoly::from_bytes(&params, &data[pos..pos + poly_len])?;
        pos += poly_len;
        let mut seed: Seed = [0u8; 32];
        seed.copy_from_slice(&data[pos..pos + 32]);
        Ok(PublicKey::from_parts(b, seed, key_id))
    }
}

impl SecretKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SK_MAGIC);
        write_params_block(&mut out, self.params());
        out.extend_from_slice(&self.id().to_le_bytes());
        out.extend_from_slice(&self.poly().to_bytes());
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 4 || &data[0..4] != SK_MAGIC {
            return Err(Error::Serialization("bad secret key magic".into()));
        }
        let mut pos = 4;
        let params = read_params_block(data, &mut pos)?;
        let key_id = u64::from_le_bytes(data[pos..pos + 8].try_into().unwrap());
        pos += 8;
        let s = RingPoly::from_bytes(&params, &data[pos..])?;
        Ok(SecretKey::from_poly(s, key_id))
    }
}

impl SwitchKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(KS_MAGIC);
        write_params_block(&mut out, self.params());
        out.extend_from_slice(&self.src_id().to_le_bytes());
        out.extend_from_slice(&self.dst_id().to_le_bytes());
        out.push(self.base_log() as u8);
        out.push(self.levels() as u8);
        for (b, a) in self.pairs() {
            out.extend_from_slice(&b.to_bytes());
            out.extend_from_slice(&a.to_bytes());
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 4 || &data[0..4] != KS_MAGIC {
            return Err(Error::Serialization("bad switching key magic".into()));
        }
        let mut pos = 4;
        let params = read_params_block(data, &mut pos)?;
        let src = u64::from_le_bytes(data[pos..pos + 8].try_into().unwrap());
        pos += 8;
        let dst = u64::from_le_bytes(data[pos..pos + 8].try_into().unwrap());
        pos += 8;
        let base_log = data[pos] as u32;
        let levels = data[pos + 1] as usize;
        pos += 2;
        let poly_len = 16 + params.q_bits().div_ceil(8) as usize * params.n();
        let mut pairs = Vec::with_capacity(levels);
        for _ in 0..levels {
            let b = RingPoly::from_bytes(&params, &data[pos..pos + poly_len])?;
            pos += poly_len;
            let a = RingPoly::from_bytes(&params, &data[pos..pos + poly_len])?;
            pos += poly_len;
            pairs.push((b, a));
        }
        Ok(SwitchKey::from_pairs(pairs, base_log, src, dst))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bfv::{
        decrypt, encrypt, encrypt_seeded, keygen, noise_budget, relin_keygen, swkeygen,
        DEFAULT_BASE_LOG,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn ciphertext_roundtrip_bit_exact() {
        let params = RingParams::small(20);
        let mut rng = ChaCha20Rng::seed_from_u64(200);
        let (pk, _) = keygen(&params, &mut rng);
        let m = RingPoly::sample_uniform(&params, ModTag::Plain, &mut rng);
        let ct = encrypt(&pk, &m, &mut rng).unwrap();
        let bytes = ciphertext_to_bytes(&ct, 0).unwrap();
        let back = ciphertext_from_bytes(&params, &bytes, pk.key_id()).unwrap();
        for (x, y) in ct.components().iter().zip(back.components()) {
            assert_eq!(x.coeffs(), y.coeffs());
        }
    }

    #[test]
    fn seeded_ciphertext_size_is_half() {
        let params = RingParams::small(20);
        let mut rng = ChaCha20Rng::seed_from_u64(201);
        let (pk, sk) = keygen(&params, &mut rng);
        let m = RingPoly::sample_uniform(&params, ModTag::Plain, &mut rng);

        let plain_ct = encrypt(&pk, &m, &mut rng).unwrap();
        let seeded_ct = encrypt_seeded(&sk, &m, rng.gen(), &mut rng).unwrap();
        let plain_len = ciphertext_to_bytes(&plain_ct, 0).unwrap().len();
        let seeded_len = ciphertext_to_bytes(&seeded_ct, 0).unwrap().len();

        let poly_payload = params.q_bits().div_ceil(8) as usize * params.n();
        assert_eq!(plain_len, 16 + 2 * poly_payload);
        assert_eq!(seeded_len, 16 + poly_payload + 32);
        assert!(seeded_len < plain_len / 2 + 64);

        // seeded wire roundtrip re-expands to the identical ciphertext
        let bytes = ciphertext_to_bytes(&seeded_ct, 0).unwrap();
        let back = ciphertext_from_bytes(&params, &bytes, sk.id()).unwrap();
        assert_eq!(decrypt(&sk, &back).unwrap().coeffs(), m.coeffs());
        for (x, y) in seeded_ct.components().iter().zip(back.components()) {
            assert_eq!(x.coeffs(), y.coeffs());
        }
    }

    #[test]
    fn truncated_roundtrip_decrypts() {
        let params = RingParams::standard();
        let mut rng = ChaCha20Rng::seed_from_u64(202);
        let (pk, sk) = keygen(&params, &mut rng);
        let m = RingPoly::sample_uniform(&params, ModTag::Plain, &mut rng);
        let ct = encrypt(&pk, &m, &mut rng).unwrap();

        let budget = noise_budget(&sk, &ct).unwrap();
        let noise_bits = params.q_bits() - params.log_t() - 1 - budget;
        let b = max_safe_truncation(&params, noise_bits);
        assert!(b >= 22, "safe truncation {b} unexpectedly small");

        let bytes = ciphertext_to_bytes(&ct, 22).unwrap();
        let full = ciphertext_to_bytes(&ct, 0).unwrap();
        let reduction = 1.0 - bytes.len() as f64 / full.len() as f64;
        assert!(
            reduction > 0.16 && reduction < 0.25,
            "reduction {reduction}"
        );

        let back = ciphertext_from_bytes(&params, &bytes, pk.key_id()).unwrap();
        assert_eq!(back.truncated_bits(), 22);
        assert_eq!(decrypt(&sk, &back).unwrap().coeffs(), m.coeffs());
    }

    #[test]
    fn truncation_contract_violations() {
        let params = RingParams::small(20);
        let mut rng = ChaCha20Rng::seed_from_u64(203);
        let (pk, sk) = keygen(&params, &mut rng);
        let m = RingPoly::sample_uniform(&params, ModTag::Plain, &mut rng);
        let ct1 = encrypt(&pk, &m, &mut rng).unwrap();
        let ct2 = encrypt(&pk, &m, &mut rng).unwrap();
        let deg2 = crate::bfv::eval_mul(&ct1, &ct2, None).unwrap();
        assert!(ciphertext_to_bytes(&deg2, 8).is_err());
        let seeded = encrypt_seeded(&sk, &m, rng.gen(), &mut rng).unwrap();
        assert!(ciphertext_to_bytes(&seeded, 8).is_err());

        // magic / hash mismatches
        let good = ciphertext_to_bytes(&ct1, 0).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(ciphertext_from_bytes(&params, &bad, pk.key_id()).is_err());
        let other = RingParams::desk();
        assert!(ciphertext_from_bytes(&other, &good, pk.key_id()).is_err());
    }

    #[test]
    fn key_files_roundtrip() {
        let params = RingParams::small(20);
        let mut rng = ChaCha20Rng::seed_from_u64(204);
        let (pk, sk) = keygen(&params, &mut rng);
        let (_, sk_v) = keygen(&params, &mut rng);

        let pk2 = PublicKey::from_bytes(&pk.to_bytes()).unwrap();
        assert_eq!(pk2.fingerprint(), pk.fingerprint());
        assert_eq!(pk2.a().coeffs(), pk.a().coeffs());

        let sk2 = SecretKey::from_bytes(&sk.to_bytes()).unwrap();
        assert_eq!(sk2.poly().coeffs(), sk.poly().coeffs());

        let ksw = swkeygen(&sk, &sk_v, DEFAULT_BASE_LOG, &mut rng).unwrap();
        let ksw2 = SwitchKey::from_bytes(&ksw.to_bytes()).unwrap();
        assert_eq!(ksw2.levels(), ksw.levels());
        assert_eq!(ksw2.src_id(), sk.id());
        assert_eq!(ksw2.dst_id(), sk_v.id());

        // a reloaded relinearization key still works
        let rlk = relin_keygen(&sk, DEFAULT_BASE_LOG, &mut rng).unwrap();
        let rlk2 = SwitchKey::from_bytes(&rlk.to_bytes()).unwrap();
        let m = RingPoly::sample_uniform(&params, ModTag::Plain, &mut rng);
        let ct = crate::bfv::eval_mul(
            &encrypt(&pk, &m, &mut rng).unwrap(),
            &encrypt(&pk, &RingPoly::one(&params, ModTag::Plain), &mut rng).unwrap(),
            Some(&rlk2),
        )
        .unwrap();
        assert_eq!(decrypt(&sk, &ct).unwrap().coeffs(), m.coeffs());
    }
}
