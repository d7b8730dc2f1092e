//! The four party roles and the three wire protocols: enrollment, masked
//! distance computation and secret-shared result revealing.
//!
//! The key generator is fully trusted: it owns both secret keys, issues the
//! relinearization and switching keys, and doubles as the dealer for the
//! comparison triples. The server never sees a secret key or the threshold;
//! the verifier sees only uniformly masked distance shares and the final bit.

pub mod tcp;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::bfv::{
    self, ciphertext_from_bytes, ciphertext_to_bytes, encrypt, encrypt_seeded, Ciphertext,
    PublicKey, RelinKey, SecretKey, SwitchKey, DEFAULT_BASE_LOG,
};
use crate::encoding::{
    encode_matrix_at, encode_query, extract_targets, normalize_quantize, QuantParams, QuantVector,
};
use crate::error::{Error, Result};
use crate::mpc::compare::{
    literal_lt_party0, literal_lt_party1, B2ABatch, GtThresholdBatch, MillionaireBatch, RoundEngine,
};
use crate::mpc::{deal, mask_bits, DealerBatch, PartyId, TripleBudget};
use crate::net::{Channel, Message, MsgKind, NetStats, Role};
use crate::ring::{ModTag, RingParams, RingPoly};

/// Ring width used when summing converted comparison bits; the final
/// aggregate comparison wraps with probability at most m / 2^64.
pub const AGGREGATE_BITS: u32 = 64;

/// Everything the parties agree on out of band.
#[derive(Clone, Debug)]
pub struct SystemConfig {
    pub params: Arc<RingParams>,
    pub qp: QuantParams,
    /// move the database switch to verifier setup and encrypt queries under
    /// the verifier key, trading server storage for per-query switching
    pub switch_at_setup: bool,
    /// low bits dropped from every response coefficient (0 = off)
    pub truncate_bits: u32,
    /// compare raw shares directly instead of the exact sign gadget;
    /// statistically wrong near the ring wrap, kept as a demonstrator
    pub literal_comparison: bool,
}

impl SystemConfig {
    pub fn new(params: Arc<RingParams>, qp: QuantParams) -> Result<Self> {
        qp.check_ring(&params)?;
        Ok(Self {
            params,
            qp,
            switch_at_setup: false,
            truncate_bits: 0,
            literal_comparison: false,
        })
    }

    pub fn with_switch_at_setup(mut self, on: bool) -> Self {
        self.switch_at_setup = on;
        self
    }

    pub fn with_truncation(mut self, bits: u32) -> Self {
        self.truncate_bits = bits;
        self
    }

    pub fn with_literal_comparison(mut self, on: bool) -> Self {
        self.literal_comparison = on;
        self
    }

    pub fn delta(&self) -> usize {
        self.qp.rows_per_ciphertext(&self.params)
    }

    /// Signed distances live in [-(p^2 + pd/2), p^2 + pd/2]; the threshold
    /// must keep v - ts inside the signed plaintext range.
    pub fn validate_threshold(&self, ts: i64) -> Result<()> {
        let t = self.params.t() as i128;
        let p = self.qp.precision as i128;
        let vmax = p * p + p * self.qp.d as i128 / 2;
        if (ts as i128).abs() + vmax >= t / 2 {
            return Err(Error::Domain(format!(
                "threshold {ts} out of the exact comparison range for t = 2^{}",
                self.params.log_t()
            )));
        }
        Ok(())
    }
}

fn role_rng(seed: u64, role: u8) -> ChaCha20Rng {
    let mut s = [0u8; 32];
    s[..8].copy_from_slice(&seed.to_le_bytes());
    s[8] = role;
    s[9..17].copy_from_slice(&seed.wrapping_mul(0x9e3779b97f4a7c15).to_le_bytes());
    ChaCha20Rng::from_seed(s)
}

/// Trusted key generator and triple dealer.
pub struct KeyGenerator {
    cfg: SystemConfig,
    rng: ChaCha20Rng,
    sk: SecretKey,
    pk: PublicKey,
    sk_v: SecretKey,
    pk_v: PublicKey,
    rlk: RelinKey,
    rlk_v: RelinKey,
    ksw: SwitchKey,
}

impl KeyGenerator {
    pub fn new(cfg: SystemConfig, mut rng: ChaCha20Rng) -> Result<Self> {
        let (pk, sk) = bfv::keygen(&cfg.params, &mut rng);
        let (pk_v, sk_v) = bfv::keygen(&cfg.params, &mut rng);
        let rlk = bfv::relin_keygen(&sk, DEFAULT_BASE_LOG, &mut rng)?;
        let rlk_v = bfv::relin_keygen(&sk_v, DEFAULT_BASE_LOG, &mut rng)?;
        // narrow moduli need a finer gadget so ciphertexts multiplied after
        // a setup-time switch still decrypt
        let switch_base = if cfg.params.q_bits() >= 96 {
            DEFAULT_BASE_LOG
        } else {
            4
        };
        let ksw = bfv::swkeygen(&sk, &sk_v, switch_base, &mut rng)?;
        Ok(Self {
            cfg,
            rng,
            sk,
            pk,
            sk_v,
            pk_v,
            rlk,
            rlk_v,
            ksw,
        })
    }

    pub fn pk(&self) -> &PublicKey {
        &self.pk
    }
    pub fn pk_v(&self) -> &PublicKey {
        &self.pk_v
    }
    /// The harness may decrypt as the trusted party; protocol roles never do.
    pub fn secret_key(&self) -> &SecretKey {
        &self.sk
    }
    pub fn verifier_secret_key(&self) -> &SecretKey {
        &self.sk_v
    }

    /// Length-prefixed bundle {pk, rlk, rlk_v, ksw} for the server.
    fn cs_delivery_payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for part in [
            self.pk.to_bytes(),
            self.rlk.to_bytes(),
            self.rlk_v.to_bytes(),
            self.ksw.to_bytes(),
        ] {
            out.extend_from_slice(&(part.len() as u32).to_le_bytes());
            out.extend_from_slice(&part);
        }
        out
    }

    fn verifier_delivery_bytes(&self) -> usize {
        self.pk.to_bytes().len() + self.pk_v.to_bytes().len() + self.sk_v.to_bytes().len()
    }

    fn deal_for(&mut self, m: usize) -> (DealerBatch, DealerBatch) {
        let budget = TripleBudget::for_reveal(
            m,
            self.cfg.params.log_t(),
            AGGREGATE_BITS,
            self.cfg.literal_comparison,
        );
        deal(budget, AGGREGATE_BITS, &mut self.rng)
    }
}

/// Enrollment-side state: only the public key.
pub struct DataProvider {
    cfg: SystemConfig,
    pk: PublicKey,
}

/// One enrollment upload: the merge ciphertext first, then full batches,
/// then the remainder batch.
pub struct EnrollUpload {
    pub cts: Vec<Ciphertext>,
    pub n_u: usize,
    /// indicator the provider padded against
    pub lead_ind: usize,
    /// indicator after this upload
    pub new_ind: usize,
}

impl DataProvider {
    pub fn new(cfg: SystemConfig, pk: PublicKey) -> Self {
        Self { cfg, pk }
    }

    /// Split `rows` per the indicator: ind leading zero rows fill the
    /// server's partially occupied last ciphertext, then full batches, then
    /// a zero-padded remainder.
    pub fn enroll<R: Rng>(
        &self,
        rows: &[QuantVector],
        ind: usize,
        rng: &mut R,
    ) -> Result<EnrollUpload> {
        let delta = self.cfg.delta();
        if rows.is_empty() {
            return Err(Error::Domain(
                "enrollment requires at least one vector".into(),
            ));
        }
        if ind >= delta {
            return Err(Error::Protocol(format!(
                "indicator {ind} outside [0, {delta})"
            )));
        }
        let params = &self.cfg.params;
        let qp = &self.cfg.qp;
        let mut cts = Vec::new();

        let head_len = rows.len().min(delta - ind);
        let head = encode_matrix_at(params, qp, ind, &rows[..head_len])?;
        cts.push(encrypt(&self.pk, head.poly(), rng)?);

        let mut rest = &rows[head_len..];
        while rest.len() >= delta {
            let batch = encode_matrix_at(params, qp, 0, &rest[..delta])?;
            cts.push(encrypt(&self.pk, batch.poly(), rng)?);
            rest = &rest[delta..];
        }
        if !rest.is_empty() {
            let batch = encode_matrix_at(params, qp, 0, rest)?;
            cts.push(encrypt(&self.pk, batch.poly(), rng)?);
        }
        Ok(EnrollUpload {
            cts,
            n_u: rows.len(),
            lead_ind: ind,
            new_ind: (ind + rows.len()) % delta,
        })
    }
}

impl EnrollUpload {
    pub fn to_payload(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.cts.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_u as u64).to_le_bytes());
        out.extend_from_slice(&(self.lead_ind as u32).to_le_bytes());
        out.extend_from_slice(&(self.new_ind as u32).to_le_bytes());
        for ct in &self.cts {
            let bytes = ciphertext_to_bytes(ct, 0)?;
            out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
            out.extend_from_slice(&bytes);
        }
        Ok(out)
    }

    pub fn from_payload(params: &Arc<RingParams>, data: &[u8], key_id: u64) -> Result<Self> {
        if data.len() < 20 {
            return Err(Error::Protocol("short enrollment payload".into()));
        }
        let count = u32::from_le_bytes(data[0..4].try_into().unwrap()) as usize;
        let n_u = u64::from_le_bytes(data[4..12].try_into().unwrap()) as usize;
        let lead_ind = u32::from_le_bytes(data[12..16].try_into().unwrap()) as usize;
        let new_ind = u32::from_le_bytes(data[16..20].try_into().unwrap()) as usize;
        let mut pos = 20;
        let mut cts = Vec::with_capacity(count);
        for _ in 0..count {
            let len = u32::from_le_bytes(data[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            cts.push(ciphertext_from_bytes(
                params,
                &data[pos..pos + len],
                key_id,
            )?);
            pos += len;
        }
        Ok(Self {
            cts,
            n_u,
            lead_ind,
            new_ind,
        })
    }
}

/// The server's packed ciphertext store: every ciphertext is full except
/// possibly the last, so logical row j of the database lives in ciphertext
/// j / delta at row j % delta.
pub struct EncryptedDatabase {
    cts: Vec<Ciphertext>,
    m: usize,
    delta: usize,
}

impl EncryptedDatabase {
    pub fn new(delta: usize) -> Self {
        Self {
            cts: Vec::new(),
            m: 0,
            delta,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn s(&self) -> usize {
        self.cts.len()
    }
    pub fn ciphertexts(&self) -> &[Ciphertext] {
        &self.cts
    }

    /// Occupied rows of the last ciphertext, zero when the database is empty
    /// or its last ciphertext is full. This is the count of zero rows the
    /// next provider must prepend.
    pub fn ind(&self) -> usize {
        self.m % self.delta
    }

    pub(crate) fn push(&mut self, ct: Ciphertext, rows: usize) {
        self.cts.push(ct);
        self.m += rows;
    }

    pub(crate) fn replace_all(&mut self, cts: Vec<Ciphertext>) {
        debug_assert_eq!(cts.len(), self.cts.len());
        self.cts = cts;
    }
}

struct CsKeys {
    rlk: RelinKey,
    rlk_v: RelinKey,
    ksw: SwitchKey,
}

/// Cloud server: stores the encrypted database, runs the homomorphic
/// pipeline, and plays party 0 of the revealing protocol.
pub struct CloudServer {
    cfg: SystemConfig,
    pk: PublicKey,
    keys: Option<CsKeys>,
    db: EncryptedDatabase,
    rng: ChaCha20Rng,
    /// database is currently encrypted under the verifier key
    switched: bool,
}

impl CloudServer {
    pub fn new(cfg: SystemConfig, pk: PublicKey, rng: ChaCha20Rng) -> Self {
        let delta = cfg.delta();
        Self {
            cfg,
            pk,
            keys: None,
            db: EncryptedDatabase::new(delta),
            rng,
            switched: false,
        }
    }

    pub fn db(&self) -> &EncryptedDatabase {
        &self.db
    }
    pub fn ind(&self) -> usize {
        self.db.ind()
    }

    pub fn install_keys(&mut self, rlk: RelinKey, rlk_v: RelinKey, ksw: SwitchKey) {
        self.keys = Some(CsKeys { rlk, rlk_v, ksw });
    }

    /// Parse a key-delivery bundle {pk, rlk, rlk_v, ksw}.
    pub fn install_keys_from_payload(&mut self, payload: &[u8]) -> Result<()> {
        let mut pos = 0usize;
        let mut next = |data: &[u8]| -> Result<Vec<u8>> {
            if data.len() < pos + 4 {
                return Err(Error::Protocol("short key bundle".into()));
            }
            let len = u32::from_le_bytes(data[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            let part = data[pos..pos + len].to_vec();
            pos += len;
            Ok(part)
        };
        let pk = PublicKey::from_bytes(&next(payload)?)?;
        let rlk = SwitchKey::from_bytes(&next(payload)?)?;
        let rlk_v = SwitchKey::from_bytes(&next(payload)?)?;
        let ksw = SwitchKey::from_bytes(&next(payload)?)?;
        if pk.key_id() != self.pk.key_id() {
            return Err(Error::Protocol("delivered public key mismatch".into()));
        }
        self.install_keys(rlk, rlk_v, ksw);
        Ok(())
    }

    fn keys(&self) -> Result<&CsKeys> {
        self.keys
            .as_ref()
            .ok_or_else(|| Error::Protocol("switching keys not delivered".into()))
    }

    /// Merge an upload: the head ciphertext lands on the partially filled
    /// last ciphertext by homomorphic addition, the rest are appended.
    pub fn merge_upload(&mut self, upload: EnrollUpload, stats: &mut NetStats) -> Result<()> {
        let delta = self.cfg.delta();
        let ind = self.db.ind();
        if upload.lead_ind != ind {
            return Err(Error::Protocol(format!(
                "indicator desynchronization: provider padded {} but occupancy says {ind}",
                upload.lead_ind
            )));
        }
        if upload.new_ind != (ind + upload.n_u) % delta {
            return Err(Error::Protocol(
                "indicator desynchronization in upload".into(),
            ));
        }
        let mut cts = upload.cts;
        if self.switched {
            // the stored database already lives under the verifier key
            let ksw = &self.keys()?.ksw;
            for ct in cts.iter_mut() {
                *ct = bfv::switching(ct, ksw)?;
                stats.switchings += 1;
            }
        }
        let mut iter = cts.into_iter();
        let head = iter
            .next()
            .expect("upload has at least the head ciphertext");
        let head_rows = upload.n_u.min(delta - ind);
        if ind > 0 {
            let last = self
                .db
                .cts
                .last_mut()
                .expect("nonzero indicator implies a stored ciphertext");
            *last = bfv::eval_add(last, &head)?;
            stats.he_adds += 1;
            self.db.m += head_rows;
        } else {
            self.db.push(head, head_rows);
        }
        let mut remaining = upload.n_u - head_rows;
        for ct in iter {
            let rows = remaining.min(delta);
            self.db.push(ct, rows);
            remaining -= rows;
        }
        debug_assert_eq!(remaining, 0);
        debug_assert_eq!(self.db.ind(), upload.new_ind);
        Ok(())
    }

    /// Switch the whole stored database to the verifier key (setup-time
    /// optimization); subsequent queries skip per-ciphertext switching.
    pub fn switch_database(&mut self, stats: &mut NetStats) -> Result<()> {
        if self.switched {
            return Ok(());
        }
        let ksw = &self.keys()?.ksw;
        let mut switched = Vec::with_capacity(self.db.s());
        for ct in self.db.ciphertexts() {
            switched.push(bfv::switching(ct, ksw)?);
            stats.switchings += 1;
        }
        self.db.replace_all(switched);
        self.switched = true;
        Ok(())
    }

    /// The homomorphic half of a distance session: multiply the query into
    /// every stored ciphertext, mask with a fresh uniform polynomial, switch
    /// to the verifier key, and serialize with the configured truncation.
    /// Returns the server's distance shares and the response payload.
    pub fn answer_query(
        &mut self,
        query_payload: &[u8],
        stats: &mut NetStats,
    ) -> Result<(Vec<u128>, Vec<u8>)> {
        if self.db.m == 0 {
            return Err(Error::Protocol("empty database".into()));
        }
        if self.keys.is_none() {
            return Err(Error::Protocol("switching keys not delivered".into()));
        }
        let keys = self.keys.as_ref().unwrap();
        let params = &self.cfg.params;
        let d = self.cfg.qp.d;
        let delta = self.cfg.delta();
        let t = params.t();
        let query_key = if self.switched {
            keys.ksw.dst_id()
        } else {
            self.pk.key_id()
        };
        let ct_q = ciphertext_from_bytes(params, query_payload, query_key)?;
        let relin = if self.switched {
            &keys.rlk_v
        } else {
            &keys.rlk
        };
        let rng = &mut self.rng;

        let mut d0 = Vec::with_capacity(self.db.m);
        // bare concatenation: one response ciphertext per stored ciphertext,
        // each self-describing, so this edge carries exactly s * ct_size bytes
        let mut response = Vec::new();
        for (i, ct_i) in self.db.cts.iter().enumerate() {
            let prod = bfv::eval_mul(&ct_q, ct_i, Some(relin))?;
            stats.he_mults += 1;
            stats.relins += 1;

            let mask = RingPoly::sample_uniform(params, ModTag::Plain, rng);
            let masked = bfv::eval_add_plain(&prod, &mask)?;
            stats.he_adds += 1;

            for k in 1..=delta {
                let j = i * delta + k - 1;
                if j < self.db.m {
                    let r = mask.coeff(k * d - 1);
                    d0.push((t - r) % t);
                }
            }

            let out = if self.switched {
                masked
            } else {
                let switched = bfv::switching(&masked, &keys.ksw)?;
                stats.switchings += 1;
                switched
            };
            let bytes = ciphertext_to_bytes(&out, self.cfg.truncate_bits)?;
            response.extend_from_slice(&bytes);
        }
        Ok((d0, response))
    }

    pub fn start_reveal(&mut self, d0: Vec<u128>, triples: DealerBatch) -> RevealSide {
        RevealSide::new_party0(&self.cfg, d0, triples)
    }
}

/// Verifier: encrypts queries, decrypts masked responses, plays party 1 of
/// the revealing protocol and learns the single output bit.
pub struct VerifierParty {
    cfg: SystemConfig,
    pk: PublicKey,
    pk_v: PublicKey,
    sk_v: SecretKey,
    rng: ChaCha20Rng,
}

impl VerifierParty {
    pub fn new(
        cfg: SystemConfig,
        pk: PublicKey,
        pk_v: PublicKey,
        sk_v: SecretKey,
        rng: ChaCha20Rng,
    ) -> Self {
        Self {
            cfg,
            pk,
            pk_v,
            sk_v,
            rng,
        }
    }

    pub fn pk_v(&self) -> &PublicKey {
        &self.pk_v
    }

    /// Encode and encrypt a query. Under switch-at-setup the verifier holds
    /// the decryption key, so the upload is seeded and half the size.
    pub fn make_query(
        &mut self,
        q: &QuantVector,
        switched: bool,
        stats: &mut NetStats,
    ) -> Result<Vec<u8>> {
        let poly = encode_query(&self.cfg.params, &self.cfg.qp, q)?;
        let ct = if switched {
            let seed: [u8; 32] = self.rng.gen();
            encrypt_seeded(&self.sk_v, &poly, seed, &mut self.rng)?
        } else {
            encrypt(&self.pk, &poly, &mut self.rng)?
        };
        stats.encryptions += 1;
        ciphertext_to_bytes(&ct, 0)
    }

    /// Decrypt the masked response ciphertexts and extract the share of each
    /// real row's distance.
    pub fn receive_distances(&mut self, payload: &[u8], m: usize) -> Result<Vec<u128>> {
        let params = &self.cfg.params;
        let d = self.cfg.qp.d;
        let delta = self.cfg.delta();
        let mut pos = 0;
        let mut i = 0;
        let mut d1 = Vec::with_capacity(m);
        while pos < payload.len() {
            let len = bfv::ciphertext_wire_len(params, &payload[pos..])?;
            let ct = ciphertext_from_bytes(params, &payload[pos..pos + len], self.sk_v.id())?;
            pos += len;
            let plain = bfv::decrypt(&self.sk_v, &ct)?;
            for (k, &coeff) in extract_targets(&plain, d, delta).iter().enumerate() {
                let j = i * delta + k;
                if j < m {
                    d1.push(coeff);
                }
            }
            i += 1;
        }
        if d1.len() != m {
            return Err(Error::Protocol("distance share count mismatch".into()));
        }
        Ok(d1)
    }

    pub fn start_reveal(
        &mut self,
        d1: Vec<u128>,
        threshold: i64,
        triples: DealerBatch,
    ) -> RevealSide {
        RevealSide::new_party1(&self.cfg, d1, threshold, triples)
    }
}

enum CmpEngine {
    Exact(GtThresholdBatch),
    Literal(MillionaireBatch),
}

impl CmpEngine {
    fn emit(&mut self, triples: &mut DealerBatch) -> Result<Vec<u8>> {
        match self {
            CmpEngine::Exact(e) => e.emit(triples),
            CmpEngine::Literal(e) => e.emit(triples),
        }
    }
    fn absorb(&mut self, data: &[u8]) -> Result<bool> {
        match self {
            CmpEngine::Exact(e) => e.absorb(data),
            CmpEngine::Literal(e) => e.absorb(data),
        }
    }
    fn results(&self) -> Vec<bool> {
        match self {
            CmpEngine::Exact(e) => e.results(),
            CmpEngine::Literal(e) => e.results(),
        }
    }
}

enum RevealPhase {
    Compare,
    Convert,
    Aggregate,
    Done,
}

/// One party's half of the result-revealing protocol: per-element comparison,
/// bit-to-arithmetic conversion, local summation, aggregate comparison.
pub struct RevealSide {
    party: PartyId,
    phase: RevealPhase,
    cmp: CmpEngine,
    b2a: Option<B2ABatch>,
    final_cmp: Option<MillionaireBatch>,
    triples: DealerBatch,
    mu_share: Option<bool>,
}

impl RevealSide {
    fn new_party0(cfg: &SystemConfig, d0: Vec<u128>, triples: DealerBatch) -> Self {
        let bits = cfg.params.log_t();
        let cmp = if cfg.literal_comparison {
            CmpEngine::Literal(literal_lt_party0(&d0, bits))
        } else {
            CmpEngine::Exact(GtThresholdBatch::new_party0(&d0, bits))
        };
        Self {
            party: 0,
            phase: RevealPhase::Compare,
            cmp,
            b2a: None,
            final_cmp: None,
            triples,
            mu_share: None,
        }
    }

    fn new_party1(cfg: &SystemConfig, d1: Vec<u128>, threshold: i64, triples: DealerBatch) -> Self {
        let bits = cfg.params.log_t();
        let cmp = if cfg.literal_comparison {
            CmpEngine::Literal(literal_lt_party1(&d1, threshold as i128, bits))
        } else {
            CmpEngine::Exact(GtThresholdBatch::new_party1(&d1, threshold as i128, bits))
        };
        Self {
            party: 1,
            phase: RevealPhase::Compare,
            cmp,
            b2a: None,
            final_cmp: None,
            triples,
            mu_share: None,
        }
    }

    /// Message kind and payload for the current round.
    pub fn emit(&mut self) -> Result<(MsgKind, Vec<u8>)> {
        match self.phase {
            RevealPhase::Compare => Ok((MsgKind::CmpRound, self.cmp.emit(&mut self.triples)?)),
            RevealPhase::Convert => Ok((
                MsgKind::B2ARound,
                self.b2a.as_mut().unwrap().emit(&mut self.triples)?,
            )),
            RevealPhase::Aggregate => Ok((
                MsgKind::CmpRound,
                self.final_cmp.as_mut().unwrap().emit(&mut self.triples)?,
            )),
            RevealPhase::Done => Err(Error::Protocol("revealing already finished".into())),
        }
    }

    /// Absorb the peer's round message; true once the aggregate comparison
    /// has produced the mu shares.
    pub fn absorb(&mut self, data: &[u8]) -> Result<bool> {
        match self.phase {
            RevealPhase::Compare => {
                if self.cmp.absorb(data)? {
                    let shares = self.cmp.results();
                    self.b2a = Some(B2ABatch::new(self.party, AGGREGATE_BITS, shares));
                    self.phase = RevealPhase::Convert;
                }
            }
            RevealPhase::Convert => {
                if self.b2a.as_mut().unwrap().absorb(data)? {
                    let m64 = mask_bits(AGGREGATE_BITS);
                    let sum = self
                        .b2a
                        .as_ref()
                        .unwrap()
                        .results()
                        .iter()
                        .fold(0u128, |a, &v| a.wrapping_add(v))
                        & m64;
                    let engine = if self.party == 0 {
                        MillionaireBatch::new(0, AGGREGATE_BITS, vec![sum.wrapping_neg() & m64])
                    } else {
                        MillionaireBatch::new(1, AGGREGATE_BITS, vec![sum])
                    };
                    self.final_cmp = Some(engine);
                    self.phase = RevealPhase::Aggregate;
                }
            }
            RevealPhase::Aggregate => {
                if self.final_cmp.as_mut().unwrap().absorb(data)? {
                    self.mu_share = Some(self.final_cmp.as_ref().unwrap().results()[0]);
                    self.phase = RevealPhase::Done;
                }
            }
            RevealPhase::Done => return Err(Error::Protocol("revealing already finished".into())),
        }
        Ok(matches!(self.phase, RevealPhase::Done))
    }

    pub fn mu_share(&self) -> Option<bool> {
        self.mu_share
    }

    pub fn triples_consumed(&self) -> (usize, usize) {
        (self.triples.bool_consumed(), self.triples.arith_consumed())
    }
}

/// Per-query measurements, checked by the op-count and scaling suites.
#[derive(Clone, Debug)]
pub struct SessionMetrics {
    pub m: usize,
    pub s: usize,
    pub he_mults: u64,
    pub he_adds: u64,
    pub relins: u64,
    pub switchings: u64,
    pub bytes_cs_to_verifier: u64,
    pub bytes_verifier_to_cs: u64,
    pub he_phase_bytes_cs_to_verifier: u64,
    pub he_phase_seconds: f64,
    pub reveal_phase_seconds: f64,
    pub response_ct_bytes: usize,
    pub bool_triples: u64,
    pub arith_triples: u64,
    pub matched: bool,
    /// the server's share of the output bit (uniform over sessions)
    pub cs_mu_share: bool,
}

/// In-process simulation wiring all four roles through a counting channel;
/// deterministic given the seed.
pub struct Simulation {
    pub cfg: SystemConfig,
    kg: KeyGenerator,
    cs: CloudServer,
    verifier: VerifierParty,
    dp_rng: ChaCha20Rng,
    pub channel: Channel,
    session: u64,
}

impl Simulation {
    pub fn new(cfg: SystemConfig, seed: u64) -> Result<Self> {
        Self::new_salted(cfg, seed, 0)
    }

    /// Key material depends only on `seed`; the session randomness (masks,
    /// encryption noise, shares) is additionally salted, so persistent
    /// deployments can refresh it between invocations without changing keys.
    pub fn new_salted(cfg: SystemConfig, seed: u64, salt: u64) -> Result<Self> {
        let mut channel = Channel::new();
        let kg = KeyGenerator::new(cfg.clone(), role_rng(seed, 0))?;
        let session_seed = seed ^ salt.wrapping_mul(0xd1342543de82ef95);
        let mut cs = CloudServer::new(cfg.clone(), kg.pk().clone(), role_rng(session_seed, 2));
        let verifier = VerifierParty::new(
            cfg.clone(),
            kg.pk().clone(),
            kg.pk_v().clone(),
            kg.verifier_secret_key().clone(),
            role_rng(session_seed, 3),
        );

        // key distribution, idempotent on repeat setup
        channel.mark_phase("setup");
        channel.pass(Message::new(
            MsgKind::SetupRequest,
            0,
            Role::Verifier,
            Role::Kg,
            vec![0u8; 1],
        ));
        let delivery = channel.pass(Message::new(
            MsgKind::SwitchKeyDelivery,
            0,
            Role::Kg,
            Role::Cs,
            kg.cs_delivery_payload(),
        ));
        cs.install_keys_from_payload(&delivery.payload)?;
        channel.pass(Message::new(
            MsgKind::SwitchKeyDelivery,
            0,
            Role::Kg,
            Role::Verifier,
            vec![0u8; kg.verifier_delivery_bytes()],
        ));
        channel.pass(Message::new(
            MsgKind::SwitchKeyDelivery,
            0,
            Role::Kg,
            Role::Dp,
            vec![0u8; kg.pk().to_bytes().len()],
        ));
        channel.end_phase();

        Ok(Self {
            cfg,
            kg,
            cs,
            verifier,
            dp_rng: role_rng(session_seed, 1),
            channel,
            session: 0,
        })
    }

    /// Drop all stored ciphertexts, keeping the key material.
    pub fn clear_database(&mut self) {
        self.cs.db = EncryptedDatabase::new(self.cfg.delta());
        self.cs.switched = false;
    }

    /// Install previously stored ciphertexts (they must be under this
    /// system's public key).
    pub fn load_database(&mut self, cts: Vec<Ciphertext>, m: usize) -> Result<()> {
        let delta = self.cfg.delta();
        if m == 0 || m.div_ceil(delta) != cts.len() {
            return Err(Error::Protocol(format!(
                "{m} rows cannot occupy {} ciphertexts",
                cts.len()
            )));
        }
        if cts.iter().any(|ct| ct.key_id() != self.kg.pk().key_id()) {
            return Err(Error::Protocol(
                "stored ciphertexts under a different key".into(),
            ));
        }
        self.cs.db = EncryptedDatabase::new(delta);
        let mut remaining = m;
        for ct in cts {
            let rows = remaining.min(delta);
            self.cs.db.push(ct, rows);
            remaining -= rows;
        }
        Ok(())
    }

    pub fn kg(&self) -> &KeyGenerator {
        &self.kg
    }
    pub fn cs(&self) -> &CloudServer {
        &self.cs
    }
    pub fn m(&self) -> usize {
        self.cs.db.m()
    }
    pub fn stats(&self) -> &NetStats {
        &self.channel.stats
    }

    /// One provider enrollment session over the channel.
    pub fn enroll_quantized(&mut self, rows: &[QuantVector]) -> Result<()> {
        self.session += 1;
        self.channel.mark_phase("enroll");
        let dp = DataProvider::new(self.cfg.clone(), self.kg.pk().clone());

        self.channel.pass(Message::new(
            MsgKind::IndicatorRequest,
            self.session,
            Role::Dp,
            Role::Cs,
            vec![],
        ));
        let ind = self.cs.ind();
        self.channel.pass(Message::new(
            MsgKind::IndicatorReply,
            self.session,
            Role::Cs,
            Role::Dp,
            (ind as u32).to_le_bytes().to_vec(),
        ));

        let upload = dp.enroll(rows, ind, &mut self.dp_rng)?;
        let payload = upload.to_payload()?;
        let msg = self.channel.pass(Message::new(
            MsgKind::EnrollUpload,
            self.session,
            Role::Dp,
            Role::Cs,
            payload,
        ));
        let received =
            EnrollUpload::from_payload(&self.cfg.params, &msg.payload, self.kg.pk().key_id())?;
        self.cs.merge_upload(received, &mut self.channel.stats)?;
        self.channel.end_phase();
        Ok(())
    }

    pub fn enroll(&mut self, vectors: &[Vec<f64>]) -> Result<()> {
        let rows = vectors
            .iter()
            .map(|v| normalize_quantize(v, &self.cfg.qp))
            .collect::<Result<Vec<_>>>()?;
        self.enroll_quantized(&rows)
    }

    /// Setup-time database switch (only meaningful with switch_at_setup).
    pub fn run_verifier_setup(&mut self) -> Result<()> {
        if self.cfg.switch_at_setup {
            self.channel.mark_phase("setup");
            self.cs.switch_database(&mut self.channel.stats)?;
            self.channel.end_phase();
        }
        Ok(())
    }

    /// Full query: distance session then result revealing. Returns the
    /// verifier's bit and the session measurements.
    pub fn query_quantized(
        &mut self,
        q: &QuantVector,
        threshold: i64,
    ) -> Result<(bool, SessionMetrics)> {
        if !self.cfg.literal_comparison {
            self.cfg.validate_threshold(threshold)?;
        }
        if self.cfg.switch_at_setup && !self.cs.switched {
            self.run_verifier_setup()?;
        }
        self.session += 1;
        let m = self.cs.db.m();
        let s = self.cs.db.s();
        let stats_before = self.channel.stats.clone();
        let he_start = std::time::Instant::now();
        self.channel.mark_phase("he");

        let query_payload =
            self.verifier
                .make_query(q, self.cfg.switch_at_setup, &mut self.channel.stats)?;
        let msg = self.channel.pass(Message::new(
            MsgKind::QueryCiphertext,
            self.session,
            Role::Verifier,
            Role::Cs,
            query_payload,
        ));

        let (d0, response) = self
            .cs
            .answer_query(&msg.payload, &mut self.channel.stats)?;
        let first_ct_len = if s > 0 { response.len() / s } else { 0 };
        let msg = self.channel.pass(Message::new(
            MsgKind::MaskedDistances,
            self.session,
            Role::Cs,
            Role::Verifier,
            response,
        ));
        let d1 = self.verifier.receive_distances(&msg.payload, m)?;
        let he_seconds = he_start.elapsed().as_secs_f64();
        let he_bytes_cs_v = self.channel.stats.edge_bytes(Role::Cs, Role::Verifier)
            - stats_before.edge_bytes(Role::Cs, Role::Verifier);

        // offline: dealer tops up both parties for this session
        let (t_cs, t_v) = self.kg.deal_for(m);
        let msg = self.channel.pass_offline(Message::new(
            MsgKind::DealerDelivery,
            self.session,
            Role::Kg,
            Role::Cs,
            t_cs.to_bytes(),
        ));
        let t_cs = DealerBatch::from_bytes(&msg.payload)?;
        let msg = self.channel.pass_offline(Message::new(
            MsgKind::DealerDelivery,
            self.session,
            Role::Kg,
            Role::Verifier,
            t_v.to_bytes(),
        ));
        let t_v = DealerBatch::from_bytes(&msg.payload)?;

        self.channel.mark_phase("reveal");
        let reveal_start = std::time::Instant::now();
        let mut side0 = self.cs.start_reveal(d0, t_cs);
        let mut side1 = self.verifier.start_reveal(d1, threshold, t_v);
        loop {
            let (kind0, m0) = side0.emit()?;
            let m0 = self.channel.pass(Message::new(
                kind0,
                self.session,
                Role::Cs,
                Role::Verifier,
                m0,
            ));
            let (kind1, m1) = side1.emit()?;
            debug_assert_eq!(kind0 as u8, kind1 as u8);
            let m1 = self.channel.pass(Message::new(
                kind1,
                self.session,
                Role::Verifier,
                Role::Cs,
                m1,
            ));
            let done0 = side0.absorb(&m1.payload)?;
            let done1 = side1.absorb(&m0.payload)?;
            debug_assert_eq!(done0, done1);
            if done0 {
                break;
            }
        }
        let mu0 = side0.mu_share().unwrap();
        let msg = self.channel.pass(Message::new(
            MsgKind::FinalBit,
            self.session,
            Role::Cs,
            Role::Verifier,
            vec![mu0 as u8],
        ));
        let mu = (msg.payload[0] != 0) ^ side1.mu_share().unwrap();
        self.channel.end_phase();

        let (b0, a0) = side0.triples_consumed();
        self.channel.stats.bool_triples_used += b0 as u64;
        self.channel.stats.arith_triples_used += a0 as u64;

        let stats = &self.channel.stats;
        let metrics = SessionMetrics {
            m,
            s,
            he_mults: stats.he_mults - stats_before.he_mults,
            he_adds: stats.he_adds - stats_before.he_adds,
            relins: stats.relins - stats_before.relins,
            switchings: stats.switchings - stats_before.switchings,
            bytes_cs_to_verifier: stats.edge_bytes(Role::Cs, Role::Verifier)
                - stats_before.edge_bytes(Role::Cs, Role::Verifier),
            bytes_verifier_to_cs: stats.edge_bytes(Role::Verifier, Role::Cs)
                - stats_before.edge_bytes(Role::Verifier, Role::Cs),
            he_phase_bytes_cs_to_verifier: he_bytes_cs_v,
            he_phase_seconds: he_seconds,
            reveal_phase_seconds: reveal_start.elapsed().as_secs_f64(),
            response_ct_bytes: first_ct_len,
            bool_triples: b0 as u64,
            arith_triples: a0 as u64,
            matched: mu,
            cs_mu_share: mu0,
        };
        Ok((mu, metrics))
    }

    /// Query with a real-valued vector and cosine threshold.
    pub fn query(
        &mut self,
        vector: &[f64],
        cosine_threshold: f64,
    ) -> Result<(bool, SessionMetrics)> {
        let q = normalize_quantize(vector, &self.cfg.qp)?;
        let ts = self.cfg.qp.quantize_threshold(cosine_threshold);
        self.query_quantized(&q, ts)
    }

    /// Distance phase only: encrypt the query, run the homomorphic loop,
    /// decrypt the shares, no revealing. Used by the large-m bench mode.
    pub fn distance_only(
        &mut self,
        q: &QuantVector,
    ) -> Result<(Vec<u128>, Vec<u128>, SessionMetrics)> {
        if self.cfg.switch_at_setup && !self.cs.switched {
            self.run_verifier_setup()?;
        }
        self.session += 1;
        let m = self.cs.db.m();
        let s = self.cs.db.s();
        let stats_before = self.channel.stats.clone();
        let he_start = std::time::Instant::now();
        self.channel.mark_phase("he");
        let query_payload =
            self.verifier
                .make_query(q, self.cfg.switch_at_setup, &mut self.channel.stats)?;
        let msg = self.channel.pass(Message::new(
            MsgKind::QueryCiphertext,
            self.session,
            Role::Verifier,
            Role::Cs,
            query_payload,
        ));
        let (d0, response) = self
            .cs
            .answer_query(&msg.payload, &mut self.channel.stats)?;
        let first_ct_len = if s > 0 { response.len() / s } else { 0 };
        let msg = self.channel.pass(Message::new(
            MsgKind::MaskedDistances,
            self.session,
            Role::Cs,
            Role::Verifier,
            response,
        ));
        let d1 = self.verifier.receive_distances(&msg.payload, m)?;
        self.channel.end_phase();
        let stats = &self.channel.stats;
        let metrics = SessionMetrics {
            m,
            s,
            he_mults: stats.he_mults - stats_before.he_mults,
            he_adds: stats.he_adds - stats_before.he_adds,
            relins: stats.relins - stats_before.relins,
            switchings: stats.switchings - stats_before.switchings,
            bytes_cs_to_verifier: stats.edge_bytes(Role::Cs, Role::Verifier)
                - stats_before.edge_bytes(Role::Cs, Role::Verifier),
            bytes_verifier_to_cs: stats.edge_bytes(Role::Verifier, Role::Cs)
                - stats_before.edge_bytes(Role::Verifier, Role::Cs),
            he_phase_bytes_cs_to_verifier: stats.edge_bytes(Role::Cs, Role::Verifier)
                - stats_before.edge_bytes(Role::Cs, Role::Verifier),
            he_phase_seconds: he_start.elapsed().as_secs_f64(),
            reveal_phase_seconds: 0.0,
            response_ct_bytes: first_ct_len,
            bool_triples: 0,
            arith_triples: 0,
            matched: false,
            cs_mu_share: false,
        };
        Ok((d0, d1, metrics))
    }

    /// Run one query over a real TCP connection, server and client on
    /// separate threads. Returns (bit, client stats, server stats).
    pub fn query_over_tcp(
        &mut self,
        q: &QuantVector,
        threshold: i64,
    ) -> Result<(bool, NetStats, NetStats)> {
        if !self.cfg.literal_comparison {
            self.cfg.validate_threshold(threshold)?;
        }
        if self.cfg.switch_at_setup && !self.cs.switched {
            self.run_verifier_setup()?;
        }
        let m = self.cs.db.m();
        let (t_cs, t_v) = self.kg.deal_for(m);
        let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?.to_string();
        let switched = self.cfg.switch_at_setup;
        let cs = &mut self.cs;
        let verifier = &mut self.verifier;
        let (client_res, server_res) = std::thread::scope(|scope| {
            let server = scope.spawn(move || tcp::serve_query_session(&listener, cs, t_cs));
            let client = tcp::run_query_client(&addr, verifier, q, threshold, m, switched, t_v);
            (client, server.join().expect("server thread panicked"))
        });
        let (mu, client_stats) = client_res?;
        let server_stats = server_res?;
        Ok((mu, client_stats, server_stats))
    }

    /// Trusted-party oracle: decrypt the stored database row by row
    /// (harness/test use only).
    pub fn decrypt_database(&self) -> Result<Vec<Vec<i64>>> {
        let sk = if self.cs.switched {
            self.kg.verifier_secret_key()
        } else {
            self.kg.secret_key()
        };
        let d = self.cfg.qp.d;
        let delta = self.cfg.delta();
        let mut rows = Vec::with_capacity(self.cs.db.m());
        for (i, ct) in self.cs.db.ciphertexts().iter().enumerate() {
            let plain = bfv::decrypt(sk, ct)?;
            let lifted = plain.center_lift();
            for k in 0..delta {
                let j = i * delta + k;
                if j >= self.cs.db.m() {
                    break;
                }
                let row: Vec<i64> = (0..d).map(|e| lifted[k * d + (d - 1 - e)] as i64).collect();
                rows.push(row);
            }
        }
        Ok(rows)
    }
}
