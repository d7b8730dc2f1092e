//! Round-driven comparison gadgets.
//!
//! The millionaire comparison works on the bit-leaf recursion
//! lt = lt_hi XOR (eq_hi AND lt_lo), eq = eq_hi AND eq_lo, evaluated level by
//! level so one message round serves a whole batch of instances. Secure AND
//! opens Beaver-masked bits; every opened bit is uniform, so transcripts reveal
//! nothing about the inputs.
//!
//! Engines emit before they absorb and emissions never depend on the peer's
//! current-round message, so a sequential request/response transport and a
//! simultaneous exchange produce identical results.

use crate::error::{Error, Result};
use crate::mpc::{
    mask_bits, pack_bits, unpack_bits, ArithShare, BoolShare, BoolTriple, DealerBatch, PartyId,
};

/// One batched Beaver-AND round over XOR shares.
pub struct AndBatch {
    party: PartyId,
    x: Vec<bool>,
    y: Vec<bool>,
    tr: Vec<BoolTriple>,
}

impl AndBatch {
    pub fn start(
        party: PartyId,
        x: Vec<bool>,
        y: Vec<bool>,
        triples: &mut DealerBatch,
    ) -> Result<Self> {
        debug_assert_eq!(x.len(), y.len());
        let tr = triples.take_bool(x.len())?.to_vec();
        Ok(Self { party, x, y, tr })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    /// Masked openings d = x ^ a, e = y ^ b, bit-packed d then e.
    pub fn message(&self) -> Vec<u8> {
        let d: Vec<bool> = self.x.iter().zip(&self.tr).map(|(&x, t)| x ^ t.a).collect();
        let e: Vec<bool> = self.y.iter().zip(&self.tr).map(|(&y, t)| y ^ t.b).collect();
        let mut out = pack_bits(&d);
        out.extend_from_slice(&pack_bits(&e));
        out
    }

    /// Combine with the peer's openings into shares of x AND y.
    pub fn finish(self, incoming: &[u8]) -> Result<Vec<bool>> {
        let n = self.x.len();
        let half = n.div_ceil(8);
        if incoming.len() != 2 * half {
            return Err(Error::Protocol("bad AND round payload".into()));
        }
        let their_d = unpack_bits(&incoming[..half], n)?;
        let their_e = unpack_bits(&incoming[half..], n)?;
        let out = (0..n)
            .map(|i| {
                let t = &self.tr[i];
                let d = self.x[i] ^ t.a ^ their_d[i];
                let e = self.y[i] ^ t.b ^ their_e[i];
                let mut z = t.c ^ (d & t.b) ^ (e & t.a);
                if self.party == 0 {
                    z ^= d & e;
                }
                z
            })
            .collect();
        Ok(out)
    }
}

/// A party-side engine advanced by alternating emit/absorb calls.
pub trait RoundEngine {
    /// Produce this round's message; consumes triples.
    fn emit(&mut self, triples: &mut DealerBatch) -> Result<Vec<u8>>;
    /// Incorporate the peer's message for the same round; true when finished.
    fn absorb(&mut self, incoming: &[u8]) -> Result<bool>;
}

/// Drive two engines to completion with in-memory message passing.
pub fn run_engines_local<A: RoundEngine, B: RoundEngine>(
    e0: &mut A,
    t0: &mut DealerBatch,
    e1: &mut B,
    t1: &mut DealerBatch,
) -> Result<()> {
    loop {
        let m0 = e0.emit(t0)?;
        let m1 = e1.emit(t1)?;
        let f0 = e0.absorb(&m1)?;
        let f1 = e1.absorb(&m0)?;
        debug_assert_eq!(f0, f1);
        if f0 {
            return Ok(());
        }
    }
}

enum MillionairePhase {
    Leaves,
    Combine,
    Done,
}

/// A batch of unsigned comparisons 1{x < y}, x private to party 0 and y to
/// party 1, all at the same bit width.
pub struct MillionaireBatch {
    party: PartyId,
    /// which party holds the left operand x (the other holds y)
    x_holder: PartyId,
    bits: u32,
    m: usize,
    inputs: Vec<u128>,
    // per instance, significance-ordered share pairs of the active tree nodes
    lt: Vec<Vec<bool>>,
    eq: Vec<Vec<bool>>,
    phase: MillionairePhase,
    pending: Option<AndBatch>,
    and_gates: usize,
    opened_bits: usize,
}

impl MillionaireBatch {
    pub fn new(party: PartyId, bits: u32, inputs: Vec<u128>) -> Self {
        Self::with_roles(party, 0, bits, inputs)
    }

    /// Comparison 1{x < y} with x held by `x_holder` and y by the other party.
    pub fn with_roles(party: PartyId, x_holder: PartyId, bits: u32, inputs: Vec<u128>) -> Self {
        debug_assert!(bits >= 1 && bits <= 128);
        let m = inputs.len();
        Self {
            party,
            x_holder,
            bits,
            m,
            inputs,
            lt: vec![Vec::new(); m],
            eq: vec![Vec::new(); m],
            phase: MillionairePhase::Leaves,
            pending: None,
            and_gates: 0,
            opened_bits: 0,
        }
    }

    /// Comparison result shares, one per instance; valid once finished.
    pub fn results(&self) -> Vec<bool> {
        debug_assert!(matches!(self.phase, MillionairePhase::Done));
        self.lt.iter().map(|nodes| nodes[0]).collect()
    }

    pub fn and_gates(&self) -> usize {
        self.and_gates
    }
    pub fn opened_bits(&self) -> usize {
        self.opened_bits
    }

    pub fn rounds_total(bits: u32) -> usize {
        // leaf round plus one per halving of the node count
        1 + (bits as usize).next_power_of_two().trailing_zeros() as usize
    }

    fn bit(&self, inst: usize, i: u32) -> bool {
        (self.inputs[inst] >> i) & 1 == 1
    }
}

impl RoundEngine for MillionaireBatch {
    fn emit(&mut self, triples: &mut DealerBatch) -> Result<Vec<u8>> {
        debug_assert!(self.pending.is_none());
        let (x, y): (Vec<bool>, Vec<bool>) = match self.phase {
            MillionairePhase::Leaves => {
                // leaf lt_i = !x_i AND y_i over privately-held bits
                let mut xs = Vec::with_capacity(self.m * self.bits as usize);
                let mut ys = Vec::with_capacity(self.m * self.bits as usize);
                for inst in 0..self.m {
                    for i in 0..self.bits {
                        let b = self.bit(inst, i);
                        if self.party == self.x_holder {
                            xs.push(!b);
                            ys.push(false);
                        } else {
                            xs.push(false);
                            ys.push(b);
                        }
                    }
                }
                (xs, ys)
            }
            MillionairePhase::Combine => {
                let nodes = self.lt[0].len();
                let pairs = nodes / 2;
                let root_level = nodes == 2;
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for inst in 0..self.m {
                    for j in 0..pairs {
                        // lt = lt_hi ^ (eq_hi AND lt_lo)
                        xs.push(self.eq[inst][2 * j + 1]);
                        ys.push(self.lt[inst][2 * j]);
                    }
                    if !root_level {
                        for j in 0..pairs {
                            // eq = eq_hi AND eq_lo
                            xs.push(self.eq[inst][2 * j + 1]);
                            ys.push(self.eq[inst][2 * j]);
                        }
                    }
                }
                (xs, ys)
            }
            MillionairePhase::Done => {
                return Err(Error::Protocol("comparison already finished".into()))
            }
        };
        self.and_gates += x.len();
        self.opened_bits += 2 * x.len();
        let batch = AndBatch::start(self.party, x, y, triples)?;
        let msg = batch.message();
        self.pending = Some(batch);
        Ok(msg)
    }

    fn absorb(&mut self, incoming: &[u8]) -> Result<bool> {
        let batch = self
            .pending
            .take()
            .ok_or_else(|| Error::Protocol("no round in flight".into()))?;
        let z = batch.finish(incoming)?;
        match self.phase {
            MillionairePhase::Leaves => {
                let b = self.bits as usize;
                for inst in 0..self.m {
                    self.lt[inst] = z[inst * b..(inst + 1) * b].to_vec();
                    // eq_i = !(x_i ^ y_i): party 0 contributes x_i, party 1 !y_i
                    self.eq[inst] = (0..self.bits)
                        .map(|i| {
                            let bv = self.bit(inst, i);
                            if self.party == self.x_holder {
                                bv
                            } else {
                                !bv
                            }
                        })
                        .collect();
                }
                self.phase = if self.bits == 1 {
                    MillionairePhase::Done
                } else {
                    MillionairePhase::Combine
                };
            }
            MillionairePhase::Combine => {
                let nodes = self.lt[0].len();
                let pairs = nodes / 2;
                let carry = nodes % 2 == 1;
                let root_level = nodes == 2;
                let per_inst = if root_level { pairs } else { 2 * pairs };
                for inst in 0..self.m {
                    let zs = &z[inst * per_inst..(inst + 1) * per_inst];
                    let mut new_lt = Vec::with_capacity(pairs + carry as usize);
                    let mut new_eq = Vec::with_capacity(pairs + carry as usize);
                    for j in 0..pairs {
                        new_lt.push(self.lt[inst][2 * j + 1] ^ zs[j]);
                        new_eq.push(if root_level { false } else { zs[pairs + j] });
                    }
                    if carry {
                        new_lt.push(self.lt[inst][nodes - 1]);
                        new_eq.push(self.eq[inst][nodes - 1]);
                    }
                    self.lt[inst] = new_lt;
                    self.eq[inst] = new_eq;
                }
                if self.lt[0].len() == 1 {
                    self.phase = MillionairePhase::Done;
                }
            }
            MillionairePhase::Done => {
                return Err(Error::Protocol("comparison already finished".into()))
            }
        }
        Ok(matches!(self.phase, MillionairePhase::Done))
    }
}

/// Batched exact comparison of shared values against a public-to-the-verifier
/// threshold: shares of 1{v > ts} with v = d0 + d1 mod 2^bits read as signed,
/// valid whenever |v - ts| < 2^(bits-1).
///
/// With z = v - ts - 1, the sign of z is msb(z0) ^ msb(z1) ^ carry where the
/// carry out of the low bits is one millionaire comparison; the output is the
/// complement of that sign.
pub struct GtThresholdBatch {
    party: PartyId,
    msb: Vec<bool>,
    inner: MillionaireBatch,
}

impl GtThresholdBatch {
    pub fn new_party0(d0: &[u128], bits: u32) -> Self {
        let low_mask = mask_bits(bits - 1);
        let msb = d0.iter().map(|&z| (z >> (bits - 1)) & 1 == 1).collect();
        let inputs = d0.iter().map(|&z| low_mask - (z & low_mask)).collect();
        Self {
            party: 0,
            msb,
            inner: MillionaireBatch::new(0, bits - 1, inputs),
        }
    }

    pub fn new_party1(d1: &[u128], threshold: i128, bits: u32) -> Self {
        let m = mask_bits(bits);
        let low_mask = mask_bits(bits - 1);
        let z1: Vec<u128> = d1
            .iter()
            .map(|&d| {
                d.wrapping_sub(threshold.rem_euclid(1i128 << bits) as u128)
                    .wrapping_sub(1)
                    & m
            })
            .collect();
        let msb = z1.iter().map(|&z| (z >> (bits - 1)) & 1 == 1).collect();
        let inputs = z1.iter().map(|&z| z & low_mask).collect();
        Self {
            party: 1,
            msb,
            inner: MillionaireBatch::new(1, bits - 1, inputs),
        }
    }

    /// Shares of 1{v > ts} per instance; valid once finished.
    pub fn results(&self) -> Vec<bool> {
        self.inner
            .results()
            .iter()
            .zip(&self.msb)
            .map(|(&carry, &msb)| msb ^ carry ^ (self.party == 1))
            .collect()
    }

    pub fn and_gates(&self) -> usize {
        self.inner.and_gates()
    }
}

impl RoundEngine for GtThresholdBatch {
    fn emit(&mut self, triples: &mut DealerBatch) -> Result<Vec<u8>> {
        self.inner.emit(triples)
    }
    fn absorb(&mut self, incoming: &[u8]) -> Result<bool> {
        self.inner.absorb(incoming)
    }
}

/// Literal per-element comparison on raw shares: the verifier inputs
/// ts - d1 mod 2^bits, the server inputs d0, and the unsigned millionaire
/// output stands in for 1{ts < v}. Wrong whenever the random share straddles
/// the wrap, with probability about |v - ts| / 2^bits; kept for failure-rate
/// demonstrations.
pub fn literal_lt_party0(d0: &[u128], bits: u32) -> MillionaireBatch {
    MillionaireBatch::with_roles(0, 1, bits, d0.to_vec())
}

pub fn literal_lt_party1(d1: &[u128], threshold: i128, bits: u32) -> MillionaireBatch {
    let m = mask_bits(bits);
    let ts = threshold.rem_euclid(1i128 << bits) as u128;
    let inputs = d1.iter().map(|&d| ts.wrapping_sub(d) & m).collect();
    MillionaireBatch::with_roles(1, 1, bits, inputs)
}

/// Batched boolean-to-arithmetic conversion: shares of each bit value in
/// Z_{2^bits} via b = b0 + b1 - 2*b0*b1, the product by one Beaver
/// multiplication.
pub struct B2ABatch {
    party: PartyId,
    bits: u32,
    v: Vec<bool>,
    tr: Vec<super::ArithTriple>,
    results: Vec<u128>,
    done: bool,
}

impl B2ABatch {
    pub fn new(party: PartyId, bits: u32, shares: Vec<bool>) -> Self {
        Self {
            party,
            bits,
            v: shares,
            tr: Vec::new(),
            results: Vec::new(),
            done: false,
        }
    }

    pub fn results(&self) -> &[u128] {
        debug_assert!(self.done);
        &self.results
    }

    fn word_len(&self) -> usize {
        self.bits.div_ceil(8) as usize
    }
}

impl RoundEngine for B2ABatch {
    fn emit(&mut self, triples: &mut DealerBatch) -> Result<Vec<u8>> {
        if triples.arith_bits() != self.bits {
            return Err(Error::Protocol("dealer ring width mismatch".into()));
        }
        self.tr = triples.take_arith(self.v.len())?.to_vec();
        let m = mask_bits(self.bits);
        let w = self.word_len();
        let mut out = Vec::with_capacity(2 * w * self.v.len());
        for (i, &v) in self.v.iter().enumerate() {
            let x = if self.party == 0 { v as u128 } else { 0 };
            let y = if self.party == 1 { v as u128 } else { 0 };
            let d = x.wrapping_sub(self.tr[i].a) & m;
            let e = y.wrapping_sub(self.tr[i].b) & m;
            out.extend_from_slice(&d.to_le_bytes()[..w]);
            out.extend_from_slice(&e.to_le_bytes()[..w]);
        }
        Ok(out)
    }

    fn absorb(&mut self, incoming: &[u8]) -> Result<bool> {
        let w = self.word_len();
        let n = self.v.len();
        if incoming.len() != 2 * w * n {
            return Err(Error::Protocol("bad conversion round payload".into()));
        }
        let m = mask_bits(self.bits);
        let read = |chunk: &[u8]| {
            let mut buf = [0u8; 16];
            buf[..w].copy_from_slice(chunk);
            u128::from_le_bytes(buf)
        };
        self.results = (0..n)
            .map(|i| {
                let their_d = read(&incoming[2 * w * i..2 * w * i + w]);
                let their_e = read(&incoming[2 * w * i + w..2 * w * (i + 1)]);
                let x = if self.party == 0 {
                    self.v[i] as u128
                } else {
                    0
                };
                let y = if self.party == 1 {
                    self.v[i] as u128
                } else {
                    0
                };
                let d = x.wrapping_sub(self.tr[i].a).wrapping_add(their_d) & m;
                let e = y.wrapping_sub(self.tr[i].b).wrapping_add(their_e) & m;
                let mut z = self.tr[i]
                    .c
                    .wrapping_add(d.wrapping_mul(self.tr[i].b))
                    .wrapping_add(e.wrapping_mul(self.tr[i].a));
                if self.party == 0 {
                    z = z.wrapping_add(d.wrapping_mul(e));
                }
                (self.v[i] as u128).wrapping_sub(z.wrapping_mul(2)) & m
            })
            .collect();
        self.done = true;
        Ok(true)
    }
}

/// Single secure AND over pair-held boolean shares (test and demo surface;
/// the batched engines are the production path).
pub fn secure_and_local(
    x: (BoolShare, BoolShare),
    y: (BoolShare, BoolShare),
    t0: &mut DealerBatch,
    t1: &mut DealerBatch,
) -> Result<(BoolShare, BoolShare)> {
    let b0 = AndBatch::start(0, vec![x.0.bit], vec![y.0.bit], t0)?;
    let b1 = AndBatch::start(1, vec![x.1.bit], vec![y.1.bit], t1)?;
    let m0 = b0.message();
    let m1 = b1.message();
    let z0 = b0.finish(&m1)?[0];
    let z1 = b1.finish(&m0)?[0];
    Ok((
        BoolShare { bit: z0, party: 0 },
        BoolShare { bit: z1, party: 1 },
    ))
}

/// Millionaire comparison with in-memory transport, returning output shares.
pub fn millionaire_lt_local(
    x: u128,
    y: u128,
    bits: u32,
    t0: &mut DealerBatch,
    t1: &mut DealerBatch,
) -> Result<(BoolShare, BoolShare)> {
    let mut e0 = MillionaireBatch::new(0, bits, vec![x]);
    let mut e1 = MillionaireBatch::new(1, bits, vec![y]);
    run_engines_local(&mut e0, t0, &mut e1, t1)?;
    Ok((
        BoolShare {
            bit: e0.results()[0],
            party: 0,
        },
        BoolShare {
            bit: e1.results()[0],
            party: 1,
        },
    ))
}

/// B2A of a single pair-held bit (test and demo surface).
pub fn b2a_local(
    b: (BoolShare, BoolShare),
    bits: u32,
    t0: &mut DealerBatch,
    t1: &mut DealerBatch,
) -> Result<(ArithShare, ArithShare)> {
    let mut e0 = B2ABatch::new(0, bits, vec![b.0.bit]);
    let mut e1 = B2ABatch::new(1, bits, vec![b.1.bit]);
    run_engines_local(&mut e0, t0, &mut e1, t1)?;
    Ok((
        ArithShare::new(bits, e0.results()[0], 0),
        ArithShare::new(bits, e1.results()[0], 1),
    ))
}

/// Aggregate match decision: party 0 holds sum b0, party 1 holds sum b1 with
/// b0 + b1 = count mod 2^bits; the millionaire comparison of (-b0, b1) yields
/// mu-shares, party 0 reveals its share, and party 1 outputs
/// mu = 1{count > 0} (up to the count/2^bits wrap chance).
pub fn final_any_match_local(
    b0: u128,
    b1: u128,
    bits: u32,
    t0: &mut DealerBatch,
    t1: &mut DealerBatch,
) -> Result<bool> {
    let m = mask_bits(bits);
    let (mu0, mu1) = millionaire_lt_local(b0.wrapping_neg() & m, b1 & m, bits, t0, t1)?;
    Ok(mu0.bit ^ mu1.bit)
}
