//! Two-party secret sharing over Z_{2^l} and XOR-shared bits, with
//! dealer-generated Beaver triples.
//!
//! The trusted key generator doubles as the dealer: it hands each party one
//! half of every correlated triple before the online phase, so secure AND and
//! multiplication cost one masked-opening round each and no oblivious
//! transfer. Party 0 is the server, party 1 the verifier.

pub mod compare;

use rand::Rng;

use crate::error::{Error, Result};

pub type PartyId = u8;
pub const PARTY_CS: PartyId = 0;
pub const PARTY_VERIFIER: PartyId = 1;

/// An additive share of a value in Z_{2^bits}.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArithShare {
    pub bits: u32,
    pub value: u128,
    pub party: PartyId,
}

impl ArithShare {
    pub fn new(bits: u32, value: u128, party: PartyId) -> Self {
        debug_assert!(bits <= 128 && party <= 1);
        Self {
            bits,
            value: value & mask_bits(bits),
            party,
        }
    }
}

/// An XOR share of one bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoolShare {
    pub bit: bool,
    pub party: PartyId,
}

/// x = x_0 + x_1 mod 2^bits.
pub fn reconstruct_arith(s0: &ArithShare, s1: &ArithShare) -> u128 {
    debug_assert_eq!(s0.bits, s1.bits);
    debug_assert!(s0.party != s1.party);
    s0.value.wrapping_add(s1.value) & mask_bits(s0.bits)
}

/// x = x_0 ^ x_1.
pub fn reconstruct_bool(s0: &BoolShare, s1: &BoolShare) -> bool {
    s0.bit ^ s1.bit
}

/// Split a value into two additive shares, the first uniform.
pub fn share_arith<R: Rng>(bits: u32, value: u128, rng: &mut R) -> (ArithShare, ArithShare) {
    let m = mask_bits(bits);
    let r = ((rng.gen::<u64>() as u128) << 64 | rng.gen::<u64>() as u128) & m;
    (
        ArithShare {
            bits,
            value: r,
            party: 0,
        },
        ArithShare {
            bits,
            value: value.wrapping_sub(r) & m,
            party: 1,
        },
    )
}

pub fn share_bool<R: Rng>(bit: bool, rng: &mut R) -> (BoolShare, BoolShare) {
    let r = rng.gen::<bool>();
    (
        BoolShare { bit: r, party: 0 },
        BoolShare {
            bit: bit ^ r,
            party: 1,
        },
    )
}

#[inline]
pub fn mask_bits(bits: u32) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

/// One party's halves of a boolean Beaver triple c = a AND b.
#[derive(Clone, Copy, Debug, Default)]
pub struct BoolTriple {
    pub a: bool,
    pub b: bool,
    pub c: bool,
}

/// One party's halves of an arithmetic triple c = a*b mod 2^bits.
#[derive(Clone, Copy, Debug, Default)]
pub struct ArithTriple {
    pub a: u128,
    pub b: u128,
    pub c: u128,
}

/// Correlated randomness issued to one party, consumed front to back.
#[derive(Clone, Debug)]
pub struct DealerBatch {
    party: PartyId,
    arith_bits: u32,
    bool_triples: Vec<BoolTriple>,
    arith_triples: Vec<ArithTriple>,
    bool_used: usize,
    arith_used: usize,
}

impl DealerBatch {
    pub fn party(&self) -> PartyId {
        self.party
    }
    pub fn arith_bits(&self) -> u32 {
        self.arith_bits
    }
    pub fn bool_remaining(&self) -> usize {
        self.bool_triples.len() - self.bool_used
    }
    pub fn arith_remaining(&self) -> usize {
        self.arith_triples.len() - self.arith_used
    }
    pub fn bool_consumed(&self) -> usize {
        self.bool_used
    }
    pub fn arith_consumed(&self) -> usize {
        self.arith_used
    }

    pub fn take_bool(&mut self, n: usize) -> Result<&[BoolTriple]> {
        if self.bool_remaining() < n {
            return Err(Error::TripleExhausted("boolean triples"));
        }
        let start = self.bool_used;
        self.bool_used += n;
        Ok(&self.bool_triples[start..self.bool_used])
    }

    pub fn take_arith(&mut self, n: usize) -> Result<&[ArithTriple]> {
        if self.arith_remaining() < n {
            return Err(Error::TripleExhausted("arithmetic triples"));
        }
        let start = self.arith_used;
        self.arith_used += n;
        Ok(&self.arith_triples[start..self.arith_used])
    }

    /// Dealer file: {magic "CMDL", party, bits, counts, triple payload}.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"CMDL");
        out.push(self.party);
        out.push(self.arith_bits as u8);
        out.extend_from_slice(&(self.bool_remaining() as u64).to_le_bytes());
        out.extend_from_slice(&(self.arith_remaining() as u64).to_le_bytes());
        for t in &self.bool_triples[self.bool_used..] {
            out.push(t.a as u8 | (t.b as u8) << 1 | (t.c as u8) << 2);
        }
        let words = self.arith_bits.div_ceil(8) as usize;
        for t in &self.arith_triples[self.arith_used..] {
            out.extend_from_slice(&t.a.to_le_bytes()[..words]);
            out.extend_from_slice(&t.b.to_le_bytes()[..words]);
            out.extend_from_slice(&t.c.to_le_bytes()[..words]);
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 22 || &data[0..4] != b"CMDL" {
            return Err(Error::Serialization("bad dealer batch header".into()));
        }
        let party = data[4];
        let arith_bits = data[5] as u32;
        let nb = u64::from_le_bytes(data[6..14].try_into().unwrap()) as usize;
        let na = u64::from_le_bytes(data[14..22].try_into().unwrap()) as usize;
        let mut pos = 22;
        if data.len() < pos + nb {
            return Err(Error::Serialization("truncated boolean triples".into()));
        }
        let bool_triples = data[pos..pos + nb]
            .iter()
            .map(|&v| BoolTriple {
                a: v & 1 != 0,
                b: v & 2 != 0,
                c: v & 4 != 0,
            })
            .collect();
        pos += nb;
        let words = arith_bits.div_ceil(8) as usize;
        if data.len() != pos + na * 3 * words {
            return Err(Error::Serialization("truncated arithmetic triples".into()));
        }
        let mut arith_triples = Vec::with_capacity(na);
        let read = |pos: &mut usize| {
            let mut buf = [0u8; 16];
            buf[..words].copy_from_slice(&data[*pos..*pos + words]);
            *pos += words;
            u128::from_le_bytes(buf)
        };
        for _ in 0..na {
            let a = read(&mut pos);
            let b = read(&mut pos);
            let c = read(&mut pos);
            arith_triples.push(ArithTriple { a, b, c });
        }
        Ok(Self {
            party,
            arith_bits,
            bool_triples,
            arith_triples,
            bool_used: 0,
            arith_used: 0,
        })
    }
}

/// Triple demand for one result-revealing run over `m` shared distances.
#[derive(Clone, Copy, Debug)]
pub struct TripleBudget {
    pub bool_count: usize,
    pub arith_count: usize,
}

/// AND gates in one millionaire comparison over `bits` bits:
/// bits leaves plus two per combine, minus the unused root equality.
pub fn millionaire_and_count(bits: u32) -> usize {
    let b = bits as usize;
    if b <= 1 {
        return b;
    }
    b + 2 * (b - 1) - 1
}

impl TripleBudget {
    pub fn for_reveal(
        m: usize,
        share_bits: u32,
        aggregate_bits: u32,
        literal_comparison: bool,
    ) -> Self {
        let per_element = if literal_comparison {
            millionaire_and_count(share_bits)
        } else {
            // exact gadget: carry comparison over the low bits
            millionaire_and_count(share_bits - 1)
        };
        TripleBudget {
            bool_count: m * per_element + millionaire_and_count(aggregate_bits),
            arith_count: m,
        }
    }
}

/// Generate dealer batches for both parties: shares individually uniform,
/// every reconstructed triple satisfies its multiplicative relation.
pub fn deal<R: Rng>(
    budget: TripleBudget,
    arith_bits: u32,
    rng: &mut R,
) -> (DealerBatch, DealerBatch) {
    let m = mask_bits(arith_bits);
    let mut b0 = Vec::with_capacity(budget.bool_count);
    let mut b1 = Vec::with_capacity(budget.bool_count);
    for _ in 0..budget.bool_count {
        let a = rng.gen::<bool>();
        let b = rng.gen::<bool>();
        let c = a & b;
        let (a0, b0v, c0) = (rng.gen::<bool>(), rng.gen::<bool>(), rng.gen::<bool>());
        b0.push(BoolTriple {
            a: a0,
            b: b0v,
            c: c0,
        });
        b1.push(BoolTriple {
            a: a0 ^ a,
            b: b0v ^ b,
            c: c0 ^ c,
        });
    }
    let mut t0 = Vec::with_capacity(budget.arith_count);
    let mut t1 = Vec::with_capacity(budget.arith_count);
    let rand_ring = |rng: &mut R| ((rng.gen::<u64>() as u128) << 64 | rng.gen::<u64>() as u128) & m;
    for _ in 0..budget.arith_count {
        let a = rand_ring(rng);
        let b = rand_ring(rng);
        let c = a.wrapping_mul(b) & m;
        let a0 = rand_ring(rng);
        let b0v = rand_ring(rng);
        let c0 = rand_ring(rng);
        t0.push(ArithTriple {
            a: a0,
            b: b0v,
            c: c0,
        });
        t1.push(ArithTriple {
            a: a.wrapping_sub(a0) & m,
            b: b.wrapping_sub(b0v) & m,
            c: c.wrapping_sub(c0) & m,
        });
    }
    (
        DealerBatch {
            party: 0,
            arith_bits,
            bool_triples: b0,
            arith_triples: t0,
            bool_used: 0,
            arith_used: 0,
        },
        DealerBatch {
            party: 1,
            arith_bits,
            bool_triples: b1,
            arith_triples: t1,
            bool_used: 0,
            arith_used: 0,
        },
    )
}

pub(crate) fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

pub(crate) fn unpack_bits(data: &[u8], n: usize) -> Result<Vec<bool>> {
    if data.len() != n.div_ceil(8) {
        return Err(Error::Protocol(format!(
            "bit payload length {} for {n} bits",
            data.len()
        )));
    }
    Ok((0..n).map(|i| data[i / 8] & (1 << (i % 8)) != 0).collect())
}
