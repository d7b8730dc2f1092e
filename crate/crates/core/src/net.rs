//! Message framing, per-edge accounting and the two transports: an
//! in-process channel for deterministic simulation and a blocking TCP
//! request/response mode. Logical byte counts exclude framing so both
//! transports report identical numbers for identical sessions.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Instant;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Kg,
    Dp,
    Cs,
    Verifier,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Kg => "KG",
            Role::Dp => "DP",
            Role::Cs => "CS",
            Role::Verifier => "Verifier",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgKind {
    SetupRequest = 1,
    SwitchKeyDelivery = 2,
    IndicatorRequest = 3,
    IndicatorReply = 4,
    EnrollUpload = 5,
    QueryCiphertext = 6,
    MaskedDistances = 7,
    CmpRound = 8,
    B2ARound = 9,
    FinalBit = 10,
    DealerDelivery = 11,
}

impl MsgKind {
    pub fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => MsgKind::SetupRequest,
            2 => MsgKind::SwitchKeyDelivery,
            3 => MsgKind::IndicatorRequest,
            4 => MsgKind::IndicatorReply,
            5 => MsgKind::EnrollUpload,
            6 => MsgKind::QueryCiphertext,
            7 => MsgKind::MaskedDistances,
            8 => MsgKind::CmpRound,
            9 => MsgKind::B2ARound,
            10 => MsgKind::FinalBit,
            11 => MsgKind::DealerDelivery,
            _ => return Err(Error::Protocol(format!("unknown message kind {v}"))),
        })
    }
}

/// A protocol message: framed on the wire as {u32 length, u8 kind,
/// u64 session id, payload}.
#[derive(Clone, Debug)]
pub struct Message {
    pub kind: MsgKind,
    pub session: u64,
    pub from: Role,
    pub to: Role,
    pub payload: Vec<u8>,
    /// order within the run, assigned by the channel
    pub seq: u64,
}

impl Message {
    pub fn new(kind: MsgKind, session: u64, from: Role, to: Role, payload: Vec<u8>) -> Self {
        Self {
            kind,
            session,
            from,
            to,
            payload,
            seq: 0,
        }
    }

    pub fn frame(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.payload.len());
        out.extend_from_slice(&((1 + 8 + self.payload.len()) as u32).to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.session.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn read_frame<R: Read>(reader: &mut R, from: Role, to: Role) -> Result<Self> {
        let mut len_buf = [0u8; 4];
        reader.read_exact(&mut len_buf)?;
        let len = u32::from_le_bytes(len_buf) as usize;
        if len < 9 {
            return Err(Error::Protocol("short frame".into()));
        }
        let mut body = vec![0u8; len];
        reader.read_exact(&mut body)?;
        let kind = MsgKind::from_u8(body[0])?;
        let session = u64::from_le_bytes(body[1..9].try_into().unwrap());
        Ok(Message {
            kind,
            session,
            from,
            to,
            payload: body[9..].to_vec(),
            seq: 0,
        })
    }
}

/// Byte, message, HE-op and triple counters, split per phase mark.
#[derive(Clone, Debug, Default)]
pub struct NetStats {
    /// logical payload bytes per (from, to) edge
    pub bytes: BTreeMap<(Role, Role), u64>,
    pub messages: BTreeMap<(Role, Role), u64>,
    /// dealer (offline) bytes per edge, kept apart from the online counters
    pub offline_bytes: BTreeMap<(Role, Role), u64>,
    pub he_mults: u64,
    pub he_adds: u64,
    pub relins: u64,
    pub switchings: u64,
    pub encryptions: u64,
    pub bool_triples_used: u64,
    pub arith_triples_used: u64,
    /// wall-clock seconds per named phase
    pub phase_seconds: BTreeMap<String, f64>,
    /// per-phase byte deltas per edge
    pub phase_bytes: BTreeMap<String, BTreeMap<(Role, Role), u64>>,
}

impl NetStats {
    pub fn edge_bytes(&self, from: Role, to: Role) -> u64 {
        *self.bytes.get(&(from, to)).unwrap_or(&0)
    }
    pub fn total_bytes(&self) -> u64 {
        self.bytes.values().sum()
    }
    pub fn phase_edge_bytes(&self, phase: &str, from: Role, to: Role) -> u64 {
        self.phase_bytes
            .get(phase)
            .and_then(|m| m.get(&(from, to)))
            .copied()
            .unwrap_or(0)
    }

    fn add(&mut self, from: Role, to: Role, len: u64, offline: bool) {
        if offline {
            *self.offline_bytes.entry((from, to)).or_default() += len;
        } else {
            *self.bytes.entry((from, to)).or_default() += len;
        }
        *self.messages.entry((from, to)).or_default() += 1;
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for ((from, to), b) in &self.bytes {
            out.push_str(&format!(
                "{:>8} -> {:<8} {:>12} B\n",
                from.name(),
                to.name(),
                b
            ));
        }
        for ((from, to), b) in &self.offline_bytes {
            out.push_str(&format!(
                "{:>8} -> {:<8} {:>12} B (offline)\n",
                from.name(),
                to.name(),
                b
            ));
        }
        out.push_str(&format!(
            "he: {} mult, {} add, {} relin, {} switch, {} encrypt\n",
            self.he_mults, self.he_adds, self.relins, self.switchings, self.encryptions
        ));
        out.push_str(&format!(
            "triples: {} boolean, {} arithmetic\n",
            self.bool_triples_used, self.arith_triples_used
        ));
        for (phase, secs) in &self.phase_seconds {
            out.push_str(&format!("phase {phase}: {secs:.4}s\n"));
        }
        out
    }
}

/// Ordered record of the messages in one run, with a rolling digest for
/// replay comparison.
#[derive(Clone, Debug, Default)]
pub struct Transcript {
    pub entries: Vec<(MsgKind, Role, Role, usize)>,
    digest: u64,
}

impl Transcript {
    fn record(&mut self, msg: &Message) {
        self.entries
            .push((msg.kind, msg.from, msg.to, msg.payload.len()));
        let mut h = self.digest ^ 0xcbf29ce484222325;
        let mut eat = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        };
        eat(msg.kind as u8);
        for &b in &msg.payload {
            eat(b);
        }
        self.digest = h;
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// In-process channel: parties exchange messages through this hub, which
/// counts every payload and keeps the transcript.
#[derive(Debug, Default)]
pub struct Channel {
    pub stats: NetStats,
    pub transcript: Transcript,
    phase: Option<(String, Instant, BTreeMap<(Role, Role), u64>)>,
    next_seq: u64,
}

impl Channel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pass a message from one party to another, counting it.
    pub fn pass(&mut self, mut msg: Message) -> Message {
        msg.seq = self.next_seq;
        self.next_seq += 1;
        self.account(&msg, false);
        msg
    }

    /// Pass dealer material; counted as offline bytes.
    pub fn pass_offline(&mut self, mut msg: Message) -> Message {
        msg.seq = self.next_seq;
        self.next_seq += 1;
        self.account(&msg, true);
        msg
    }

    fn account(&mut self, msg: &Message, offline: bool) {
        self.stats
            .add(msg.from, msg.to, msg.payload.len() as u64, offline);
        self.transcript.record(msg);
    }

    /// Begin a named accounting phase; ends any phase in progress.
    pub fn mark_phase(&mut self, name: &str) {
        self.end_phase();
        self.phase = Some((name.to_string(), Instant::now(), self.stats.bytes.clone()));
    }

    pub fn end_phase(&mut self) {
        if let Some((name, start, before)) = self.phase.take() {
            *self.stats.phase_seconds.entry(name.clone()).or_default() +=
                start.elapsed().as_secs_f64();
            let mut delta = BTreeMap::new();
            for (edge, &b) in &self.stats.bytes {
                let prev = before.get(edge).copied().unwrap_or(0);
                if b > prev {
                    delta.insert(*edge, b - prev);
                }
            }
            let entry = self.stats.phase_bytes.entry(name).or_default();
            for (edge, b) in delta {
                *entry.entry(edge).or_default() += b;
            }
        }
    }
}

/// Blocking framed send over any writer, for the TCP transport.
pub fn send_framed<W: Write>(writer: &mut W, msg: &Message) -> Result<()> {
    writer.write_all(&msg.frame())?;
    Ok(())
}
