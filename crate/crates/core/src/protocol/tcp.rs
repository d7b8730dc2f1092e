//! Blocking TCP transport: one query session per connection, strict
//! request/response ordering identical to the in-process schedule, so both
//! transports move the same logical bytes for the same seed.

use std::net::{TcpListener, TcpStream};

use crate::encoding::QuantVector;
use crate::error::Result;
use crate::mpc::DealerBatch;
use crate::net::{send_framed, Message, MsgKind, NetStats, Role};

use super::{CloudServer, VerifierParty};

/// Accept one connection and serve a full query session; returns the
/// server-side accounting.
pub fn serve_query_session(
    listener: &TcpListener,
    cs: &mut CloudServer,
    triples: DealerBatch,
) -> Result<NetStats> {
    let (mut stream, _) = listener.accept()?;
    let mut stats = NetStats::default();

    let query = Message::read_frame(&mut stream, Role::Verifier, Role::Cs)?;
    count_in(&mut stats, &query);
    let (d0, response) = cs.answer_query(&query.payload, &mut stats)?;
    send_counted(
        &mut stream,
        &mut stats,
        Message::new(
            MsgKind::MaskedDistances,
            query.session,
            Role::Cs,
            Role::Verifier,
            response,
        ),
    )?;

    let mut side = cs.start_reveal(d0, triples);
    loop {
        let (kind, payload) = side.emit()?;
        send_counted(
            &mut stream,
            &mut stats,
            Message::new(kind, query.session, Role::Cs, Role::Verifier, payload),
        )?;
        let reply = Message::read_frame(&mut stream, Role::Verifier, Role::Cs)?;
        count_in(&mut stats, &reply);
        if side.absorb(&reply.payload)? {
            break;
        }
    }
    let mu0 = side.mu_share().unwrap();
    send_counted(
        &mut stream,
        &mut stats,
        Message::new(
            MsgKind::FinalBit,
            query.session,
            Role::Cs,
            Role::Verifier,
            vec![mu0 as u8],
        ),
    )?;
    let (b, a) = side.triples_consumed();
    stats.bool_triples_used += b as u64;
    stats.arith_triples_used += a as u64;
    Ok(stats)
}

/// Connect and run one query session as the verifier; `m` is the public
/// database size. Returns the output bit and client-side accounting.
pub fn run_query_client(
    addr: &str,
    verifier: &mut VerifierParty,
    query: &QuantVector,
    threshold: i64,
    m: usize,
    switched: bool,
    triples: DealerBatch,
) -> Result<(bool, NetStats)> {
    let mut stream = TcpStream::connect(addr)?;
    let mut stats = NetStats::default();
    let session = 1u64;

    let payload = verifier.make_query(query, switched, &mut stats)?;
    send_counted(
        &mut stream,
        &mut stats,
        Message::new(
            MsgKind::QueryCiphertext,
            session,
            Role::Verifier,
            Role::Cs,
            payload,
        ),
    )?;
    let distances = Message::read_frame(&mut stream, Role::Cs, Role::Verifier)?;
    count_in(&mut stats, &distances);
    let d1 = verifier.receive_distances(&distances.payload, m)?;

    let mut side = verifier.start_reveal(d1, threshold, triples);
    loop {
        let incoming = Message::read_frame(&mut stream, Role::Cs, Role::Verifier)?;
        count_in(&mut stats, &incoming);
        let (kind, reply) = side.emit()?;
        send_counted(
            &mut stream,
            &mut stats,
            Message::new(kind, session, Role::Verifier, Role::Cs, reply),
        )?;
        if side.absorb(&incoming.payload)? {
            break;
        }
    }
    let final_bit = Message::read_frame(&mut stream, Role::Cs, Role::Verifier)?;
    count_in(&mut stats, &final_bit);
    let mu = (final_bit.payload[0] != 0) ^ side.mu_share().unwrap();
    Ok((mu, stats))
}

fn count_in(stats: &mut NetStats, msg: &Message) {
    *stats.bytes.entry((msg.from, msg.to)).or_default() += msg.payload.len() as u64;
    *stats.messages.entry((msg.from, msg.to)).or_default() += 1;
}

fn send_counted(stream: &mut TcpStream, stats: &mut NetStats, msg: Message) -> Result<()> {
    *stats.bytes.entry((msg.from, msg.to)).or_default() += msg.payload.len() as u64;
    *stats.messages.entry((msg.from, msg.to)).or_default() += 1;
    send_framed(stream, &msg)
}
