//! Batched seal/open for one session.
//!
//! Counter assignment and replay-window updates stay sequential; the AEAD
//! work in between is independent per datagram and runs on the rayon pool
//! when the `parallel` feature is enabled.

use std::time::Instant;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::session::TransportSession;
use super::wire::DataMessage;
use super::TunnelError;

/// Seals every payload under consecutive counters.
pub fn seal_batch(
    session: &mut TransportSession,
    payloads: &[Vec<u8>],
    now: Instant,
) -> Result<Vec<DataMessage>, TunnelError> {
    let first = session.reserve_counters(payloads.len() as u64, now)?;
    let session = &*session;
    #[cfg(feature = "parallel")]
    let iter = payloads.par_iter().enumerate();
    #[cfg(not(feature = "parallel"))]
    let iter = payloads.iter().enumerate();
    iter.map(|(i, p)| session.seal_at(first + i as u64, p)).collect()
}

pub fn seal_batch_sequential(
    session: &mut TransportSession,
    payloads: &[Vec<u8>],
    now: Instant,
) -> Result<Vec<DataMessage>, TunnelError> {
    let first = session.reserve_counters(payloads.len() as u64, now)?;
    payloads.iter().enumerate().map(|(i, p)| session.seal_at(first + i as u64, p)).collect()
}

fn commit_all(
    session: &mut TransportSession,
    msgs: &[DataMessage],
    opened: Vec<Result<Vec<u8>, TunnelError>>,
) -> Vec<Result<Vec<u8>, TunnelError>> {
    opened
        .into_iter()
        .zip(msgs)
        .map(|(r, m)| r.and_then(|p| session.commit(m.counter).map(|()| p)))
        .collect()
}

/// Opens a batch in arrival order. Results line up with `msgs`; a duplicate
/// inside the batch is rejected just as it would be across batches.
pub fn open_batch(
    session: &mut TransportSession,
    msgs: &[DataMessage],
    now: Instant,
) -> Vec<Result<Vec<u8>, TunnelError>> {
    let opened: Vec<_> = {
        let s = &*session;
        let open = |m: &DataMessage| s.precheck(m, now).and_then(|()| s.open_only(m));
        #[cfg(feature = "parallel")]
        {
            msgs.par_iter().map(open).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            msgs.iter().map(open).collect()
        }
    };
    commit_all(session, msgs, opened)
}

pub fn open_batch_sequential(
    session: &mut TransportSession,
    msgs: &[DataMessage],
    now: Instant,
) -> Vec<Result<Vec<u8>, TunnelError>> {
    let opened: Vec<_> = {
        let s = &*session;
        msgs.iter().map(|m| s.precheck(m, now).and_then(|()| s.open_only(m))).collect()
    };
    commit_all(session, msgs, opened)
}
