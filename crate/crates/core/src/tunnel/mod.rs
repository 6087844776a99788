//! The encrypted datagram tunnel: wire codec, transport sessions, replay
//! protection and rekey policy.

pub mod batch;
pub mod replay;
pub mod session;
pub mod wire;

use std::collections::HashMap;

use rand::RngCore;
use thiserror::Error;

pub use batch::{open_batch, open_batch_sequential, seal_batch, seal_batch_sequential};
pub use replay::ReplayWindow;
pub use session::{
    maybe_rekey, session_recv, session_send, RekeyAction, RekeyPolicy, TransportSession,
    REJECT_AFTER_TIME, REKEY_AFTER_MESSAGES, REKEY_AFTER_TIME,
};
pub use wire::{decode_message, encode_message, DataMessage, MalformedMessage, Message};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TunnelError {
    #[error("transport datagram failed authentication")]
    AuthFailure,
    #[error("counter already seen or outside the replay window")]
    ReplayRejected,
    #[error("datagram addressed to another session")]
    WrongSession,
    #[error("session must be rekeyed before sending")]
    RekeyRequired,
    #[error("session is past its reject horizon")]
    SessionExpired,
    #[error("payload of {0} bytes does not fit in one datagram")]
    PayloadTooLarge(usize),
}

/// Sessions keyed by their random 32-bit local index.
///
/// The table has a single owner; callers that share it across threads wrap it
/// in a lock, giving concurrent lookups and serialized insert/remove.
#[derive(Debug)]
pub struct SessionTable<T> {
    entries: HashMap<u32, T>,
}

impl<T> Default for SessionTable<T> {
    fn default() -> Self {
        Self { entries: HashMap::new() }
    }
}

impl<T> SessionTable<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Draws a random index not currently in use.
    pub fn allocate_index<R: RngCore>(&self, rng: &mut R) -> u32 {
        loop {
            let idx = rng.next_u32();
            if !self.entries.contains_key(&idx) {
                return idx;
            }
        }
    }

    pub fn insert(&mut self, index: u32, value: T) -> Option<T> {
        self.entries.insert(index, value)
    }

    pub fn get(&self, index: u32) -> Option<&T> {
        self.entries.get(&index)
    }

    pub fn get_mut(&mut self, index: u32) -> Option<&mut T> {
        self.entries.get_mut(&index)
    }

    pub fn remove(&mut self, index: u32) -> Option<T> {
        self.entries.remove(&index)
    }

    pub fn contains(&self, index: u32) -> bool {
        self.entries.contains_key(&index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn retain(&mut self, f: impl FnMut(&u32, &mut T) -> bool) {
        self.entries.retain(f)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&u32, &T)> {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Yields a fixed sequence so collisions can be forced.
    struct Scripted(Vec<u32>);

    impl RngCore for Scripted {
        fn next_u32(&mut self) -> u32 {
            self.0.remove(0)
        }
        fn next_u64(&mut self) -> u64 {
            self.next_u32() as u64
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            dest.fill(0)
        }
        fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
            dest.fill(0);
            Ok(())
        }
    }

    #[test]
    fn index_allocation_skips_collisions() {
        let mut t = SessionTable::new();
        t.insert(5, ());
        t.insert(6, ());
        let mut rng = Scripted(vec![5, 6, 5, 9]);
        assert_eq!(t.allocate_index(&mut rng), 9);
    }
}
