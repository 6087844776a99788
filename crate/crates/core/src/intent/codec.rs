//! Canonical binary intent envelope. All integers little-endian.
//!
//! ```text
//! u8   version (1)
//! [16] id
//! u8   scope      (1 CSC, 2 CSP, 3 NOP)
//! u8   owner      (role code)
//! u8   handler    (role code)
//! u8   has_parent (0/1), then [16] parent id if 1
//! u8   state      (0 Received .. 5 Failed)
//! u64  created_at
//! u16  expectation count, then per expectation:
//!        u16 key len, key bytes (UTF-8)
//!        u16 value len, value bytes (UTF-8)
//!        u8  has_target (0/1), then f64 value, u16 unit len, unit bytes
//! ```
//!
//! Trailing bytes are rejected.

use super::{Expectation, Intent, IntentError, IntentId, IntentScope, LifecycleState, Target};
use crate::pki::StakeholderRole;

const VERSION: u8 = 1;

pub fn encode_intent(intent: &Intent) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    out.push(VERSION);
    out.extend_from_slice(&intent.id.0);
    out.push(intent.scope.code());
    out.push(intent.owner.code());
    out.push(intent.handler.code());
    match &intent.parent_id {
        Some(p) => {
            out.push(1);
            out.extend_from_slice(&p.0);
        }
        None => out.push(0),
    }
    out.push(intent.state.code());
    out.extend_from_slice(&intent.created_at.to_le_bytes());
    put_len(&mut out, intent.expectations.len());
    for e in &intent.expectations {
        put_str(&mut out, &e.key);
        put_str(&mut out, &e.value);
        match &e.target {
            Some(t) => {
                out.push(1);
                out.extend_from_slice(&t.value.to_le_bytes());
                put_str(&mut out, &t.unit);
            }
            None => out.push(0),
        }
    }
    out
}

fn put_len(out: &mut Vec<u8>, n: usize) {
    let n = u16::try_from(n).expect("intent field longer than 65535");
    out.extend_from_slice(&n.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_len(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IntentError> {
        if self.buf.len() < n {
            return Err(IntentError::MalformedEnvelope("truncated"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, IntentError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, IntentError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IntentError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn id(&mut self) -> Result<IntentId, IntentError> {
        Ok(IntentId(self.take(16)?.try_into().unwrap()))
    }

    fn flag(&mut self) -> Result<bool, IntentError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(IntentError::MalformedEnvelope("flag byte")),
        }
    }

    fn string(&mut self) -> Result<String, IntentError> {
        let n = self.u16()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| IntentError::MalformedEnvelope("invalid UTF-8"))
    }

    fn role(&mut self) -> Result<StakeholderRole, IntentError> {
        StakeholderRole::from_code(self.u8()?).ok_or(IntentError::MalformedEnvelope("role code"))
    }
}

pub fn decode_intent(bytes: &[u8]) -> Result<Intent, IntentError> {
    let mut r = Reader { buf: bytes };
    if r.u8()? != VERSION {
        return Err(IntentError::MalformedEnvelope("version"));
    }
    let id = r.id()?;
    let scope = IntentScope::from_code(r.u8()?).ok_or(IntentError::MalformedEnvelope("scope code"))?;
    let owner = r.role()?;
    let handler = r.role()?;
    let parent_id = if r.flag()? { Some(r.id()?) } else { None };
    let state = LifecycleState::from_code(r.u8()?).ok_or(IntentError::MalformedEnvelope("state code"))?;
    let created_at = r.u64()?;
    let count = r.u16()? as usize;
    let mut expectations = Vec::with_capacity(count.min(256));
    for _ in 0..count {
        let key = r.string()?;
        let value = r.string()?;
        let target = if r.flag()? {
            let v = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
            Some(Target { value: v, unit: r.string()? })
        } else {
            None
        };
        expectations.push(Expectation { key, value, target });
    }
    if !r.buf.is_empty() {
        return Err(IntentError::MalformedEnvelope("trailing bytes"));
    }
    let intent = Intent { id, scope, owner, handler, parent_id, expectations, state, created_at };
    intent.validate().map_err(|_| IntentError::MalformedEnvelope("scope/owner/handler/parent"))?;
    Ok(intent)
}
