//! Application frames carried inside transport payloads between peers and
//! the controller. An empty transport payload is a keepalive and never
//! reaches this layer.
//!
//! ```text
//! envelope: u8 1 | u32 seq | u8 op | body
//!   op 1 submit / 2 deliver: body = canonical intent encoding
//!   op 3 report: [16] intent id | u8 state | u16 n | n × (u16 len, key, f64)
//! ack:      u8 2 | u32 seq | u8 status
//! ```

use thiserror::Error;

use crate::intent::{decode_intent, encode_intent, Intent, IntentError, IntentId, LifecycleState};

const KIND_ENVELOPE: u8 = 1;
const KIND_ACK: u8 = 2;
const OP_SUBMIT: u8 = 1;
const OP_DELIVER: u8 = 2;
const OP_REPORT: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("truncated frame")]
    Truncated,
    #[error("unknown frame kind {0}")]
    UnknownKind(u8),
    #[error("unknown operation {0}")]
    UnknownOp(u8),
    #[error("unknown ack status {0}")]
    UnknownStatus(u8),
    #[error("bad intent body: {0}")]
    Intent(#[from] IntentError),
    #[error("trailing bytes")]
    Trailing,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    /// Owner hands a new intent to the controller.
    Submit(Intent),
    /// Controller hands an intent to its handler.
    Deliver(Intent),
    /// Handler reports progress on an intent it handles.
    Report { intent_id: IntentId, state: LifecycleState, metrics: Vec<(String, f64)> },
}

/// Outcome the receiver reports back for an envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AckStatus {
    Accepted,
    /// Accepted; the handler has no session yet so delivery is pending.
    Parked,
    OwnerSpoof,
    UnknownIntent,
    UnauthorizedReporter,
    IllegalTransition,
    Malformed,
}

impl AckStatus {
    const ALL: [AckStatus; 7] = [
        Self::Accepted,
        Self::Parked,
        Self::OwnerSpoof,
        Self::UnknownIntent,
        Self::UnauthorizedReporter,
        Self::IllegalTransition,
        Self::Malformed,
    ];

    fn code(self) -> u8 {
        self as u8
    }

    pub fn is_success(self) -> bool {
        matches!(self, Self::Accepted | Self::Parked)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Envelope { seq: u32, op: Op },
    Ack { seq: u32, status: AckStatus },
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        match self {
            Frame::Envelope { seq, op } => {
                out.push(KIND_ENVELOPE);
                out.extend_from_slice(&seq.to_le_bytes());
                match op {
                    Op::Submit(i) | Op::Deliver(i) => {
                        out.push(if matches!(op, Op::Submit(_)) { OP_SUBMIT } else { OP_DELIVER });
                        out.extend_from_slice(&encode_intent(i));
                    }
                    Op::Report { intent_id, state, metrics } => {
                        out.push(OP_REPORT);
                        out.extend_from_slice(&intent_id.0);
                        out.push(*state as u8);
                        out.extend_from_slice(&(metrics.len() as u16).to_le_bytes());
                        for (k, v) in metrics {
                            out.extend_from_slice(&(k.len() as u16).to_le_bytes());
                            out.extend_from_slice(k.as_bytes());
                            out.extend_from_slice(&v.to_le_bytes());
                        }
                    }
                }
            }
            Frame::Ack { seq, status } => {
                out.push(KIND_ACK);
                out.extend_from_slice(&seq.to_le_bytes());
                out.push(status.code());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < 5 {
            return Err(FrameError::Truncated);
        }
        let seq = u32::from_le_bytes(bytes[1..5].try_into().unwrap());
        let rest = &bytes[5..];
        match bytes[0] {
            KIND_ACK => {
                let (&code, tail) = rest.split_first().ok_or(FrameError::Truncated)?;
                if !tail.is_empty() {
                    return Err(FrameError::Trailing);
                }
                let status = AckStatus::ALL.get(code as usize).copied().ok_or(FrameError::UnknownStatus(code))?;
                Ok(Frame::Ack { seq, status })
            }
            KIND_ENVELOPE => {
                let (&op, body) = rest.split_first().ok_or(FrameError::Truncated)?;
                let op = match op {
                    OP_SUBMIT => Op::Submit(decode_intent(body)?),
                    OP_DELIVER => Op::Deliver(decode_intent(body)?),
                    OP_REPORT => decode_report(body)?,
                    other => return Err(FrameError::UnknownOp(other)),
                };
                Ok(Frame::Envelope { seq, op })
            }
            other => Err(FrameError::UnknownKind(other)),
        }
    }
}

fn decode_report(body: &[u8]) -> Result<Op, FrameError> {
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8], FrameError> {
        let s = body.get(at..at + n).ok_or(FrameError::Truncated)?;
        at += n;
        Ok(s)
    };
    let intent_id = IntentId(take(16)?.try_into().unwrap());
    let code = take(1)?[0];
    let state = LifecycleState::ALL
        .get(code as usize)
        .copied()
        .ok_or(FrameError::Intent(IntentError::MalformedEnvelope("state code")))?;
    let n = u16::from_le_bytes(take(2)?.try_into().unwrap());
    let mut metrics = Vec::with_capacity(n.min(64) as usize);
    for _ in 0..n {
        let klen = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let key = String::from_utf8(take(klen)?.to_vec())
            .map_err(|_| FrameError::Intent(IntentError::MalformedEnvelope("metric name")))?;
        let v = f64::from_le_bytes(take(8)?.try_into().unwrap());
        metrics.push((key, v));
    }
    if at != body.len() {
        return Err(FrameError::Trailing);
    }
    Ok(Op::Report { intent_id, state, metrics })
}
