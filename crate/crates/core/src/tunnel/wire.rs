//! Bit-exact datagram layouts. Multi-byte integers are little-endian.
//!
//! ```text
//! Initiation (116 B): 0x01 | 000000 | sender_index(4) | ephemeral(32) | enc_static(48) | enc_timestamp(28)
//! Response    (60 B): 0x02 | 000000 | sender_index(4) | receiver_index(4) | ephemeral(32) | enc_empty(16)
//! Data    (32 + n B): 0x04 | 000000 | receiver_index(4) | counter(8) | ciphertext(n + 16)
//! ```
//!
//! Type 0x03 is reserved for a cookie reply and is never produced or accepted.
//! The layouts drop WireGuard's two 16-byte MAC fields, so an initiation is
//! 116 bytes rather than 148 and a response 60 rather than 92.

use thiserror::Error;

use crate::crypto::handshake::{ENCRYPTED_STATIC_LEN, ENCRYPTED_TIMESTAMP_LEN};
use crate::crypto::{InitiationMessage, PublicKey, ResponseMessage, TAG_LEN};

pub const MSG_INITIATION: u8 = 0x01;
pub const MSG_RESPONSE: u8 = 0x02;
pub const MSG_COOKIE_RESERVED: u8 = 0x03;
pub const MSG_DATA: u8 = 0x04;

pub const INITIATION_LEN: usize = 116;
pub const RESPONSE_LEN: usize = 60;
pub const DATA_HEADER_LEN: usize = 16;
/// Bytes a data datagram adds on top of its payload: header plus AEAD tag.
pub const DATA_OVERHEAD: usize = DATA_HEADER_LEN + TAG_LEN;
/// Largest UDP payload over IPv4.
pub const MAX_DATAGRAM: usize = 65_507;
pub const MAX_DATA_PAYLOAD: usize = MAX_DATAGRAM - DATA_OVERHEAD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MalformedMessage {
    #[error("empty datagram")]
    Empty,
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("reserved header bytes are not zero")]
    ReservedBits,
    #[error("wrong length {len} for message type {msg_type:#04x}")]
    BadLength { msg_type: u8, len: usize },
}

/// Transport data message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataMessage {
    pub receiver_index: u32,
    pub counter: u64,
    pub ciphertext: Vec<u8>,
}

impl DataMessage {
    pub fn wire_len(&self) -> usize {
        DATA_HEADER_LEN + self.ciphertext.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Initiation(InitiationMessage),
    Response(ResponseMessage),
    Data(DataMessage),
}

impl Message {
    pub fn encode(&self) -> Vec<u8> {
        encode_message(self)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, MalformedMessage> {
        decode_message(bytes)
    }

    pub fn type_byte(&self) -> u8 {
        match self {
            Message::Initiation(_) => MSG_INITIATION,
            Message::Response(_) => MSG_RESPONSE,
            Message::Data(_) => MSG_DATA,
        }
    }
}

impl From<InitiationMessage> for Message {
    fn from(m: InitiationMessage) -> Self {
        Message::Initiation(m)
    }
}

impl From<ResponseMessage> for Message {
    fn from(m: ResponseMessage) -> Self {
        Message::Response(m)
    }
}

impl From<DataMessage> for Message {
    fn from(m: DataMessage) -> Self {
        Message::Data(m)
    }
}

fn header(out: &mut Vec<u8>, ty: u8) {
    out.extend_from_slice(&[ty, 0, 0, 0]);
}

pub fn encode_message(msg: &Message) -> Vec<u8> {
    match msg {
        Message::Initiation(m) => {
            let mut out = Vec::with_capacity(INITIATION_LEN);
            header(&mut out, MSG_INITIATION);
            out.extend_from_slice(&m.sender_index.to_le_bytes());
            out.extend_from_slice(m.ephemeral.as_bytes());
            out.extend_from_slice(&m.encrypted_static);
            out.extend_from_slice(&m.encrypted_timestamp);
            debug_assert_eq!(out.len(), INITIATION_LEN);
            out
        }
        Message::Response(m) => {
            let mut out = Vec::with_capacity(RESPONSE_LEN);
            header(&mut out, MSG_RESPONSE);
            out.extend_from_slice(&m.sender_index.to_le_bytes());
            out.extend_from_slice(&m.receiver_index.to_le_bytes());
            out.extend_from_slice(m.ephemeral.as_bytes());
            out.extend_from_slice(&m.encrypted_empty);
            debug_assert_eq!(out.len(), RESPONSE_LEN);
            out
        }
        Message::Data(m) => {
            let mut out = Vec::with_capacity(m.wire_len());
            header(&mut out, MSG_DATA);
            out.extend_from_slice(&m.receiver_index.to_le_bytes());
            out.extend_from_slice(&m.counter.to_le_bytes());
            out.extend_from_slice(&m.ciphertext);
            out
        }
    }
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn arr<const N: usize>(b: &[u8], at: usize) -> [u8; N] {
    b[at..at + N].try_into().unwrap()
}

pub fn decode_message(bytes: &[u8]) -> Result<Message, MalformedMessage> {
    let ty = *bytes.first().ok_or(MalformedMessage::Empty)?;
    let expect = |ok: bool| {
        if ok {
            Ok(())
        } else {
            Err(MalformedMessage::BadLength { msg_type: ty, len: bytes.len() })
        }
    };
    match ty {
        MSG_INITIATION => expect(bytes.len() == INITIATION_LEN)?,
        MSG_RESPONSE => expect(bytes.len() == RESPONSE_LEN)?,
        MSG_DATA => expect(bytes.len() >= DATA_OVERHEAD && bytes.len() <= MAX_DATAGRAM)?,
        other => return Err(MalformedMessage::UnknownType(other)),
    }
    if bytes[1..4] != [0, 0, 0] {
        return Err(MalformedMessage::ReservedBits);
    }
    Ok(match ty {
        MSG_INITIATION => Message::Initiation(InitiationMessage {
            sender_index: u32_at(bytes, 4),
            ephemeral: PublicKey(arr(bytes, 8)),
            encrypted_static: arr::<ENCRYPTED_STATIC_LEN>(bytes, 40),
            encrypted_timestamp: arr::<ENCRYPTED_TIMESTAMP_LEN>(bytes, 88),
        }),
        MSG_RESPONSE => Message::Response(ResponseMessage {
            sender_index: u32_at(bytes, 4),
            receiver_index: u32_at(bytes, 8),
            ephemeral: PublicKey(arr(bytes, 12)),
            encrypted_empty: arr::<TAG_LEN>(bytes, 44),
        }),
        _ => Message::Data(DataMessage {
            receiver_index: u32_at(bytes, 4),
            counter: u64::from_le_bytes(arr(bytes, 8)),
            ciphertext: bytes[DATA_HEADER_LEN..].to_vec(),
        }),
    })
}
