//! Requests and responses exchanged between cores and memory controllers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::types::{Addr, CoreId, Word};

/// SC/SCwait success code (RISC-V convention).
pub const SC_SUCCESS: u8 = 0;
/// SC/SCwait failure code, also carried by `FailResp`.
pub const SC_FAILURE: u8 = 1;

/// What a queued core waits for once it reaches the head of a reservation queue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WaiterKind {
    LrWaiter,
    MWaiter { expected: Word },
}

impl WaiterKind {
    pub fn is_mwaiter(self) -> bool {
        matches!(self, WaiterKind::MWaiter { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    Load,
    Store,
    AmoAdd,
    LrReq,
    ScReq,
    LrWaitReq,
    ScWaitReq,
    MwaitReq,
    LrWaitResp,
    ScWaitResp,
    MwaitResp,
    LoadResp,
    StoreAck,
    AmoResp,
    SuccessorUpdate,
    WakeUpRequest,
    FailResp,
}

const ALL_KINDS: [MessageKind; 17] = [
    MessageKind::Load,
    MessageKind::Store,
    MessageKind::AmoAdd,
    MessageKind::LrReq,
    MessageKind::ScReq,
    MessageKind::LrWaitReq,
    MessageKind::ScWaitReq,
    MessageKind::MwaitReq,
    MessageKind::LrWaitResp,
    MessageKind::ScWaitResp,
    MessageKind::MwaitResp,
    MessageKind::LoadResp,
    MessageKind::StoreAck,
    MessageKind::AmoResp,
    MessageKind::SuccessorUpdate,
    MessageKind::WakeUpRequest,
    MessageKind::FailResp,
];

impl MessageKind {
    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Load => "Load",
            MessageKind::Store => "Store",
            MessageKind::AmoAdd => "AmoAdd",
            MessageKind::LrReq => "LrReq",
            MessageKind::ScReq => "ScReq",
            MessageKind::LrWaitReq => "LrWaitReq",
            MessageKind::ScWaitReq => "ScWaitReq",
            MessageKind::MwaitReq => "MwaitReq",
            MessageKind::LrWaitResp => "LrWaitResp",
            MessageKind::ScWaitResp => "ScWaitResp",
            MessageKind::MwaitResp => "MwaitResp",
            MessageKind::LoadResp => "LoadResp",
            MessageKind::StoreAck => "StoreAck",
            MessageKind::AmoResp => "AmoResp",
            MessageKind::SuccessorUpdate => "SuccessorUpdate",
            MessageKind::WakeUpRequest => "WakeUpRequest",
            MessageKind::FailResp => "FailResp",
        }
    }

    pub fn from_name(name: &str) -> Option<MessageKind> {
        ALL_KINDS.iter().copied().find(|k| k.name() == name)
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A memory-system message. The requesting core is always the channel
/// endpoint on the core side, so it is not repeated in the payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Message {
    Load { addr: Addr },
    Store { addr: Addr, value: Word },
    AmoAdd { addr: Addr, value: Word },
    LrReq { addr: Addr },
    ScReq { addr: Addr, value: Word },
    LrWaitReq { addr: Addr },
    ScWaitReq { addr: Addr, value: Word },
    MwaitReq { addr: Addr, expected: Word },
    LrWaitResp { addr: Addr, value: Word },
    ScWaitResp { addr: Addr, code: u8 },
    MwaitResp { addr: Addr, value: Word },
    LoadResp { addr: Addr, value: Word },
    StoreAck { addr: Addr },
    AmoResp { addr: Addr, value: Word },
    SuccessorUpdate { addr: Addr, successor: CoreId, waiter: WaiterKind },
    WakeUpRequest { addr: Addr, successor: CoreId, waiter: WaiterKind },
    FailResp { addr: Addr, code: u8 },
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Load { .. } => MessageKind::Load,
            Message::Store { .. } => MessageKind::Store,
            Message::AmoAdd { .. } => MessageKind::AmoAdd,
            Message::LrReq { .. } => MessageKind::LrReq,
            Message::ScReq { .. } => MessageKind::ScReq,
            Message::LrWaitReq { .. } => MessageKind::LrWaitReq,
            Message::ScWaitReq { .. } => MessageKind::ScWaitReq,
            Message::MwaitReq { .. } => MessageKind::MwaitReq,
            Message::LrWaitResp { .. } => MessageKind::LrWaitResp,
            Message::ScWaitResp { .. } => MessageKind::ScWaitResp,
            Message::MwaitResp { .. } => MessageKind::MwaitResp,
            Message::LoadResp { .. } => MessageKind::LoadResp,
            Message::StoreAck { .. } => MessageKind::StoreAck,
            Message::AmoResp { .. } => MessageKind::AmoResp,
            Message::SuccessorUpdate { .. } => MessageKind::SuccessorUpdate,
            Message::WakeUpRequest { .. } => MessageKind::WakeUpRequest,
            Message::FailResp { .. } => MessageKind::FailResp,
        }
    }

    pub fn addr(&self) -> Addr {
        match *self {
            Message::Load { addr }
            | Message::Store { addr, .. }
            | Message::AmoAdd { addr, .. }
            | Message::LrReq { addr }
            | Message::ScReq { addr, .. }
            | Message::LrWaitReq { addr }
            | Message::ScWaitReq { addr, .. }
            | Message::MwaitReq { addr, .. }
            | Message::LrWaitResp { addr, .. }
            | Message::ScWaitResp { addr, .. }
            | Message::MwaitResp { addr, .. }
            | Message::LoadResp { addr, .. }
            | Message::StoreAck { addr }
            | Message::AmoResp { addr, .. }
            | Message::SuccessorUpdate { addr, .. }
            | Message::WakeUpRequest { addr, .. }
            | Message::FailResp { addr, .. } => addr,
        }
    }

    /// True for messages travelling core → memory.
    pub fn is_request(&self) -> bool {
        matches!(
            self.kind(),
            MessageKind::Load
                | MessageKind::Store
                | MessageKind::AmoAdd
                | MessageKind::LrReq
                | MessageKind::ScReq
                | MessageKind::LrWaitReq
                | MessageKind::ScWaitReq
                | MessageKind::MwaitReq
                | MessageKind::WakeUpRequest
        )
    }

    /// Payload rendered as space-separated `key=value` pairs in a fixed order.
    pub fn fields(&self) -> String {
        let waiter = |w: &WaiterKind| match w {
            WaiterKind::LrWaiter => "waiter=lr".to_string(),
            WaiterKind::MWaiter { expected } => format!("waiter=m expected={expected}"),
        };
        match self {
            Message::Load { addr }
            | Message::LrReq { addr }
            | Message::LrWaitReq { addr }
            | Message::StoreAck { addr } => format!("addr={addr}"),
            Message::Store { addr, value }
            | Message::AmoAdd { addr, value }
            | Message::ScReq { addr, value }
            | Message::ScWaitReq { addr, value }
            | Message::LrWaitResp { addr, value }
            | Message::MwaitResp { addr, value }
            | Message::LoadResp { addr, value }
            | Message::AmoResp { addr, value } => format!("addr={addr} value={value}"),
            Message::MwaitReq { addr, expected } => format!("addr={addr} expected={expected}"),
            Message::ScWaitResp { addr, code } | Message::FailResp { addr, code } => {
                format!("addr={addr} code={code}")
            }
            Message::SuccessorUpdate { addr, successor, waiter: w }
            | Message::WakeUpRequest { addr, successor, waiter: w } => {
                format!("addr={addr} successor={successor} {}", waiter(w))
            }
        }
    }

    /// Inverse of [`Message::kind`] + [`Message::fields`].
    pub fn parse(kind: &str, fields: &str) -> Result<Message, MessageParseError> {
        let kind = MessageKind::from_name(kind)
            .ok_or_else(|| MessageParseError::UnknownKind(kind.to_string()))?;
        let map = parse_fields(fields)?;
        let get = |key: &'static str| -> Result<u32, MessageParseError> {
            map.get(key)
                .ok_or(MessageParseError::MissingField(key))?
                .parse::<u32>()
                .map_err(|_| MessageParseError::BadValue(key))
        };
        let addr = Addr(get("addr")?);
        let code = || get("code").map(|c| c as u8);
        let waiter = || -> Result<WaiterKind, MessageParseError> {
            match map.get("waiter").map(String::as_str) {
                Some("lr") => Ok(WaiterKind::LrWaiter),
                Some("m") => Ok(WaiterKind::MWaiter { expected: get("expected")? }),
                Some(_) => Err(MessageParseError::BadValue("waiter")),
                None => Err(MessageParseError::MissingField("waiter")),
            }
        };
        Ok(match kind {
            MessageKind::Load => Message::Load { addr },
            MessageKind::Store => Message::Store { addr, value: get("value")? },
            MessageKind::AmoAdd => Message::AmoAdd { addr, value: get("value")? },
            MessageKind::LrReq => Message::LrReq { addr },
            MessageKind::ScReq => Message::ScReq { addr, value: get("value")? },
            MessageKind::LrWaitReq => Message::LrWaitReq { addr },
            MessageKind::ScWaitReq => Message::ScWaitReq { addr, value: get("value")? },
            MessageKind::MwaitReq => Message::MwaitReq { addr, expected: get("expected")? },
            MessageKind::LrWaitResp => Message::LrWaitResp { addr, value: get("value")? },
            MessageKind::ScWaitResp => Message::ScWaitResp { addr, code: code()? },
            MessageKind::MwaitResp => Message::MwaitResp { addr, value: get("value")? },
            MessageKind::LoadResp => Message::LoadResp { addr, value: get("value")? },
            MessageKind::StoreAck => Message::StoreAck { addr },
            MessageKind::AmoResp => Message::AmoResp { addr, value: get("value")? },
            MessageKind::SuccessorUpdate => Message::SuccessorUpdate {
                addr,
                successor: CoreId(get("successor")?),
                waiter: waiter()?,
            },
            MessageKind::WakeUpRequest => Message::WakeUpRequest {
                addr,
                successor: CoreId(get("successor")?),
                waiter: waiter()?,
            },
            MessageKind::FailResp => Message::FailResp { addr, code: code()? },
        })
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind(), self.fields())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MessageParseError {
    #[error("unknown message kind `{0}`")]
    UnknownKind(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("bad value for field `{0}`")]
    BadValue(&'static str),
    #[error("malformed field `{0}` (expected key=value)")]
    Malformed(String),
}

/// Splits `k=v k2=v2` into a map.
pub fn parse_fields(fields: &str) -> Result<BTreeMap<String, String>, MessageParseError> {
    fields
        .split_whitespace()
        .map(|pair| {
            pair.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| MessageParseError::Malformed(pair.to_string()))
        })
        .collect()
}

impl FromStr for MessageKind {
    type Err = MessageParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MessageKind::from_name(s).ok_or_else(|| MessageParseError::UnknownKind(s.to_string()))
    }
}
