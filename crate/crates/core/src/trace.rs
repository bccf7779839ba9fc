//! Line-oriented event log.
//!
//! Every line is `cycle,source,destination,kind,fields` with `fields` a
//! space-separated list of `key=value` pairs in a fixed order. Message lines
//! are written from the memory controller's point of view: a request at the
//! cycle the bank serves it, a response or SuccessorUpdate at the cycle the
//! bank emits it. Lines starting with `#` carry `key=value` header entries
//! (the resolved run configuration).

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::colibri::QNodePhase;
use crate::message::{parse_fields, Message, MessageParseError};
use crate::types::{Addr, BankId, CoreId, Cycle, Endpoint, Word};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceRecord {
    Message { cycle: Cycle, src: Endpoint, dst: Endpoint, msg: Message },
    QNode { cycle: Cycle, core: CoreId, phase: QNodePhase, successor: Option<CoreId> },
    Slot {
        cycle: Cycle,
        bank: BankId,
        addr: Addr,
        head: Option<CoreId>,
        tail: Option<CoreId>,
        head_valid: bool,
        reservation_valid: bool,
    },
    CoreDone { cycle: Cycle, core: CoreId, ops: u64, retries: u64, complete: bool },
    Final { cycle: Cycle, bank: BankId, addr: Addr, value: Word },
    Outcome { cycle: Cycle, result: String },
}

impl TraceRecord {
    pub fn cycle(&self) -> Cycle {
        match self {
            TraceRecord::Message { cycle, .. }
            | TraceRecord::QNode { cycle, .. }
            | TraceRecord::Slot { cycle, .. }
            | TraceRecord::CoreDone { cycle, .. }
            | TraceRecord::Final { cycle, .. }
            | TraceRecord::Outcome { cycle, .. } => *cycle,
        }
    }

    pub fn shifted(mut self, by: u64) -> TraceRecord {
        match &mut self {
            TraceRecord::Message { cycle, .. }
            | TraceRecord::QNode { cycle, .. }
            | TraceRecord::Slot { cycle, .. }
            | TraceRecord::CoreDone { cycle, .. }
            | TraceRecord::Final { cycle, .. }
            | TraceRecord::Outcome { cycle, .. } => *cycle = *cycle + by,
        }
        self
    }
}

fn opt_core(c: Option<CoreId>) -> String {
    c.map_or_else(|| "-".to_string(), |c| c.0.to_string())
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceRecord::Message { cycle, src, dst, msg } => {
                write!(f, "{cycle},{src},{dst},{},{}", msg.kind(), msg.fields())
            }
            TraceRecord::QNode { cycle, core, phase, successor } => {
                let ep = Endpoint::Core(*core);
                write!(
                    f,
                    "{cycle},{ep},{ep},QNodePhase,phase={} successor={}",
                    phase.name(),
                    opt_core(*successor)
                )
            }
            TraceRecord::Slot { cycle, bank, addr, head, tail, head_valid, reservation_valid } => {
                let ep = Endpoint::Bank(*bank);
                write!(
                    f,
                    "{cycle},{ep},{ep},SlotSnapshot,addr={addr} head={} tail={} head_valid={} reservation_valid={}",
                    opt_core(*head),
                    opt_core(*tail),
                    u8::from(*head_valid),
                    u8::from(*reservation_valid)
                )
            }
            TraceRecord::CoreDone { cycle, core, ops, retries, complete } => {
                let ep = Endpoint::Core(*core);
                write!(
                    f,
                    "{cycle},{ep},{ep},CoreDone,ops={ops} retries={retries} complete={}",
                    u8::from(*complete)
                )
            }
            TraceRecord::Final { cycle, bank, addr, value } => {
                let ep = Endpoint::Bank(*bank);
                write!(f, "{cycle},{ep},{ep},FinalMemory,addr={addr} value={value}")
            }
            TraceRecord::Outcome { cycle, result } => {
                write!(f, "{cycle},sim,sim,Outcome,result={result}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceParseError {
    #[error("line {line}: expected 5 comma-separated fields")]
    FieldCount { line: usize },
    #[error("line {line}: bad cycle `{text}`")]
    BadCycle { line: usize, text: String },
    #[error("line {line}: {source}")]
    Endpoint { line: usize, source: crate::types::ParseEndpointError },
    #[error("line {line}: {source}")]
    Message { line: usize, source: MessageParseError },
    #[error("line {line}: bad or missing `{field}`")]
    Field { line: usize, field: &'static str },
    #[error("line {line}: malformed header entry")]
    Header { line: usize },
}

/// A full trace: header entries plus records in emission order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub header: BTreeMap<String, String>,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn messages(&self) -> impl Iterator<Item = (Cycle, Endpoint, Endpoint, &Message)> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Message { cycle, src, dst, msg } => Some((*cycle, *src, *dst, msg)),
            _ => None,
        })
    }

    pub fn final_memory(&self) -> BTreeMap<Addr, Word> {
        self.records
            .iter()
            .filter_map(|r| match r {
                TraceRecord::Final { addr, value, .. } => Some((*addr, *value)),
                _ => None,
            })
            .collect()
    }

    pub fn outcome(&self) -> Option<&str> {
        self.records.iter().rev().find_map(|r| match r {
            TraceRecord::Outcome { result, .. } => Some(result.as_str()),
            _ => None,
        })
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = String::new();
        for (k, v) in &self.header {
            writeln!(buf, "# {k}={v}")?;
        }
        for r in &self.records {
            writeln!(buf, "{r}")?;
        }
        f.write_str(&buf)
    }
}

fn parse_flag(map: &BTreeMap<String, String>, key: &'static str, line: usize) -> Result<bool, TraceParseError> {
    match map.get(key).map(String::as_str) {
        Some("0") => Ok(false),
        Some("1") => Ok(true),
        _ => Err(TraceParseError::Field { line, field: key }),
    }
}

fn parse_num<T: FromStr>(
    map: &BTreeMap<String, String>,
    key: &'static str,
    line: usize,
) -> Result<T, TraceParseError> {
    map.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or(TraceParseError::Field { line, field: key })
}

fn parse_opt_core(
    map: &BTreeMap<String, String>,
    key: &'static str,
    line: usize,
) -> Result<Option<CoreId>, TraceParseError> {
    match map.get(key).map(String::as_str) {
        Some("-") => Ok(None),
        Some(v) => v.parse().map(|n| Some(CoreId(n))).map_err(|_| TraceParseError::Field { line, field: key }),
        None => Err(TraceParseError::Field { line, field: key }),
    }
}

fn parse_record(text: &str, line: usize) -> Result<TraceRecord, TraceParseError> {
    let parts: Vec<&str> = text.splitn(5, ',').collect();
    if parts.len() != 5 {
        return Err(TraceParseError::FieldCount { line });
    }
    let cycle = Cycle(
        parts[0]
            .parse()
            .map_err(|_| TraceParseError::BadCycle { line, text: parts[0].to_string() })?,
    );
    let kind = parts[3];
    let body = parts[4];
    if kind == "Outcome" {
        let map = parse_fields(body).map_err(|source| TraceParseError::Message { line, source })?;
        let result = map.get("result").cloned().ok_or(TraceParseError::Field { line, field: "result" })?;
        return Ok(TraceRecord::Outcome { cycle, result });
    }
    let ep = |s: &str| s.parse::<Endpoint>().map_err(|source| TraceParseError::Endpoint { line, source });
    let src = ep(parts[1])?;
    let dst = ep(parts[2])?;
    let fields = || parse_fields(body).map_err(|source| TraceParseError::Message { line, source });
    let core_of = |e: Endpoint, field| match e {
        Endpoint::Core(c) => Ok(c),
        Endpoint::Bank(_) => Err(TraceParseError::Field { line, field }),
    };
    let bank_of = |e: Endpoint, field| match e {
        Endpoint::Bank(b) => Ok(b),
        Endpoint::Core(_) => Err(TraceParseError::Field { line, field }),
    };
    Ok(match kind {
        "QNodePhase" => {
            let map = fields()?;
            let phase = map
                .get("phase")
                .and_then(|p| QNodePhase::from_name(p))
                .ok_or(TraceParseError::Field { line, field: "phase" })?;
            TraceRecord::QNode {
                cycle,
                core: core_of(src, "source")?,
                phase,
                successor: parse_opt_core(&map, "successor", line)?,
            }
        }
        "SlotSnapshot" => {
            let map = fields()?;
            TraceRecord::Slot {
                cycle,
                bank: bank_of(src, "source")?,
                addr: Addr(parse_num(&map, "addr", line)?),
                head: parse_opt_core(&map, "head", line)?,
                tail: parse_opt_core(&map, "tail", line)?,
                head_valid: parse_flag(&map, "head_valid", line)?,
                reservation_valid: parse_flag(&map, "reservation_valid", line)?,
            }
        }
        "CoreDone" => {
            let map = fields()?;
            TraceRecord::CoreDone {
                cycle,
                core: core_of(src, "source")?,
                ops: parse_num(&map, "ops", line)?,
                retries: parse_num(&map, "retries", line)?,
                complete: parse_flag(&map, "complete", line)?,
            }
        }
        "FinalMemory" => {
            let map = fields()?;
            TraceRecord::Final {
                cycle,
                bank: bank_of(src, "source")?,
                addr: Addr(parse_num(&map, "addr", line)?),
                value: parse_num(&map, "value", line)?,
            }
        }
        _ => TraceRecord::Message {
            cycle,
            src,
            dst,
            msg: Message::parse(kind, body).map_err(|source| TraceParseError::Message { line, source })?,
        },
    })
}

impl FromStr for Trace {
    type Err = TraceParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut trace = Trace::default();
        for (i, raw) in s.lines().enumerate() {
            let line = i + 1;
            let text = raw.trim();
            if text.is_empty() {
                continue;
            }
            if let Some(h) = text.strip_prefix('#') {
                let (k, v) = h.trim().split_once('=').ok_or(TraceParseError::Header { line })?;
                trace.header.insert(k.trim().to_string(), v.trim().to_string());
                continue;
            }
            trace.records.push(parse_record(text, line)?);
        }
        Ok(trace)
    }
}
