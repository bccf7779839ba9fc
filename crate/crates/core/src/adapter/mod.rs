//! Memory-bank front ends: plain memory with atomic add, single-slot LR/SC,
//! the ideal and bounded LRwait reservation queues, and the Colibri
//! controller. Each bank owns one adapter and serves one request per cycle.

mod cost;
mod lrsc;
mod waitqueue;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cost::{cost_model, CostScheme, StorageCost};
pub use lrsc::SingleReservation;
pub use waitqueue::WaitQueueAdapter;

use crate::colibri::ColibriController;
use crate::error::SimError;
use crate::message::{Message, WaiterKind};
use crate::sim::{Anomaly, AnomalyKind};
use crate::types::{Addr, BankId, CoreId, Cycle, Word};

/// Sparse word-addressed bank storage; absent words read as zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Memory(BTreeMap<Addr, Word>);

impl Memory {
    pub fn get(&self, addr: Addr) -> Word {
        self.0.get(&addr).copied().unwrap_or(0)
    }

    pub fn set(&mut self, addr: Addr, value: Word) {
        if value == 0 {
            self.0.remove(&addr);
        } else {
            self.0.insert(addr, value);
        }
    }

    /// Non-zero words in address order.
    pub fn iter(&self) -> impl Iterator<Item = (Addr, Word)> + '_ {
        self.0.iter().map(|(a, v)| (*a, *v))
    }
}

/// Which front end every bank of a system uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AdapterKind {
    /// Loads, stores and atomic add only.
    AmoOnly,
    /// Baseline LR/SC with a single reservation slot per bank.
    PlainLrSc,
    /// LRwait/SCwait with a queue able to hold every core.
    LrscWaitIdeal,
    /// LRwait/SCwait with `q` queue entries per address; full queues fail.
    LrscWaitBounded { q: u32 },
    /// Distributed reservation queue with head/tail registers for
    /// `addresses_per_bank` addresses per bank.
    Colibri { addresses_per_bank: u32 },
}

impl AdapterKind {
    pub fn supports_wait(self) -> bool {
        matches!(
            self,
            AdapterKind::LrscWaitIdeal | AdapterKind::LrscWaitBounded { .. } | AdapterKind::Colibri { .. }
        )
    }

    pub fn is_colibri(self) -> bool {
        matches!(self, AdapterKind::Colibri { .. })
    }

    /// Parameter warnings that do not prevent a run.
    pub fn warnings(self) -> Vec<String> {
        match self {
            AdapterKind::Colibri { addresses_per_bank } if ![1, 2, 4, 8].contains(&addresses_per_bank) => {
                vec![format!("colibri addresses_per_bank={addresses_per_bank} is outside {{1,2,4,8}}")]
            }
            _ => Vec::new(),
        }
    }

    pub fn validate(self) -> Result<(), SimError> {
        match self {
            AdapterKind::LrscWaitBounded { q: 0 } => Err(SimError::Config("bounded queue needs q >= 1".into())),
            AdapterKind::Colibri { addresses_per_bank: 0 } => {
                Err(SimError::Config("colibri needs addresses_per_bank >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Accepted but unusual settings.
    pub fn warning(self) -> Option<String> {
        match self {
            AdapterKind::Colibri { addresses_per_bank: a } if ![1, 2, 4, 8].contains(&a) => {
                Some(format!("colibri with {a} addresses per bank; the studied sizes are 1, 2, 4 and 8"))
            }
            _ => None,
        }
    }
}

impl fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdapterKind::AmoOnly => f.write_str("amo"),
            AdapterKind::PlainLrSc => f.write_str("lrsc"),
            AdapterKind::LrscWaitIdeal => f.write_str("ideal"),
            AdapterKind::LrscWaitBounded { q } => write!(f, "bounded:{q}"),
            AdapterKind::Colibri { addresses_per_bank } => write!(f, "colibri:{addresses_per_bank}"),
        }
    }
}

impl FromStr for AdapterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        let num = |default: Option<u32>| -> Result<u32, String> {
            match (param, default) {
                (Some(p), _) => p.parse().map_err(|_| format!("bad parameter in adapter `{s}`")),
                (None, Some(d)) => Ok(d),
                (None, None) => Err(format!("adapter `{s}` needs a parameter")),
            }
        };
        let kind = match name {
            "amo" => AdapterKind::AmoOnly,
            "lrsc" => AdapterKind::PlainLrSc,
            "ideal" => AdapterKind::LrscWaitIdeal,
            "bounded" => AdapterKind::LrscWaitBounded { q: num(None)? },
            "colibri" => AdapterKind::Colibri { addresses_per_bank: num(Some(1))? },
            _ => return Err(format!("unknown adapter `{s}`")),
        };
        if param.is_some() && matches!(kind, AdapterKind::AmoOnly | AdapterKind::PlainLrSc | AdapterKind::LrscWaitIdeal) {
            return Err(format!("adapter `{name}` takes no parameter"));
        }
        kind.validate().map_err(|e| e.to_string())?;
        Ok(kind)
    }
}

impl TryFrom<String> for AdapterKind {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AdapterKind> for String {
    fn from(k: AdapterKind) -> String {
        k.to_string()
    }
}

/// Deliberate protocol bugs, injected to show the verifier catches them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Mutation {
    /// QNodes ignore incoming SuccessorUpdates.
    DropSuccessorUpdate,
    /// Dequeuing a head with a successor leaves the head node valid.
    SkipHeadInvalidation,
    /// A WakeUpRequest promotes the queue tail instead of the named successor.
    WakeWrongSuccessor,
    /// A WakeUpRequest releases the successor's LRwait response twice.
    DoubleResponse,
    /// Plain stores leave LRwait reservations on the stored word intact.
    ForgetStoreInvalidation,
}

impl Mutation {
    pub const ALL: [Mutation; 5] = [
        Mutation::DropSuccessorUpdate,
        Mutation::SkipHeadInvalidation,
        Mutation::WakeWrongSuccessor,
        Mutation::DoubleResponse,
        Mutation::ForgetStoreInvalidation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mutation::DropSuccessorUpdate => "drop-successor-update",
            Mutation::SkipHeadInvalidation => "skip-head-invalidation",
            Mutation::WakeWrongSuccessor => "wake-wrong-successor",
            Mutation::DoubleResponse => "double-response",
            Mutation::ForgetStoreInvalidation => "forget-store-invalidation",
        }
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mutation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mutation::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mutation `{s}`"))
    }
}

impl TryFrom<String> for Mutation {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Mutation> for String {
    fn from(m: Mutation) -> String {
        m.name().to_string()
    }
}

/// Everything an adapter may touch while serving one request.
pub struct BankCtx<'a> {
    pub bank: BankId,
    pub now: Cycle,
    pub mem: &'a mut Memory,
    pub out: &'a mut Vec<(CoreId, Message)>,
    pub anomalies: &'a mut Vec<Anomaly>,
    pub mutation: Option<Mutation>,
}

impl BankCtx<'_> {
    pub fn reply(&mut self, core: CoreId, msg: Message) {
        self.out.push((core, msg));
    }

    pub fn anomaly(&mut self, kind: AnomalyKind) {
        self.anomalies.push(Anomaly { cycle: self.now, at: crate::types::Endpoint::Bank(self.bank), kind });
    }

    pub fn mutated(&self, m: Mutation) -> bool {
        self.mutation == Some(m)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Adapter {
    AmoOnly,
    LrSc(SingleReservation),
    WaitQueue(WaitQueueAdapter),
    Colibri(ColibriController),
}

impl Adapter {
    pub fn new(kind: AdapterKind) -> Adapter {
        match kind {
            AdapterKind::AmoOnly => Adapter::AmoOnly,
            AdapterKind::PlainLrSc => Adapter::LrSc(SingleReservation::default()),
            AdapterKind::LrscWaitIdeal => Adapter::WaitQueue(WaitQueueAdapter::new(None)),
            AdapterKind::LrscWaitBounded { q } => Adapter::WaitQueue(WaitQueueAdapter::new(Some(q as usize))),
            AdapterKind::Colibri { addresses_per_bank } => {
                Adapter::Colibri(ColibriController::new(addresses_per_bank as usize))
            }
        }
    }

    /// Serve one request from `core`. Responses are appended to `ctx.out`.
    pub fn serve(&mut self, core: CoreId, msg: &Message, ctx: &mut BankCtx<'_>) -> Result<(), SimError> {
        match *msg {
            Message::Load { addr } => {
                let value = ctx.mem.get(addr);
                ctx.reply(core, Message::LoadResp { addr, value });
            }
            Message::Store { addr, value } => {
                ctx.mem.set(addr, value);
                self.on_write(addr, true, ctx);
                ctx.reply(core, Message::StoreAck { addr });
            }
            Message::AmoAdd { addr, value } => {
                let old = ctx.mem.get(addr);
                ctx.mem.set(addr, old.wrapping_add(value));
                // A write even when `value` is zero.
                self.on_write(addr, false, ctx);
                ctx.reply(core, Message::AmoResp { addr, value: old });
            }
            Message::LrReq { addr } => match self {
                Adapter::LrSc(r) => r.handle_lr(core, addr, ctx),
                _ => return Err(self.unsupported(ctx, msg)),
            },
            Message::ScReq { addr, value } => match self {
                Adapter::LrSc(r) => r.handle_sc(core, addr, value, ctx),
                _ => return Err(self.unsupported(ctx, msg)),
            },
            Message::LrWaitReq { addr } => match self {
                Adapter::WaitQueue(q) => q.handle_wait(core, addr, WaiterKind::LrWaiter, ctx)?,
                Adapter::Colibri(c) => c.handle_wait(core, addr, WaiterKind::LrWaiter, ctx)?,
                _ => return Err(self.unsupported(ctx, msg)),
            },
            Message::MwaitReq { addr, expected } => match self {
                Adapter::WaitQueue(q) => q.handle_wait(core, addr, WaiterKind::MWaiter { expected }, ctx)?,
                Adapter::Colibri(c) => c.handle_wait(core, addr, WaiterKind::MWaiter { expected }, ctx)?,
                _ => return Err(self.unsupported(ctx, msg)),
            },
            Message::ScWaitReq { addr, value } => match self {
                Adapter::WaitQueue(q) => q.handle_scwait(core, addr, value, ctx),
                Adapter::Colibri(c) => c.handle_scwait(core, addr, value, ctx),
                _ => return Err(self.unsupported(ctx, msg)),
            },
            Message::WakeUpRequest { addr, successor, waiter } => match self {
                Adapter::Colibri(c) => c.handle_wakeup(addr, successor, waiter, ctx),
                _ => return Err(self.unsupported(ctx, msg)),
            },
            _ => return Err(self.unsupported(ctx, msg)),
        }
        Ok(())
    }

    fn unsupported(&self, ctx: &BankCtx<'_>, msg: &Message) -> SimError {
        SimError::Unsupported { bank: ctx.bank, kind: msg.kind() }
    }

    fn on_write(&mut self, addr: Addr, plain_store: bool, ctx: &mut BankCtx<'_>) {
        match self {
            Adapter::AmoOnly => {}
            Adapter::LrSc(r) => r.on_write(addr),
            Adapter::WaitQueue(q) => q.on_write(addr, plain_store, ctx),
            Adapter::Colibri(c) => c.on_write(addr, plain_store, ctx),
        }
    }
}
