//! Core programs as resumable state machines.
//!
//! A program is stepped with a [`Resume`] (start, a response to its last
//! request, or a timer) and answers with the next [`Action`]. Every request
//! blocks the core until its response arrives.

mod bins;
mod locks;
mod queue;
mod rmw;

pub use bins::BinPicker;
pub use locks::{Lock, LockKind};
pub use queue::{QueueImpl, QueueOps, EMPTY};
pub use rmw::{queue_head, queue_tail, Rmw, RmwFlavor, RmwFn, RmwResult, Step};

use crate::message::Message;
use crate::types::{Addr, CoreId, Word};

/// Fixed address map. Region bases are multiples of every supported bank
/// count, so region offset `i` always lands on bank `i mod n_banks`.
pub mod layout {
    use crate::types::{Addr, CoreId, Word};

    pub const BINS: Addr = Addr(0);
    pub const LOCKS: Addr = Addr(1 << 20);
    pub const MCS_NODES: Addr = Addr(2 << 20);
    pub const QUEUE_CTL: Addr = Addr(3 << 20);
    pub const QUEUE_LOCK: Addr = Addr((3 << 20) + 1);
    pub const QUEUE_SLOTS: Addr = Addr((3 << 20) + 2);
    pub const WORKER: Addr = Addr(4 << 20);

    pub fn mcs_next(c: CoreId) -> Addr {
        MCS_NODES.offset(2 * c.0)
    }

    pub fn mcs_locked(c: CoreId) -> Addr {
        MCS_NODES.offset(2 * c.0 + 1)
    }

    /// Slot `index` of the benchmark queue. Slots never share a bank with
    /// `QUEUE_CTL`, so a popper sleeping on a slot cannot take the control
    /// word's reservation slot.
    pub fn queue_slot(index: Word, n_banks: usize) -> Addr {
        let b = n_banks as u32;
        if b <= 1 {
            return QUEUE_SLOTS.offset(index);
        }
        let start = QUEUE_SLOTS.offset(index / (b - 1) * b);
        let col = index % (b - 1);
        let skip = (QUEUE_CTL.0 % b + b - start.0 % b) % b;
        start.offset(col + (col >= skip) as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Resume {
    Start,
    Reply(Message),
    Timer,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    Issue(Message),
    /// Compute; `Delay(0)` resumes in the same cycle.
    Delay(u64),
    /// Wait after a failed attempt. The machine may add jitter.
    Backoff(u64),
    /// `complete` is false when the program abandoned part of its quota.
    Finished { complete: bool },
}

/// Counters a step reports back to its core.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Io {
    pub ops: u64,
    pub retries: u64,
}

/// One operation of a scripted verification program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScriptOp {
    /// Atomic increment with the script's RMW flavor.
    Inc(Addr),
    Store(Addr, Word),
    Load(Addr),
    Amo(Addr, Word),
    Mwait(Addr, Word),
}

impl TryFrom<String> for ScriptOp {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ScriptOp> for String {
    fn from(op: ScriptOp) -> String {
        op.to_string()
    }
}

impl std::fmt::Display for ScriptOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScriptOp::Inc(a) => write!(f, "inc {a}"),
            ScriptOp::Store(a, v) => write!(f, "store {a} {v}"),
            ScriptOp::Load(a) => write!(f, "load {a}"),
            ScriptOp::Amo(a, v) => write!(f, "amo {a} {v}"),
            ScriptOp::Mwait(a, e) => write!(f, "mwait {a} {e}"),
        }
    }
}

impl std::str::FromStr for ScriptOp {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let num = |i: usize| -> Result<u32, String> {
            parts.get(i).ok_or_else(|| format!("`{s}`: missing operand"))?.parse().map_err(|_| format!("`{s}`: bad number"))
        };
        let op = match parts.first().copied() {
            Some("inc") if parts.len() == 2 => ScriptOp::Inc(Addr(num(1)?)),
            Some("load") if parts.len() == 2 => ScriptOp::Load(Addr(num(1)?)),
            Some("store") if parts.len() == 3 => ScriptOp::Store(Addr(num(1)?), num(2)?),
            Some("amo") if parts.len() == 3 => ScriptOp::Amo(Addr(num(1)?), num(2)?),
            Some("mwait") if parts.len() == 3 => ScriptOp::Mwait(Addr(num(1)?), num(2)?),
            _ => return Err(format!("unknown script op `{s}`")),
        };
        Ok(op)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum ScriptState {
    Start,
    Running,
    Rmw(Rmw),
    Simple,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Script {
    ops: Vec<ScriptOp>,
    pc: usize,
    flavor: RmwFlavor,
    modify: u64,
    start: u64,
    complete: bool,
    state: ScriptState,
}

impl Script {
    pub fn new(ops: Vec<ScriptOp>, flavor: RmwFlavor, start: u64, modify: u64) -> Self {
        Script { ops, pc: 0, flavor, modify, start, complete: true, state: ScriptState::Start }
    }

    fn next_op(&mut self, io: &mut Io) -> Action {
        let Some(&op) = self.ops.get(self.pc) else {
            return Action::Finished { complete: self.complete };
        };
        self.state = ScriptState::Simple;
        let msg = match op {
            ScriptOp::Inc(addr) => {
                let rmw = Rmw::new(self.flavor, RmwFn::Add(1), addr, self.modify);
                return self.drive(rmw, Resume::Start, io);
            }
            ScriptOp::Store(addr, value) => Message::Store { addr, value },
            ScriptOp::Load(addr) => Message::Load { addr },
            ScriptOp::Amo(addr, value) => Message::AmoAdd { addr, value },
            ScriptOp::Mwait(addr, expected) => Message::MwaitReq { addr, expected },
        };
        Action::Issue(msg)
    }

    fn advance(&mut self, io: &mut Io) -> Action {
        self.pc += 1;
        io.ops += 1;
        self.next_op(io)
    }

    fn drive(&mut self, mut rmw: Rmw, resume: Resume, io: &mut Io) -> Action {
        match rmw.step(resume, io) {
            Step::Act(a) => {
                self.state = ScriptState::Rmw(rmw);
                a
            }
            Step::Done(RmwResult::Done { .. }) => self.advance(io),
            Step::Done(RmwResult::GaveUp) => {
                self.complete = false;
                self.pc += 1;
                self.next_op(io)
            }
        }
    }

    pub fn step(&mut self, resume: Resume, io: &mut Io) -> Action {
        match (std::mem::replace(&mut self.state, ScriptState::Running), resume) {
            (ScriptState::Start, _) if self.start > 0 => Action::Delay(self.start),
            (ScriptState::Start | ScriptState::Running, _) => self.next_op(io),
            (ScriptState::Rmw(rmw), r) => self.drive(rmw, r, io),
            (ScriptState::Simple, Resume::Reply(Message::FailResp { .. })) => {
                // Slot exhaustion on an Mwait: retry the same op.
                io.retries += 1;
                self.next_op(io)
            }
            (ScriptState::Simple, _) => self.advance(io),
        }
    }
}

/// Histogram kernel: `iterations` increments of uniformly chosen bins.
/// `iterations = None` runs forever (interference pollers).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RmwLoop {
    flavor: RmwFlavor,
    bins: BinPicker,
    iterations: Option<u64>,
    compute: u64,
    done: u64,
    current: Option<Rmw>,
}

impl RmwLoop {
    pub fn new(flavor: RmwFlavor, bins: BinPicker, iterations: Option<u64>, compute: u64) -> Self {
        RmwLoop { flavor, bins, iterations, compute, done: 0, current: None }
    }

    pub fn step(&mut self, resume: Resume, io: &mut Io) -> Action {
        let (mut rmw, resume) = match self.current.take() {
            Some(rmw) => (rmw, resume),
            None => {
                if Some(self.done) == self.iterations {
                    return Action::Finished { complete: true };
                }
                (Rmw::new(self.flavor, RmwFn::Add(1), self.bins.pick(), self.compute), Resume::Start)
            }
        };
        match rmw.step(resume, io) {
            Step::Act(a) => {
                self.current = Some(rmw);
                a
            }
            Step::Done(RmwResult::Done { .. }) => {
                self.done += 1;
                io.ops += 1;
                self.step(Resume::Start, io)
            }
            Step::Done(RmwResult::GaveUp) => unreachable!("histogram RMWs retry forever"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum CsState {
    Next,
    Acquire,
    Load,
    Compute { value: Word },
    Store,
    Release,
}

/// Lock-protected histogram: acquire the bin's lock, load, compute, store,
/// release.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LockedCs {
    lock: Lock,
    bins: BinPicker,
    iterations: u64,
    cs_length: u64,
    done: u64,
    bin: Addr,
    state: CsState,
}

impl LockedCs {
    pub fn new(kind: LockKind, backoff: u64, me: CoreId, bins: BinPicker, iterations: u64, cs_length: u64) -> Self {
        LockedCs {
            lock: Lock::new(kind, layout::LOCKS, backoff, me),
            bins,
            iterations,
            cs_length,
            done: 0,
            bin: layout::BINS,
            state: CsState::Next,
        }
    }

    fn lock_addr(&self) -> Addr {
        layout::LOCKS.offset(self.bin.0 - layout::BINS.0)
    }

    pub fn step(&mut self, resume: Resume, io: &mut Io) -> Action {
        match (std::mem::replace(&mut self.state, CsState::Next), resume) {
            (CsState::Next, _) => {
                if self.done == self.iterations {
                    return Action::Finished { complete: true };
                }
                self.bin = self.bins.pick();
                self.lock.acquire(self.lock_addr());
                self.state = CsState::Acquire;
                self.step(Resume::Start, io)
            }
            (CsState::Acquire, r) => match self.lock.step(r, io) {
                Step::Act(a) => {
                    self.state = CsState::Acquire;
                    a
                }
                Step::Done(()) => {
                    self.state = CsState::Load;
                    Action::Issue(Message::Load { addr: self.bin })
                }
            },
            (CsState::Load, Resume::Reply(Message::LoadResp { value, .. })) => {
                self.state = CsState::Compute { value };
                Action::Delay(self.cs_length)
            }
            (CsState::Compute { value }, _) => {
                self.state = CsState::Store;
                Action::Issue(Message::Store { addr: self.bin, value: value + 1 })
            }
            (CsState::Store, Resume::Reply(_)) => {
                self.lock.release();
                self.state = CsState::Release;
                self.step(Resume::Start, io)
            }
            (CsState::Release, r) => match self.lock.step(r, io) {
                Step::Act(a) => {
                    self.state = CsState::Release;
                    a
                }
                Step::Done(()) => {
                    self.done += 1;
                    io.ops += 1;
                    self.step(Resume::Start, io)
                }
            },
            (state, resume) => panic!("locked cs: unexpected {resume:?} in {state:?}"),
        }
    }
}

/// Blocking strided load/store stream, standing in for compute-kernel
/// traffic. Every fourth access is a store.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Worker {
    accesses: u64,
    done: u64,
    stride: u32,
    span: u32,
    offset: u32,
    compute: u64,
    waiting: bool,
}

impl Worker {
    /// `span` words starting at the worker region, visited with `stride`
    /// beginning at `offset`.
    pub fn new(accesses: u64, stride: u32, span: u32, offset: u32, compute: u64) -> Self {
        Worker { accesses, done: 0, stride, span: span.max(1), offset, compute, waiting: false }
    }

    pub fn step(&mut self, resume: Resume, io: &mut Io) -> Action {
        if matches!(resume, Resume::Reply(_)) {
            self.done += 1;
            io.ops += 1;
            if self.compute > 0 && !self.waiting {
                self.waiting = true;
                return Action::Delay(self.compute);
            }
        }
        self.waiting = false;
        if self.done == self.accesses {
            return Action::Finished { complete: true };
        }
        let i = self.done as u32;
        let addr = layout::WORKER.offset((self.offset + i.wrapping_mul(self.stride)) % self.span);
        if i % 4 == 3 {
            Action::Issue(Message::Store { addr, value: i + 1 })
        } else {
            Action::Issue(Message::Load { addr })
        }
    }
}

/// Everything a core can run.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Program {
    Idle,
    Script(Script),
    RmwLoop(RmwLoop),
    LockedCs(LockedCs),
    Queue(QueueOps),
    Worker(Worker),
}

impl Program {
    pub fn step(&mut self, resume: Resume, io: &mut Io) -> Action {
        match self {
            Program::Idle => Action::Finished { complete: true },
            Program::Script(p) => p.step(resume, io),
            Program::RmwLoop(p) => p.step(resume, io),
            Program::LockedCs(p) => p.step(resume, io),
            Program::Queue(p) => p.step(resume, io),
            Program::Worker(p) => p.step(resume, io),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_ops_parse_and_print() {
        for s in ["inc 0", "store 3 7", "load 1", "amo 2 5", "mwait 0 1"] {
            assert_eq!(s.parse::<ScriptOp>().unwrap().to_string(), s);
        }
        assert!("inc".parse::<ScriptOp>().is_err());
        assert!("jump 3".parse::<ScriptOp>().is_err());
    }

    #[test]
    fn queue_slots_are_distinct_and_avoid_the_control_bank() {
        for n in [1usize, 2, 3, 7, 256] {
            let mut seen = std::collections::HashSet::new();
            for i in 0..2000 {
                let a = layout::queue_slot(i, n);
                assert!(seen.insert(a), "slot {i} repeats with {n} banks");
                assert!(a.0 >= layout::QUEUE_SLOTS.0);
                if n > 1 {
                    assert_ne!(a.bank(n), layout::QUEUE_CTL.bank(n));
                }
            }
        }
    }

    #[test]
    fn worker_finishes_after_its_accesses() {
        let mut w = Worker::new(4, 1, 8, 0, 0);
        let mut io = Io::default();
        let mut acts = vec![w.step(Resume::Start, &mut io)];
        for _ in 0..4 {
            acts.push(w.step(Resume::Reply(Message::StoreAck { addr: Addr(0) }), &mut io));
        }
        assert_eq!(acts.last(), Some(&Action::Finished { complete: true }));
        assert!(matches!(acts[3], Action::Issue(Message::Store { .. })));
        assert_eq!(io.ops, 4);
    }
}
