use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::hash::{Hash, Hasher};

use crate::message::{Message, MessageKind, SC_SUCCESS};
use crate::sim::Anomaly;
use crate::trace::TraceRecord;
use crate::types::{Addr, CoreId, Cycle, Endpoint, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Property {
    MutualExclusion,
    AtomicityOracle,
    FifoService,
    NoLostWakeup,
    DeadlockFree,
    StarvationFree,
    ColibriEqualsIdeal,
}

impl Property {
    pub const ALL: [Property; 7] = [
        Property::MutualExclusion,
        Property::AtomicityOracle,
        Property::FifoService,
        Property::NoLostWakeup,
        Property::DeadlockFree,
        Property::StarvationFree,
        Property::ColibriEqualsIdeal,
    ];

    /// Properties a single trace can establish.
    pub const PER_TRACE: [Property; 6] = [
        Property::MutualExclusion,
        Property::AtomicityOracle,
        Property::FifoService,
        Property::NoLostWakeup,
        Property::DeadlockFree,
        Property::StarvationFree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::MutualExclusion => "mutual-exclusion",
            Property::AtomicityOracle => "atomicity",
            Property::FifoService => "fifo-service",
            Property::NoLostWakeup => "no-lost-wakeup",
            Property::DeadlockFree => "deadlock-free",
            Property::StarvationFree => "starvation-free",
            Property::ColibriEqualsIdeal => "colibri-equals-ideal",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Property {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Property::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown property `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Violation {
    pub property: Property,
    pub cycle: Cycle,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated at cycle {}: {}", self.property, self.cycle, self.detail)
    }
}

/// How a core ended, as far as the monitor is told.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoreEnd {
    Done { complete: bool },
    Blocked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct PendingSc {
    core: CoreId,
    addr: Addr,
    value: Word,
    wait: bool,
}

/// Ghost state fed with bank-side observations: requests as served and
/// responses as emitted. Checks mutual exclusion, FIFO service, wake-up
/// accounting and an atomicity shadow of every word.
///
/// Hashing skips the violation list, so two paths reaching the same ghost
/// state merge in the explorer.
#[derive(Clone, Debug, Default)]
pub struct Monitor {
    arrivals: BTreeMap<Addr, VecDeque<CoreId>>,
    outstanding: BTreeMap<CoreId, Addr>,
    holders: BTreeMap<Addr, (CoreId, bool)>,
    lr: BTreeMap<CoreId, (Addr, bool)>,
    reads: BTreeMap<CoreId, Word>,
    lr_read: Option<CoreId>,
    pending_sc: Option<PendingSc>,
    shadow: BTreeMap<Addr, Word>,
    commits: Vec<(CoreId, Addr, Word)>,
    violations: Vec<Violation>,
}

impl Hash for Monitor {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.arrivals.hash(state);
        self.outstanding.hash(state);
        self.holders.hash(state);
        self.lr.hash(state);
        self.reads.hash(state);
        self.lr_read.hash(state);
        self.pending_sc.hash(state);
        self.shadow.hash(state);
        self.commits.hash(state);
    }
}

impl Monitor {
    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    /// Committed SC/SCwait writes, sorted.
    pub fn commits(&self) -> &[(CoreId, Addr, Word)] {
        &self.commits
    }

    fn violate(&mut self, property: Property, cycle: Cycle, detail: String) {
        self.violations.push(Violation { property, cycle, detail });
    }

    pub fn observe(&mut self, rec: &TraceRecord) {
        if let TraceRecord::Message { cycle, src, dst, msg } = rec {
            match (*src, *dst) {
                (Endpoint::Core(c), Endpoint::Bank(_)) => self.served(*cycle, c, msg),
                (Endpoint::Bank(_), Endpoint::Core(c)) => self.emitted(*cycle, c, msg),
                _ => {}
            }
        }
    }

    pub fn anomaly(&mut self, a: &Anomaly) {
        self.violate(Property::NoLostWakeup, a.cycle, format!("{} at {}", a.kind, a.at));
    }

    fn write(&mut self, addr: Addr) {
        if let Some(h) = self.holders.get_mut(&addr) {
            h.1 = true;
        }
        for (a, dirty) in self.lr.values_mut() {
            if *a == addr {
                *dirty = true;
            }
        }
    }

    fn served(&mut self, cycle: Cycle, c: CoreId, msg: &Message) {
        match *msg {
            Message::LrWaitReq { addr } | Message::MwaitReq { addr, .. } => {
                self.arrivals.entry(addr).or_default().push_back(c);
                self.outstanding.insert(c, addr);
            }
            Message::LrReq { addr } => {
                self.lr.insert(c, (addr, false));
                self.lr_read = Some(c);
            }
            Message::ScReq { addr, value } => self.pending_sc = Some(PendingSc { core: c, addr, value, wait: false }),
            Message::ScWaitReq { addr, value } => {
                if self.holders.get(&addr).map(|h| h.0) != Some(c) {
                    self.violate(Property::MutualExclusion, cycle, format!("SCwait on {addr} from {c}, which holds no reservation"));
                }
                self.pending_sc = Some(PendingSc { core: c, addr, value, wait: true });
            }
            Message::Store { addr, value } => {
                self.write(addr);
                self.shadow.insert(addr, value);
            }
            Message::AmoAdd { addr, value } => {
                self.write(addr);
                let s = self.shadow.entry(addr).or_default();
                *s = s.wrapping_add(value);
            }
            _ => {}
        }
    }

    fn wake(&mut self, cycle: Cycle, c: CoreId, addr: Addr, kind: MessageKind) {
        if self.outstanding.get(&c) == Some(&addr) {
            self.outstanding.remove(&c);
        } else {
            self.violate(Property::NoLostWakeup, cycle, format!("{kind} to {c} for {addr} without an outstanding wait"));
            return;
        }
        let q = self.arrivals.entry(addr).or_default();
        if q.front() != Some(&c) {
            let front = q.front().copied();
            q.retain(|&x| x != c);
            let expected = front.map_or_else(|| "nobody".to_string(), |f| f.to_string());
            self.violate(Property::FifoService, cycle, format!("{kind} for {addr} went to {c} before {expected}"));
        } else {
            q.pop_front();
        }
    }

    fn emitted(&mut self, cycle: Cycle, c: CoreId, msg: &Message) {
        match *msg {
            Message::LrWaitResp { addr, value } => {
                self.wake(cycle, c, addr, MessageKind::LrWaitResp);
                if let Some(&(other, _)) = self.holders.get(&addr) {
                    if other != c {
                        self.violate(Property::MutualExclusion, cycle, format!("{c} and {other} both hold the reservation on {addr}"));
                    }
                }
                self.holders.insert(addr, (c, false));
                self.reads.insert(c, value);
            }
            Message::MwaitResp { addr, .. } => self.wake(cycle, c, addr, MessageKind::MwaitResp),
            Message::FailResp { addr, .. } => {
                if let Some(q) = self.arrivals.get_mut(&addr) {
                    if let Some(pos) = q.iter().rposition(|&x| x == c) {
                        q.remove(pos);
                    }
                }
                self.outstanding.remove(&c);
            }
            Message::LoadResp { value, .. } => {
                if self.lr_read == Some(c) {
                    self.lr_read = None;
                    self.reads.insert(c, value);
                }
            }
            Message::ScWaitResp { addr, code } => {
                let Some(sc) = self.pending_sc.take() else { return };
                let dirty = if sc.wait {
                    match self.holders.get(&addr) {
                        Some(&(h, dirty)) if h == c => {
                            self.holders.remove(&addr);
                            Some(dirty)
                        }
                        _ => None,
                    }
                } else {
                    match self.lr.remove(&c) {
                        Some((a, dirty)) if a == addr => Some(dirty),
                        _ => None,
                    }
                };
                if code != SC_SUCCESS {
                    return;
                }
                match dirty {
                    Some(false) => {}
                    Some(true) => self.violate(
                        Property::MutualExclusion,
                        cycle,
                        format!("{c} committed to {addr} despite an intervening write"),
                    ),
                    None => self.violate(Property::MutualExclusion, cycle, format!("{c} committed to {addr} without a reservation")),
                }
                let read = self.reads.get(&c).copied().unwrap_or(0);
                let s = self.shadow.entry(addr).or_default();
                *s = s.wrapping_add(sc.value.wrapping_sub(read));
                let entry = (c, addr, sc.value);
                let pos = self.commits.partition_point(|x| *x < entry);
                self.commits.insert(pos, entry);
                self.write(addr);
            }
            _ => {}
        }
    }

    /// Terminal checks. `quiescent` means nothing is left in flight.
    pub fn finish(&mut self, cycle: Cycle, memory: &BTreeMap<Addr, Word>, cores: &[CoreEnd], quiescent: bool) {
        for (&addr, &want) in &self.shadow.clone() {
            let got = memory.get(&addr).copied().unwrap_or(0);
            if got != want {
                self.violate(
                    Property::AtomicityOracle,
                    cycle,
                    format!("{addr} holds {got}, but the committed operations account for {want}"),
                );
            }
        }
        for (i, end) in cores.iter().enumerate() {
            let c = CoreId(i as u32);
            match end {
                CoreEnd::Done { complete: false } => {
                    self.violate(Property::StarvationFree, cycle, format!("{c} gave up before completing its quota"))
                }
                CoreEnd::Blocked if quiescent => {
                    self.violate(Property::DeadlockFree, cycle, format!("{c} is blocked with nothing in flight"))
                }
                _ => {}
            }
        }
        if quiescent {
            for (c, addr) in self.outstanding.clone() {
                self.violate(Property::NoLostWakeup, cycle, format!("{c} never got its response for {addr}"));
            }
        }
    }
}
