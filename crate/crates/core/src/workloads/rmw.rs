use crate::message::{Message, SC_SUCCESS};
use crate::types::{Addr, Word};
use crate::workloads::{Action, Io, Resume};

/// How a read-modify-write reaches memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RmwFlavor {
    /// One AmoAdd; only valid for [`RmwFn::Add`].
    Amo,
    /// LR then SC; on SC failure wait `backoff` cycles and retry.
    /// `max_retries = None` retries forever.
    LrSc { backoff: u64, max_retries: Option<u32> },
    /// LRwait then SCwait. `fail_backoff` applies after a FailResp.
    LrscWait { fail_backoff: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RmwFn {
    Add(Word),
    Swap(Word),
    CompareSwap { expected: Word, new: Word },
    /// Packed `head << 16 | tail` queue index word: bump the tail.
    QueuePush,
    /// Bump the head unless the queue is empty.
    QueuePop,
}

pub fn queue_head(ctl: Word) -> Word {
    ctl >> 16
}

pub fn queue_tail(ctl: Word) -> Word {
    ctl & 0xffff
}

impl RmwFn {
    /// New value, or `None` when the operation leaves memory unchanged.
    pub fn apply(self, old: Word) -> Option<Word> {
        match self {
            RmwFn::Add(d) => Some(old.wrapping_add(d)),
            RmwFn::Swap(v) => Some(v),
            RmwFn::CompareSwap { expected, new } => (old == expected).then_some(new),
            RmwFn::QueuePush => (queue_tail(old) < 0xffff).then_some(old + 1),
            RmwFn::QueuePop => (queue_head(old) < queue_tail(old)).then_some(old + (1 << 16)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RmwResult {
    /// `committed` is false when [`RmwFn::apply`] declined to write.
    Done { old: Word, committed: bool },
    GaveUp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum RmwState {
    Idle,
    Reading,
    Computing { old: Word },
    Writing { old: Word, write: bool },
    BackingOff,
}

/// One read-modify-write, retried until it commits (or gives up).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Rmw {
    flavor: RmwFlavor,
    f: RmwFn,
    addr: Addr,
    compute: u64,
    retries: u32,
    state: RmwState,
}

pub enum Step<T> {
    Act(Action),
    Done(T),
}

impl Rmw {
    pub fn new(flavor: RmwFlavor, f: RmwFn, addr: Addr, compute: u64) -> Self {
        if flavor == RmwFlavor::Amo {
            assert!(matches!(f, RmwFn::Add(_)), "AmoAdd implements addition only");
        }
        Rmw { flavor, f, addr, compute, retries: 0, state: RmwState::Idle }
    }

    fn read(&mut self) -> Step<RmwResult> {
        self.state = RmwState::Reading;
        let addr = self.addr;
        Step::Act(Action::Issue(match (self.flavor, self.f) {
            (RmwFlavor::Amo, RmwFn::Add(value)) => Message::AmoAdd { addr, value },
            (RmwFlavor::Amo, _) => unreachable!(),
            (RmwFlavor::LrSc { .. }, _) => Message::LrReq { addr },
            (RmwFlavor::LrscWait { .. }, _) => Message::LrWaitReq { addr },
        }))
    }

    fn write(&mut self, old: Word) -> Step<RmwResult> {
        let new = self.f.apply(old);
        let addr = self.addr;
        match (self.flavor, new) {
            (RmwFlavor::LrSc { .. }, None) => Step::Done(RmwResult::Done { old, committed: false }),
            (RmwFlavor::LrSc { .. }, Some(value)) => {
                self.state = RmwState::Writing { old, write: true };
                Step::Act(Action::Issue(Message::ScReq { addr, value }))
            }
            // The queue must be released even when nothing changes.
            (_, new) => {
                self.state = RmwState::Writing { old, write: new.is_some() };
                Step::Act(Action::Issue(Message::ScWaitReq { addr, value: new.unwrap_or(old) }))
            }
        }
    }

    fn retry(&mut self, io: &mut Io, backoff: u64) -> Step<RmwResult> {
        io.retries += 1;
        self.retries += 1;
        if let RmwFlavor::LrSc { max_retries: Some(max), .. } = self.flavor {
            if self.retries > max {
                return Step::Done(RmwResult::GaveUp);
            }
        }
        self.state = RmwState::BackingOff;
        Step::Act(Action::Backoff(backoff))
    }

    pub fn step(&mut self, resume: Resume, io: &mut Io) -> Step<RmwResult> {
        match (self.state, resume) {
            (RmwState::Idle, _) | (RmwState::BackingOff, Resume::Timer) => self.read(),
            (RmwState::Reading, Resume::Reply(Message::AmoResp { value, .. })) => {
                Step::Done(RmwResult::Done { old: value, committed: true })
            }
            (RmwState::Reading, Resume::Reply(Message::LoadResp { value, .. } | Message::LrWaitResp { value, .. })) => {
                if self.compute == 0 {
                    self.write(value)
                } else {
                    self.state = RmwState::Computing { old: value };
                    Step::Act(Action::Delay(self.compute))
                }
            }
            (RmwState::Reading, Resume::Reply(Message::FailResp { .. })) => {
                let backoff = match self.flavor {
                    RmwFlavor::LrscWait { fail_backoff } => fail_backoff,
                    _ => 0,
                };
                self.retry(io, backoff)
            }
            (RmwState::Computing { old }, Resume::Timer) => self.write(old),
            (RmwState::Writing { old, write }, Resume::Reply(Message::ScWaitResp { code, .. })) => {
                if code == SC_SUCCESS {
                    return Step::Done(RmwResult::Done { old, committed: write });
                }
                let backoff = match self.flavor {
                    RmwFlavor::LrSc { backoff, .. } => backoff,
                    _ => 0,
                };
                self.retry(io, backoff)
            }
            (state, resume) => panic!("rmw on {:?}: unexpected {resume:?} in {state:?}", self.addr),
        }
    }
}
