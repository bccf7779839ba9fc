use crate::message::Message;
use crate::types::{Addr, CoreId, Word};
use crate::workloads::rmw::{Rmw, RmwFlavor, RmwFn, RmwResult, Step};
use crate::workloads::{layout, Action, Io, Resume};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LockKind {
    /// Test-and-set through AmoAdd; old value 0 means acquired.
    SpinAmo,
    SpinLrSc,
    /// Test-and-set through LRwait/SCwait.
    SpinColibri,
    /// MCS queue lock whose waiters sleep in Mwait.
    McsMwait,
}

impl LockKind {
    pub fn name(self) -> &'static str {
        match self {
            LockKind::SpinAmo => "lock-amo",
            LockKind::SpinLrSc => "lock-lrsc",
            LockKind::SpinColibri => "lock-colibri",
            LockKind::McsMwait => "lock-mcs",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum State {
    Idle,
    AcqStart,
    AmoTry,
    CasTry(Rmw),
    Backoff,
    McsClearNext,
    McsSetLocked,
    McsSwap(Rmw),
    McsLink,
    McsSleep,
    RelStart,
    SpinStore,
    McsLoadNext,
    McsCas(Rmw),
    McsAwaitNext,
    McsHandoff,
}

#[derive(Clone, Copy)]
enum RmwCtx {
    Cas,
    Swap,
    Release,
}

/// Acquire/release state machine for one lock word.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Lock {
    kind: LockKind,
    addr: Addr,
    backoff: u64,
    me: CoreId,
    state: State,
}

fn tag(c: CoreId) -> Word {
    c.0 + 1
}

fn untag(w: Word) -> CoreId {
    CoreId(w - 1)
}

impl Lock {
    pub fn new(kind: LockKind, addr: Addr, backoff: u64, me: CoreId) -> Self {
        Lock { kind, addr, backoff, me, state: State::Idle }
    }

    pub fn acquire(&mut self, addr: Addr) {
        self.addr = addr;
        self.state = State::AcqStart;
    }

    pub fn release(&mut self) {
        self.state = State::RelStart;
    }

    fn issue(&mut self, next: State, msg: Message) -> Step<()> {
        self.state = next;
        Step::Act(Action::Issue(msg))
    }

    fn try_acquire(&mut self, io: &mut Io) -> Step<()> {
        match self.kind {
            LockKind::SpinAmo => self.issue(State::AmoTry, Message::AmoAdd { addr: self.addr, value: 1 }),
            LockKind::SpinLrSc | LockKind::SpinColibri => {
                let flavor = if self.kind == LockKind::SpinLrSc {
                    RmwFlavor::LrSc { backoff: self.backoff, max_retries: None }
                } else {
                    RmwFlavor::LrscWait { fail_backoff: self.backoff }
                };
                let rmw = Rmw::new(flavor, RmwFn::CompareSwap { expected: 0, new: 1 }, self.addr, 0);
                self.run_rmw(rmw, Resume::Start, io, RmwCtx::Cas)
            }
            LockKind::McsMwait => {
                self.issue(State::McsClearNext, Message::Store { addr: layout::mcs_next(self.me), value: 0 })
            }
        }
    }

    fn run_rmw(&mut self, mut rmw: Rmw, resume: Resume, io: &mut Io, ctx: RmwCtx) -> Step<()> {
        let (old, committed) = match rmw.step(resume, io) {
            Step::Act(a) => {
                self.state = match ctx {
                    RmwCtx::Cas => State::CasTry(rmw),
                    RmwCtx::Swap => State::McsSwap(rmw),
                    RmwCtx::Release => State::McsCas(rmw),
                };
                return Step::Act(a);
            }
            Step::Done(RmwResult::Done { old, committed }) => (old, committed),
            Step::Done(RmwResult::GaveUp) => unreachable!("lock RMWs retry forever"),
        };
        match ctx {
            RmwCtx::Cas if committed => self.acquired(),
            RmwCtx::Cas => self.spin_fail(io),
            RmwCtx::Swap if old == 0 => self.acquired(),
            RmwCtx::Swap => {
                self.issue(State::McsLink, Message::Store { addr: layout::mcs_next(untag(old)), value: tag(self.me) })
            }
            RmwCtx::Release if committed => self.released(),
            RmwCtx::Release => {
                self.issue(State::McsAwaitNext, Message::MwaitReq { addr: layout::mcs_next(self.me), expected: 0 })
            }
        }
    }

    fn acquired(&mut self) -> Step<()> {
        self.state = State::Idle;
        Step::Done(())
    }

    fn released(&mut self) -> Step<()> {
        self.state = State::Idle;
        Step::Done(())
    }

    fn spin_fail(&mut self, io: &mut Io) -> Step<()> {
        io.retries += 1;
        self.state = State::Backoff;
        Step::Act(Action::Backoff(self.backoff))
    }

    fn handoff(&mut self, successor: Word) -> Step<()> {
        self.issue(State::McsHandoff, Message::Store { addr: layout::mcs_locked(untag(successor)), value: 0 })
    }

    pub fn step(&mut self, resume: Resume, io: &mut Io) -> Step<()> {
        let sleep = Message::MwaitReq { addr: layout::mcs_locked(self.me), expected: 1 };
        match (std::mem::replace(&mut self.state, State::Idle), resume) {
            (State::AcqStart, _) | (State::Backoff, Resume::Timer) => self.try_acquire(io),
            (State::AmoTry, Resume::Reply(Message::AmoResp { value, .. })) => {
                if value == 0 {
                    self.acquired()
                } else {
                    self.spin_fail(io)
                }
            }
            (State::CasTry(rmw), r) => self.run_rmw(rmw, r, io, RmwCtx::Cas),
            (State::McsClearNext, Resume::Reply(_)) => {
                self.issue(State::McsSetLocked, Message::Store { addr: layout::mcs_locked(self.me), value: 1 })
            }
            (State::McsSetLocked, Resume::Reply(_)) => {
                let rmw = Rmw::new(RmwFlavor::LrscWait { fail_backoff: self.backoff }, RmwFn::Swap(tag(self.me)), self.addr, 0);
                self.run_rmw(rmw, Resume::Start, io, RmwCtx::Swap)
            }
            (State::McsSwap(rmw), r) => self.run_rmw(rmw, r, io, RmwCtx::Swap),
            (State::McsLink, Resume::Reply(_)) => self.issue(State::McsSleep, sleep),
            (State::McsSleep, Resume::Reply(Message::MwaitResp { value: 0, .. })) => self.acquired(),
            (State::McsSleep, Resume::Reply(Message::MwaitResp { .. })) => self.issue(State::McsSleep, sleep),
            (State::McsSleep, Resume::Reply(Message::FailResp { .. })) => {
                io.retries += 1;
                self.state = State::McsSleep;
                Step::Act(Action::Backoff(self.backoff.max(1)))
            }
            (State::McsSleep, Resume::Timer) => self.issue(State::McsSleep, sleep),
            (State::RelStart, _) => match self.kind {
                LockKind::McsMwait => self.issue(State::McsLoadNext, Message::Load { addr: layout::mcs_next(self.me) }),
                _ => self.issue(State::SpinStore, Message::Store { addr: self.addr, value: 0 }),
            },
            (State::SpinStore, Resume::Reply(_)) | (State::McsHandoff, Resume::Reply(_)) => self.released(),
            (State::McsLoadNext, Resume::Reply(Message::LoadResp { value, .. })) => {
                if value != 0 {
                    return self.handoff(value);
                }
                let cas = RmwFn::CompareSwap { expected: tag(self.me), new: 0 };
                let rmw = Rmw::new(RmwFlavor::LrscWait { fail_backoff: self.backoff }, cas, self.addr, 0);
                self.run_rmw(rmw, Resume::Start, io, RmwCtx::Release)
            }
            (State::McsCas(rmw), r) => self.run_rmw(rmw, r, io, RmwCtx::Release),
            (State::McsAwaitNext, Resume::Reply(Message::MwaitResp { value, .. })) if value != 0 => self.handoff(value),
            (State::McsAwaitNext, Resume::Reply(Message::MwaitResp { .. } | Message::FailResp { .. })) => {
                self.issue(State::McsAwaitNext, Message::MwaitReq { addr: layout::mcs_next(self.me), expected: 0 })
            }
            (state, resume) => panic!("lock {:?}: unexpected {resume:?} in {state:?}", self.kind),
        }
    }
}
