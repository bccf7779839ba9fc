use crate::message::Message;
use crate::types::{CoreId, Word};
use crate::workloads::locks::{Lock, LockKind};
use crate::workloads::rmw::{queue_head, queue_tail, Rmw, RmwFlavor, RmwFn, RmwResult, Step};
use crate::workloads::{layout, Action, Io, Resume};

/// Returned by a pop on an empty queue.
pub const EMPTY: Word = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QueueImpl {
    /// Lock-free on the packed index word; pops wait for the slot with Mwait
    /// when `mwait` is set, otherwise poll with loads.
    Rmw { flavor: RmwFlavor, mwait: bool, poll_backoff: u64 },
    /// Index word and slots protected by an AmoAdd spin lock.
    AmoLock { backoff: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum State {
    Index(Rmw),
    Lock,
    LockedLoadIndex,
    LockedStoreIndex { old: Word },
    LockedSlot { old: Word },
    Unlock { result: Word },
    StoreSlot,
    AwaitSlot { index: Word },
    PollBackoff { index: Word },
}

/// Alternating push/pop on the shared benchmark queue.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QueueOps {
    imp: QueueImpl,
    me: CoreId,
    n_banks: usize,
    iterations: u64,
    done: u64,
    lock: Lock,
    state: Option<State>,
    pub popped: Vec<Word>,
}

impl QueueOps {
    pub fn new(imp: QueueImpl, me: CoreId, n_banks: usize, iterations: u64) -> Self {
        let backoff = match imp {
            QueueImpl::AmoLock { backoff } => backoff,
            QueueImpl::Rmw { .. } => 0,
        };
        QueueOps {
            imp,
            me,
            n_banks,
            iterations,
            done: 0,
            lock: Lock::new(LockKind::SpinAmo, layout::QUEUE_LOCK, backoff, me),
            state: None,
            popped: Vec::new(),
        }
    }

    fn pushing(&self) -> bool {
        self.done.is_multiple_of(2)
    }

    fn value(&self) -> Word {
        ((self.me.0 + 1) << 16) | (self.done as Word / 2 + 1)
    }

    fn finish_op(&mut self, io: &mut Io, popped: Option<Word>) -> Action {
        if let Some(v) = popped {
            self.popped.push(v);
        }
        self.done += 1;
        io.ops += 1;
        self.state = None;
        self.begin(io)
    }

    fn begin(&mut self, io: &mut Io) -> Action {
        if self.done == self.iterations {
            return Action::Finished { complete: true };
        }
        match self.imp {
            QueueImpl::Rmw { flavor, .. } => {
                let f = if self.pushing() { RmwFn::QueuePush } else { RmwFn::QueuePop };
                self.drive_index(Rmw::new(flavor, f, layout::QUEUE_CTL, 0), Resume::Start, io)
            }
            QueueImpl::AmoLock { .. } => {
                self.lock.acquire(layout::QUEUE_LOCK);
                self.drive_lock(Resume::Start, io)
            }
        }
    }

    fn drive_lock(&mut self, resume: Resume, io: &mut Io) -> Action {
        match self.lock.step(resume, io) {
            Step::Act(a) => {
                self.state = Some(State::Lock);
                a
            }
            Step::Done(()) => match self.state.take() {
                Some(State::Unlock { result }) => {
                    let popped = (!self.pushing()).then_some(result);
                    self.finish_op(io, popped)
                }
                _ => {
                    self.state = Some(State::LockedLoadIndex);
                    Action::Issue(Message::Load { addr: layout::QUEUE_CTL })
                }
            },
        }
    }

    fn drive_index(&mut self, mut rmw: Rmw, resume: Resume, io: &mut Io) -> Action {
        match rmw.step(resume, io) {
            Step::Act(a) => {
                self.state = Some(State::Index(rmw));
                a
            }
            Step::Done(RmwResult::Done { old, committed }) => {
                if self.pushing() {
                    self.state = Some(State::StoreSlot);
                    Action::Issue(Message::Store { addr: layout::queue_slot(queue_tail(old), self.n_banks), value: self.value() })
                } else if !committed {
                    self.finish_op(io, Some(EMPTY))
                } else {
                    self.await_slot(queue_head(old))
                }
            }
            Step::Done(RmwResult::GaveUp) => unreachable!("queue RMWs retry forever"),
        }
    }

    fn await_slot(&mut self, index: Word) -> Action {
        self.state = Some(State::AwaitSlot { index });
        let addr = layout::queue_slot(index, self.n_banks);
        match self.imp {
            QueueImpl::Rmw { mwait: true, .. } => Action::Issue(Message::MwaitReq { addr, expected: 0 }),
            _ => Action::Issue(Message::Load { addr }),
        }
    }

    pub fn step(&mut self, resume: Resume, io: &mut Io) -> Action {
        let unlock = |me: &mut Self, result: Word, io: &mut Io| {
            me.lock.release();
            let a = me.drive_lock(Resume::Start, io);
            me.state = Some(State::Unlock { result });
            a
        };
        match (self.state.take(), resume) {
            (None, _) => self.begin(io),
            (Some(State::Index(rmw)), r) => self.drive_index(rmw, r, io),
            (Some(State::Lock), r) => self.drive_lock(r, io),
            (Some(State::Unlock { result }), r) => {
                self.state = Some(State::Unlock { result });
                match self.lock.step(r, io) {
                    Step::Act(a) => a,
                    Step::Done(()) => {
                        let popped = (!self.pushing()).then_some(result);
                        self.finish_op(io, popped)
                    }
                }
            }
            (Some(State::LockedLoadIndex), Resume::Reply(Message::LoadResp { value: old, .. })) => {
                let f = if self.pushing() { RmwFn::QueuePush } else { RmwFn::QueuePop };
                match f.apply(old) {
                    Some(new) => {
                        self.state = Some(State::LockedStoreIndex { old });
                        Action::Issue(Message::Store { addr: layout::QUEUE_CTL, value: new })
                    }
                    None => unlock(self, EMPTY, io),
                }
            }
            (Some(State::LockedStoreIndex { old }), Resume::Reply(_)) => {
                self.state = Some(State::LockedSlot { old });
                if self.pushing() {
                    Action::Issue(Message::Store { addr: layout::queue_slot(queue_tail(old), self.n_banks), value: self.value() })
                } else {
                    Action::Issue(Message::Load { addr: layout::queue_slot(queue_head(old), self.n_banks) })
                }
            }
            (Some(State::LockedSlot { .. }), Resume::Reply(Message::LoadResp { value, .. })) => unlock(self, value, io),
            (Some(State::LockedSlot { .. }), Resume::Reply(_)) => unlock(self, 0, io),
            (Some(State::StoreSlot), Resume::Reply(_)) => self.finish_op(io, None),
            (Some(State::AwaitSlot { index }), Resume::Reply(Message::MwaitResp { value, .. } | Message::LoadResp { value, .. })) => {
                if value != 0 {
                    return self.finish_op(io, Some(value));
                }
                match self.imp {
                    QueueImpl::Rmw { mwait: false, poll_backoff, .. } if poll_backoff > 0 => {
                        self.state = Some(State::PollBackoff { index });
                        Action::Backoff(poll_backoff)
                    }
                    _ => self.await_slot(index),
                }
            }
            (Some(State::AwaitSlot { index }), Resume::Reply(Message::FailResp { .. })) => {
                io.retries += 1;
                self.state = Some(State::PollBackoff { index });
                Action::Backoff(1)
            }
            (Some(State::PollBackoff { index }), Resume::Timer) => self.await_slot(index),
            (state, resume) => panic!("queue: unexpected {resume:?} in {state:?}"),
        }
    }
}
