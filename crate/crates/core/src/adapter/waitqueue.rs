use std::collections::{BTreeMap, VecDeque};

use crate::adapter::{BankCtx, Mutation};
use crate::error::SimError;
use crate::message::{Message, WaiterKind, SC_FAILURE, SC_SUCCESS};
use crate::types::{Addr, CoreId, Word};

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
struct AddrQueue {
    entries: VecDeque<(CoreId, WaiterKind)>,
    /// The head's reservation (LrWaiter) or armed monitor (MWaiter).
    reservation_valid: bool,
}

/// Centralised LRwait reservation queues in front of one bank.
///
/// `capacity = None` is the ideal variant (room for every core); `Some(q)`
/// is the bounded variant where an LRwait or Mwait to a full queue fails
/// immediately.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct WaitQueueAdapter {
    capacity: Option<usize>,
    queues: BTreeMap<Addr, AddrQueue>,
}

impl WaitQueueAdapter {
    pub fn new(capacity: Option<usize>) -> Self {
        WaitQueueAdapter { capacity, queues: BTreeMap::new() }
    }

    pub fn queue(&self, addr: Addr) -> Vec<CoreId> {
        self.queues.get(&addr).map(|q| q.entries.iter().map(|(c, _)| *c).collect()).unwrap_or_default()
    }

    pub fn head_reservation_valid(&self, addr: Addr) -> bool {
        self.queues.get(&addr).is_some_and(|q| q.reservation_valid)
    }

    pub(crate) fn handle_wait(
        &mut self,
        core: CoreId,
        addr: Addr,
        kind: WaiterKind,
        ctx: &mut BankCtx<'_>,
    ) -> Result<(), SimError> {
        if self.queues.values().any(|q| q.entries.iter().any(|(c, _)| *c == core)) {
            return Err(SimError::DuplicateWaiter { core });
        }
        let full = self
            .capacity
            .is_some_and(|cap| self.queues.get(&addr).is_some_and(|q| q.entries.len() >= cap));
        if full {
            ctx.reply(core, Message::FailResp { addr, code: SC_FAILURE });
            return Ok(());
        }
        let q = self.queues.entry(addr).or_default();
        q.entries.push_back((core, kind));
        if q.entries.len() == 1 {
            self.serve_head(addr, ctx);
        }
        Ok(())
    }

    /// Respond to queue heads until one holds a reservation or the queue
    /// drains. MWaiters whose expected value is already stale are answered
    /// and dequeued on the spot.
    fn serve_head(&mut self, addr: Addr, ctx: &mut BankCtx<'_>) {
        let Some(q) = self.queues.get_mut(&addr) else { return };
        q.reservation_valid = false;
        while let Some(&(core, kind)) = q.entries.front() {
            let value = ctx.mem.get(addr);
            match kind {
                WaiterKind::LrWaiter => {
                    q.reservation_valid = true;
                    ctx.reply(core, Message::LrWaitResp { addr, value });
                    return;
                }
                WaiterKind::MWaiter { expected } if value == expected => {
                    q.reservation_valid = true;
                    return;
                }
                WaiterKind::MWaiter { .. } => {
                    ctx.reply(core, Message::MwaitResp { addr, value });
                    q.entries.pop_front();
                }
            }
        }
        self.queues.remove(&addr);
    }

    pub(crate) fn handle_scwait(&mut self, core: CoreId, addr: Addr, value: Word, ctx: &mut BankCtx<'_>) {
        let is_head = self
            .queues
            .get(&addr)
            .and_then(|q| q.entries.front())
            .is_some_and(|&(c, k)| c == core && k == WaiterKind::LrWaiter);
        if !is_head {
            ctx.reply(core, Message::ScWaitResp { addr, code: SC_FAILURE });
            return;
        }
        let q = self.queues.get_mut(&addr).expect("head exists");
        let ok = q.reservation_valid;
        q.entries.pop_front();
        q.reservation_valid = false;
        if ok {
            ctx.mem.set(addr, value);
        }
        ctx.reply(core, Message::ScWaitResp { addr, code: if ok { SC_SUCCESS } else { SC_FAILURE } });
        self.serve_head(addr, ctx);
    }

    pub(crate) fn on_write(&mut self, addr: Addr, plain_store: bool, ctx: &mut BankCtx<'_>) {
        let Some(q) = self.queues.get_mut(&addr) else { return };
        match q.entries.front() {
            Some(&(core, WaiterKind::MWaiter { .. })) if q.reservation_valid => {
                ctx.reply(core, Message::MwaitResp { addr, value: ctx.mem.get(addr) });
                q.entries.pop_front();
                self.serve_head(addr, ctx);
            }
            Some(&(_, WaiterKind::LrWaiter)) if !(plain_store && ctx.mutated(Mutation::ForgetStoreInvalidation)) => {
                q.reservation_valid = false;
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::adapter::testutil::*;
    use crate::adapter::{Adapter, AdapterKind};
    use crate::error::SimError;
    use crate::message::Message;

    fn queue(b: &TestBank) -> Vec<u32> {
        let Adapter::WaitQueue(q) = &b.adapter else { unreachable!() };
        q.queue(A).iter().map(|c| c.0).collect()
    }

    #[test]
    fn empty_queue_responds_immediately() {
        let mut b = TestBank::new(AdapterKind::LrscWaitIdeal);
        b.mem.set(A, 3);
        assert_eq!(b.serve(0, Message::LrWaitReq { addr: A }), vec![(c(0), Message::LrWaitResp { addr: A, value: 3 })]);
    }

    #[test]
    fn second_waiter_is_buffered_until_scwait() {
        let mut b = TestBank::new(AdapterKind::LrscWaitIdeal);
        b.serve(0, Message::LrWaitReq { addr: A });
        assert!(b.serve(1, Message::LrWaitReq { addr: A }).is_empty());
        assert_eq!(queue(&b), vec![0, 1]);
        assert_eq!(
            b.serve(0, Message::ScWaitReq { addr: A, value: 1 }),
            vec![
                (c(0), Message::ScWaitResp { addr: A, code: 0 }),
                (c(1), Message::LrWaitResp { addr: A, value: 1 }),
            ]
        );
        assert_eq!(queue(&b), vec![1]);
    }

    #[test]
    fn bounded_queue_fails_when_full() {
        let mut b = TestBank::new(AdapterKind::LrscWaitBounded { q: 1 });
        b.serve(0, Message::LrWaitReq { addr: A });
        assert_eq!(b.serve(1, Message::LrWaitReq { addr: A }), vec![(c(1), Message::FailResp { addr: A, code: 1 })]);
        assert_eq!(queue(&b), vec![0]);
    }

    #[test]
    fn store_invalidates_head_but_next_is_still_served() {
        let mut b = TestBank::new(AdapterKind::LrscWaitIdeal);
        b.serve(0, Message::LrWaitReq { addr: A });
        b.serve(1, Message::LrWaitReq { addr: A });
        b.serve(2, Message::Store { addr: A, value: 40 });
        assert_eq!(queue(&b), vec![0, 1], "a store does not dequeue the head");
        assert_eq!(
            b.serve(0, Message::ScWaitReq { addr: A, value: 1 }),
            vec![
                (c(0), Message::ScWaitResp { addr: A, code: 1 }),
                (c(1), Message::LrWaitResp { addr: A, value: 40 }),
            ]
        );
        assert_eq!(b.mem.get(A), 40);
    }

    #[test]
    fn non_head_scwait_fails_without_side_effects() {
        let mut b = TestBank::new(AdapterKind::LrscWaitIdeal);
        b.serve(0, Message::LrWaitReq { addr: A });
        b.serve(1, Message::LrWaitReq { addr: A });
        assert_eq!(b.serve(1, Message::ScWaitReq { addr: A, value: 9 }), vec![(c(1), Message::ScWaitResp { addr: A, code: 1 })]);
        assert_eq!(queue(&b), vec![0, 1]);
        assert_eq!(b.mem.get(A), 0);
    }

    #[test]
    fn store_to_adjacent_word_keeps_reservation() {
        let mut b = TestBank::new(AdapterKind::LrscWaitIdeal);
        b.serve(0, Message::LrWaitReq { addr: A });
        b.serve(1, Message::Store { addr: A.offset(1), value: 1 });
        assert_eq!(b.serve(0, Message::ScWaitReq { addr: A, value: 5 })[0].1, Message::ScWaitResp { addr: A, code: 0 });
    }

    #[test]
    fn duplicate_waiter_is_a_model_error() {
        let mut b = TestBank::new(AdapterKind::LrscWaitIdeal);
        b.serve(0, Message::LrWaitReq { addr: A });
        assert_eq!(b.try_serve(0, Message::LrWaitReq { addr: A.offset(4) }), Err(SimError::DuplicateWaiter { core: c(0) }));
    }

    #[test]
    fn mwait_short_circuits_on_stale_value() {
        let mut b = TestBank::new(AdapterKind::LrscWaitIdeal);
        b.mem.set(A, 5);
        assert_eq!(b.serve(0, Message::MwaitReq { addr: A, expected: 0 }), vec![(c(0), Message::MwaitResp { addr: A, value: 5 })]);
        assert!(queue(&b).is_empty());
    }

    #[test]
    fn store_wakes_all_queued_mwaiters_in_order() {
        let mut b = TestBank::new(AdapterKind::LrscWaitIdeal);
        for core in 0..3 {
            assert!(b.serve(core, Message::MwaitReq { addr: A, expected: 0 }).is_empty());
        }
        let out = b.serve(3, Message::Store { addr: A, value: 1 });
        assert_eq!(
            out,
            vec![
                (c(0), Message::MwaitResp { addr: A, value: 1 }),
                (c(1), Message::MwaitResp { addr: A, value: 1 }),
                (c(2), Message::MwaitResp { addr: A, value: 1 }),
                (c(3), Message::StoreAck { addr: A }),
            ]
        );
    }

    #[test]
    fn mwait_cascade_stops_at_lr_waiter() {
        let mut b = TestBank::new(AdapterKind::LrscWaitIdeal);
        b.serve(0, Message::MwaitReq { addr: A, expected: 0 });
        b.serve(1, Message::LrWaitReq { addr: A });
        b.serve(2, Message::MwaitReq { addr: A, expected: 0 });
        let out = b.serve(3, Message::Store { addr: A, value: 7 });
        assert_eq!(out[0], (c(0), Message::MwaitResp { addr: A, value: 7 }));
        assert_eq!(out[1], (c(1), Message::LrWaitResp { addr: A, value: 7 }));
        assert_eq!(queue(&b), vec![1, 2]);
    }

    #[test]
    fn forget_store_invalidation_mutation_lets_sc_succeed() {
        let mut b = TestBank::new(AdapterKind::LrscWaitIdeal);
        b.mutation = Some(crate::adapter::Mutation::ForgetStoreInvalidation);
        b.serve(0, Message::LrWaitReq { addr: A });
        b.serve(1, Message::Store { addr: A, value: 5 });
        assert_eq!(b.serve(0, Message::ScWaitReq { addr: A, value: 1 })[0].1, Message::ScWaitResp { addr: A, code: 0 });
    }
}
