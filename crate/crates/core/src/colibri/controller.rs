use crate::adapter::{BankCtx, Mutation};
use crate::error::SimError;
use crate::message::{Message, WaiterKind, SC_FAILURE, SC_SUCCESS};
use crate::sim::AnomalyKind;
use crate::types::{Addr, CoreId, Word};

/// Head/tail registers of one distributed queue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Slot {
    pub address: Addr,
    pub head: CoreId,
    pub head_kind: WaiterKind,
    /// Cleared between an SCwait (or Mwait response) and the WakeUpRequest
    /// that promotes the successor.
    pub head_valid: bool,
    pub tail: CoreId,
    /// The head's reservation (LrWaiter) or armed monitor (MWaiter).
    pub reservation_valid: bool,
}

/// Per-bank Colibri state: a fixed number of slots, each tracking the queue
/// of one address.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ColibriController {
    slots: Vec<Option<Slot>>,
}

impl ColibriController {
    pub fn new(addresses_per_bank: usize) -> Self {
        ColibriController { slots: vec![None; addresses_per_bank] }
    }

    pub fn slot(&self, addr: Addr) -> Option<&Slot> {
        self.slots.iter().flatten().find(|s| s.address == addr)
    }

    pub fn occupied(&self) -> usize {
        self.slots.iter().flatten().count()
    }

    fn index_of(&self, addr: Addr) -> Option<usize> {
        self.slots.iter().position(|s| s.is_some_and(|s| s.address == addr))
    }

    pub(crate) fn handle_wait(
        &mut self,
        core: CoreId,
        addr: Addr,
        kind: WaiterKind,
        ctx: &mut BankCtx<'_>,
    ) -> Result<(), SimError> {
        if let Some(i) = self.index_of(addr) {
            let slot = self.slots[i].as_mut().expect("occupied");
            if slot.tail == core || slot.head == core {
                return Err(SimError::DuplicateWaiter { core });
            }
            let prev = slot.tail;
            slot.tail = core;
            ctx.reply(prev, Message::SuccessorUpdate { addr, successor: core, waiter: kind });
            return Ok(());
        }
        let Some(free) = self.slots.iter().position(Option::is_none) else {
            ctx.reply(core, Message::FailResp { addr, code: SC_FAILURE });
            return Ok(());
        };
        self.slots[free] = Some(Slot {
            address: addr,
            head: core,
            head_kind: kind,
            head_valid: true,
            tail: core,
            reservation_valid: false,
        });
        self.serve_head(free, ctx);
        Ok(())
    }

    /// Respond to a freshly promoted head.
    fn serve_head(&mut self, i: usize, ctx: &mut BankCtx<'_>) {
        let slot = self.slots[i].as_mut().expect("occupied");
        let head = slot.head;
        let addr = slot.address;
        let value = ctx.mem.get(addr);
        match slot.head_kind {
            WaiterKind::LrWaiter => {
                slot.reservation_valid = true;
                ctx.reply(head, Message::LrWaitResp { addr, value });
            }
            WaiterKind::MWaiter { expected } if value == expected => slot.reservation_valid = true,
            WaiterKind::MWaiter { .. } => {
                ctx.reply(head, Message::MwaitResp { addr, value });
                self.release_head(i, ctx);
            }
        }
    }

    /// The head is done. A lone head frees the slot; otherwise the head is
    /// invalidated until its QNode's WakeUpRequest names the successor.
    fn release_head(&mut self, i: usize, ctx: &BankCtx<'_>) {
        let slot = self.slots[i].as_mut().expect("occupied");
        if slot.head == slot.tail {
            self.slots[i] = None;
        } else if !ctx.mutated(Mutation::SkipHeadInvalidation) {
            slot.head_valid = false;
            slot.reservation_valid = false;
        }
    }

    pub(crate) fn handle_scwait(&mut self, core: CoreId, addr: Addr, value: Word, ctx: &mut BankCtx<'_>) {
        let Some(i) = self.index_of(addr) else {
            ctx.reply(core, Message::ScWaitResp { addr, code: SC_FAILURE });
            return;
        };
        let slot = self.slots[i].as_mut().expect("occupied");
        if slot.head != core || !slot.head_valid || slot.head_kind != WaiterKind::LrWaiter {
            ctx.reply(core, Message::ScWaitResp { addr, code: SC_FAILURE });
            return;
        }
        let ok = slot.reservation_valid;
        if ok {
            ctx.mem.set(addr, value);
            slot.reservation_valid = false;
        }
        ctx.reply(core, Message::ScWaitResp { addr, code: if ok { SC_SUCCESS } else { SC_FAILURE } });
        self.release_head(i, ctx);
    }

    pub(crate) fn handle_wakeup(&mut self, addr: Addr, successor: CoreId, waiter: WaiterKind, ctx: &mut BankCtx<'_>) {
        let Some(i) = self.index_of(addr) else {
            ctx.anomaly(AnomalyKind::WakeUpWithoutSlot { addr });
            return;
        };
        let slot = self.slots[i].as_mut().expect("occupied");
        if slot.head_valid {
            ctx.anomaly(AnomalyKind::WakeUpWhileHeadValid { addr });
        }
        slot.head = if ctx.mutated(Mutation::WakeWrongSuccessor) { slot.tail } else { successor };
        slot.head_kind = waiter;
        slot.head_valid = true;
        slot.reservation_valid = false;
        let twice = ctx.mutated(Mutation::DoubleResponse) && waiter == WaiterKind::LrWaiter;
        self.serve_head(i, ctx);
        if twice {
            let value = ctx.mem.get(addr);
            let head = self.slots[i].map_or(successor, |s| s.head);
            ctx.reply(head, Message::LrWaitResp { addr, value });
        }
    }

    pub(crate) fn on_write(&mut self, addr: Addr, plain_store: bool, ctx: &mut BankCtx<'_>) {
        let Some(i) = self.index_of(addr) else { return };
        let slot = self.slots[i].as_mut().expect("occupied");
        if !slot.head_valid {
            return;
        }
        match slot.head_kind {
            WaiterKind::LrWaiter => {
                if !(plain_store && ctx.mutated(Mutation::ForgetStoreInvalidation)) {
                    slot.reservation_valid = false;
                }
            }
            WaiterKind::MWaiter { .. } if slot.reservation_valid => {
                let head = slot.head;
                ctx.reply(head, Message::MwaitResp { addr, value: ctx.mem.get(addr) });
                self.release_head(i, ctx);
            }
            WaiterKind::MWaiter { .. } => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::adapter::testutil::*;
    use crate::adapter::{Adapter, AdapterKind, Mutation};
    use crate::message::{Message, WaiterKind};
    use crate::sim::AnomalyKind;
    use crate::types::Addr;

    use super::Slot;

    fn slot(b: &TestBank, addr: Addr) -> Option<Slot> {
        let Adapter::Colibri(ctrl) = &b.adapter else { unreachable!() };
        ctrl.slot(addr).copied()
    }

    fn colibri(apb: u32) -> TestBank {
        TestBank::new(AdapterKind::Colibri { addresses_per_bank: apb })
    }

    #[test]
    fn single_core_claims_empty_slot() {
        let mut b = colibri(1);
        b.mem.set(A, 3);
        assert_eq!(b.serve(0, Message::LrWaitReq { addr: A }), vec![(c(0), Message::LrWaitResp { addr: A, value: 3 })]);
        let s = slot(&b, A).unwrap();
        assert_eq!((s.head, s.tail, s.head_valid, s.reservation_valid), (c(0), c(0), true, true));
    }

    #[test]
    fn second_waiter_triggers_successor_update_to_tail() {
        let mut b = colibri(1);
        b.serve(0, Message::LrWaitReq { addr: A });
        assert_eq!(
            b.serve(1, Message::LrWaitReq { addr: A }),
            vec![(c(0), Message::SuccessorUpdate { addr: A, successor: c(1), waiter: WaiterKind::LrWaiter })]
        );
        let s = slot(&b, A).unwrap();
        assert_eq!((s.head, s.tail), (c(0), c(1)));
        // A third waiter links behind the new tail, not the head.
        assert_eq!(
            b.serve(2, Message::LrWaitReq { addr: A }),
            vec![(c(1), Message::SuccessorUpdate { addr: A, successor: c(2), waiter: WaiterKind::LrWaiter })]
        );
    }

    #[test]
    fn slot_exhaustion_fails_immediately() {
        let mut b = colibri(1);
        b.serve(0, Message::LrWaitReq { addr: A });
        assert_eq!(b.serve(1, Message::LrWaitReq { addr: Addr(8) }), vec![(c(1), Message::FailResp { addr: Addr(8), code: 1 })]);
        assert!(slot(&b, Addr(8)).is_none());
    }

    #[test]
    fn lone_head_scwait_frees_slot() {
        let mut b = colibri(1);
        b.serve(0, Message::LrWaitReq { addr: A });
        assert_eq!(b.serve(0, Message::ScWaitReq { addr: A, value: 1 }), vec![(c(0), Message::ScWaitResp { addr: A, code: 0 })]);
        assert!(slot(&b, A).is_none());
        assert_eq!(b.mem.get(A), 1);
    }

    #[test]
    fn handoff_via_wakeup_request() {
        let mut b = colibri(1);
        b.serve(0, Message::LrWaitReq { addr: A });
        b.serve(1, Message::LrWaitReq { addr: A });
        assert_eq!(b.serve(0, Message::ScWaitReq { addr: A, value: 1 }), vec![(c(0), Message::ScWaitResp { addr: A, code: 0 })]);
        let s = slot(&b, A).unwrap();
        assert!(!s.head_valid, "head is invalidated until the wake-up");
        // A second SCwait from the old head cannot succeed.
        assert_eq!(b.serve(0, Message::ScWaitReq { addr: A, value: 9 }), vec![(c(0), Message::ScWaitResp { addr: A, code: 1 })]);
        assert_eq!(
            b.serve(0, Message::WakeUpRequest { addr: A, successor: c(1), waiter: WaiterKind::LrWaiter }),
            vec![(c(1), Message::LrWaitResp { addr: A, value: 1 })]
        );
        let s = slot(&b, A).unwrap();
        assert_eq!((s.head, s.tail, s.head_valid), (c(1), c(1), true));
        assert!(b.anomalies.is_empty());
    }

    #[test]
    fn store_before_wakeup_is_visible_to_successor() {
        let mut b = colibri(1);
        b.serve(0, Message::LrWaitReq { addr: A });
        b.serve(1, Message::LrWaitReq { addr: A });
        b.serve(0, Message::ScWaitReq { addr: A, value: 1 });
        b.serve(2, Message::Store { addr: A, value: 77 });
        assert_eq!(
            b.serve(0, Message::WakeUpRequest { addr: A, successor: c(1), waiter: WaiterKind::LrWaiter }),
            vec![(c(1), Message::LrWaitResp { addr: A, value: 77 })]
        );
    }

    #[test]
    fn intervening_store_fails_head_but_queue_moves_on() {
        let mut b = colibri(1);
        b.serve(0, Message::LrWaitReq { addr: A });
        b.serve(1, Message::LrWaitReq { addr: A });
        b.serve(2, Message::Store { addr: A, value: 5 });
        assert_eq!(b.serve(0, Message::ScWaitReq { addr: A, value: 1 }), vec![(c(0), Message::ScWaitResp { addr: A, code: 1 })]);
        assert_eq!(
            b.serve(0, Message::WakeUpRequest { addr: A, successor: c(1), waiter: WaiterKind::LrWaiter }),
            vec![(c(1), Message::LrWaitResp { addr: A, value: 5 })]
        );
    }

    #[test]
    fn mwait_short_circuit_and_write_trigger() {
        let mut b = colibri(2);
        b.mem.set(A, 5);
        assert_eq!(b.serve(0, Message::MwaitReq { addr: A, expected: 0 }), vec![(c(0), Message::MwaitResp { addr: A, value: 5 })]);
        assert!(slot(&b, A).is_none());

        let other = Addr(2);
        assert!(b.serve(1, Message::MwaitReq { addr: other, expected: 0 }).is_empty());
        let out = b.serve(2, Message::Store { addr: other, value: 1 });
        assert_eq!(out[0], (c(1), Message::MwaitResp { addr: other, value: 1 }));
        assert!(slot(&b, other).is_none());
    }

    #[test]
    fn wakeup_without_slot_is_flagged() {
        let mut b = colibri(1);
        b.serve(0, Message::WakeUpRequest { addr: A, successor: c(1), waiter: WaiterKind::LrWaiter });
        assert_eq!(b.anomalies[0].kind, AnomalyKind::WakeUpWithoutSlot { addr: A });
    }

    #[test]
    fn skip_head_invalidation_keeps_monitor_armed() {
        let mut b = colibri(1);
        b.mutation = Some(Mutation::SkipHeadInvalidation);
        b.serve(0, Message::MwaitReq { addr: A, expected: 0 });
        b.serve(1, Message::MwaitReq { addr: A, expected: 0 });
        b.serve(2, Message::Store { addr: A, value: 1 });
        // Correct hardware would wait for the WakeUpRequest; the mutant
        // answers the old head a second time.
        let out = b.serve(2, Message::Store { addr: A, value: 2 });
        assert_eq!(out[0], (c(0), Message::MwaitResp { addr: A, value: 2 }));
    }
}
