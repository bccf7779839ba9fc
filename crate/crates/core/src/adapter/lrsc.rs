use crate::adapter::BankCtx;
use crate::message::{Message, SC_FAILURE, SC_SUCCESS};
use crate::types::{Addr, CoreId, Word};

/// Baseline LR/SC: one reservation slot per bank. A newer LR to any word of
/// the bank displaces the previous reservation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SingleReservation {
    reserved_core: Option<CoreId>,
    reserved_address: Addr,
    valid: bool,
}

impl SingleReservation {
    pub fn holder(&self) -> Option<(CoreId, Addr)> {
        match (self.valid, self.reserved_core) {
            (true, Some(c)) => Some((c, self.reserved_address)),
            _ => None,
        }
    }

    pub(crate) fn handle_lr(&mut self, core: CoreId, addr: Addr, ctx: &mut BankCtx<'_>) {
        self.reserved_core = Some(core);
        self.reserved_address = addr;
        self.valid = true;
        let value = ctx.mem.get(addr);
        ctx.reply(core, Message::LoadResp { addr, value });
    }

    pub(crate) fn handle_sc(&mut self, core: CoreId, addr: Addr, value: Word, ctx: &mut BankCtx<'_>) {
        let owns = self.reserved_core == Some(core);
        let ok = owns && self.valid && self.reserved_address == addr;
        if owns {
            self.valid = false;
        }
        let code = if ok {
            ctx.mem.set(addr, value);
            SC_SUCCESS
        } else {
            SC_FAILURE
        };
        ctx.reply(core, Message::ScWaitResp { addr, code });
    }

    pub(crate) fn on_write(&mut self, addr: Addr) {
        if self.reserved_address == addr {
            self.valid = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::adapter::testutil::*;
    use crate::adapter::{Adapter, AdapterKind};
    use crate::message::Message;
    use crate::types::Addr;

    fn sc(b: &mut TestBank, core: u32, addr: Addr, value: u32) -> u8 {
        match b.serve(core, Message::ScReq { addr, value }).as_slice() {
            [(_, Message::ScWaitResp { code, .. })] => *code,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lr_returns_value_and_reserves() {
        let mut b = TestBank::new(AdapterKind::PlainLrSc);
        b.mem.set(A, 7);
        assert_eq!(b.serve(0, Message::LrReq { addr: A }), vec![(c(0), Message::LoadResp { addr: A, value: 7 })]);
        let Adapter::LrSc(r) = &b.adapter else { unreachable!() };
        assert_eq!(r.holder(), Some((c(0), A)));
    }

    #[test]
    fn sc_with_valid_reservation_writes() {
        let mut b = TestBank::new(AdapterKind::PlainLrSc);
        b.serve(0, Message::LrReq { addr: A });
        assert_eq!(sc(&mut b, 0, A, 9), 0);
        assert_eq!(b.mem.get(A), 9);
        // The reservation is consumed.
        assert_eq!(sc(&mut b, 0, A, 10), 1);
        assert_eq!(b.mem.get(A), 9);
    }

    #[test]
    fn second_lr_on_bank_displaces_first() {
        let mut b = TestBank::new(AdapterKind::PlainLrSc);
        b.serve(0, Message::LrReq { addr: A });
        b.serve(1, Message::LrReq { addr: Addr(4) });
        assert_eq!(sc(&mut b, 0, A, 1), 1);
        assert_eq!(sc(&mut b, 1, Addr(4), 1), 0);
    }

    #[test]
    fn holder_may_move_its_reservation() {
        let mut b = TestBank::new(AdapterKind::PlainLrSc);
        b.serve(0, Message::LrReq { addr: A });
        b.serve(0, Message::LrReq { addr: Addr(4) });
        assert_eq!(sc(&mut b, 0, A, 1), 1);
    }

    #[test]
    fn intervening_store_fails_sc() {
        let mut b = TestBank::new(AdapterKind::PlainLrSc);
        b.serve(0, Message::LrReq { addr: A });
        b.serve(1, Message::Store { addr: A, value: 3 });
        assert_eq!(sc(&mut b, 0, A, 1), 1);
        assert_eq!(b.mem.get(A), 3);
    }

    #[test]
    fn store_to_other_word_keeps_reservation() {
        let mut b = TestBank::new(AdapterKind::PlainLrSc);
        b.serve(0, Message::LrReq { addr: A });
        b.serve(1, Message::Store { addr: Addr(8), value: 3 });
        assert_eq!(sc(&mut b, 0, A, 1), 0);
    }

    #[test]
    fn sc_without_lr_fails() {
        let mut b = TestBank::new(AdapterKind::PlainLrSc);
        assert_eq!(sc(&mut b, 0, A, 1), 1);
        assert_eq!(b.mem.get(A), 0);
    }

    #[test]
    fn failed_sc_of_other_core_keeps_holder() {
        let mut b = TestBank::new(AdapterKind::PlainLrSc);
        b.serve(0, Message::LrReq { addr: A });
        assert_eq!(sc(&mut b, 1, A, 5), 1);
        assert_eq!(sc(&mut b, 0, A, 6), 0);
    }
}
