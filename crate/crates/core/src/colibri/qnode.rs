use crate::adapter::Mutation;
use crate::message::{Message, WaiterKind};
use crate::sim::AnomalyKind;
use crate::types::{Addr, CoreId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QNodePhase {
    Idle,
    /// LRwait or Mwait issued, response outstanding.
    Waiting,
    HoldingReservation,
    /// SCwait issued without a known successor.
    PastScWait,
}

impl QNodePhase {
    pub fn name(self) -> &'static str {
        match self {
            QNodePhase::Idle => "idle",
            QNodePhase::Waiting => "waiting",
            QNodePhase::HoldingReservation => "holding",
            QNodePhase::PastScWait => "past-scwait",
        }
    }

    pub fn from_name(s: &str) -> Option<QNodePhase> {
        [QNodePhase::Idle, QNodePhase::Waiting, QNodePhase::HoldingReservation, QNodePhase::PastScWait]
            .into_iter()
            .find(|p| p.name() == s)
    }
}

/// What the QNode did with a message arriving from memory.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct Received {
    /// Whether the message continues to the core.
    pub deliver: bool,
    pub send: Option<Message>,
    pub anomaly: Option<AnomalyKind>,
}

/// Per-core queue node. Sits between the core and the interconnect, records
/// the successor link and emits WakeUpRequests.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QNode {
    phase: QNodePhase,
    addr: Addr,
    successor: Option<(CoreId, WaiterKind)>,
}

impl Default for QNode {
    fn default() -> Self {
        QNode { phase: QNodePhase::Idle, addr: Addr(0), successor: None }
    }
}

impl QNode {
    pub fn phase(&self) -> QNodePhase {
        self.phase
    }

    pub fn successor(&self) -> Option<CoreId> {
        self.successor.map(|(c, _)| c)
    }

    fn wakeup(&mut self) -> Option<Message> {
        let (successor, waiter) = self.successor.take()?;
        Some(Message::WakeUpRequest { addr: self.addr, successor, waiter })
    }

    fn end_episode(&mut self) {
        self.phase = QNodePhase::Idle;
        self.successor = None;
    }

    /// A request leaving the core. Returns the messages that go out, in order.
    pub fn issue(&mut self, msg: Message) -> (Vec<Message>, Option<AnomalyKind>) {
        match msg {
            Message::LrWaitReq { addr } | Message::MwaitReq { addr, .. } => {
                let anomaly = (self.phase != QNodePhase::Idle).then_some(AnomalyKind::QNodeBusy { addr });
                self.phase = QNodePhase::Waiting;
                self.addr = addr;
                self.successor = None;
                (vec![msg], anomaly)
            }
            Message::ScWaitReq { addr, .. } if self.phase == QNodePhase::HoldingReservation && addr == self.addr => {
                match self.wakeup() {
                    Some(w) => {
                        self.end_episode();
                        (vec![msg, w], None)
                    }
                    None => {
                        self.phase = QNodePhase::PastScWait;
                        (vec![msg], None)
                    }
                }
            }
            _ => (vec![msg], None),
        }
    }

    pub fn receive(&mut self, msg: &Message, mutation: Option<Mutation>) -> Received {
        let mut r = Received { deliver: true, ..Received::default() };
        match *msg {
            Message::SuccessorUpdate { addr, successor, waiter } => {
                r.deliver = false;
                if mutation == Some(Mutation::DropSuccessorUpdate) {
                    return r;
                }
                if self.phase == QNodePhase::Idle || addr != self.addr {
                    r.anomaly = Some(AnomalyKind::SuccessorUpdateToIdle { addr });
                    return r;
                }
                if self.successor.is_some() {
                    r.anomaly = Some(AnomalyKind::DoubleSuccessorUpdate { addr });
                }
                self.successor = Some((successor, waiter));
                if self.phase == QNodePhase::PastScWait {
                    r.send = self.wakeup();
                    self.end_episode();
                }
            }
            Message::LrWaitResp { .. } if self.phase == QNodePhase::Waiting => {
                self.phase = QNodePhase::HoldingReservation;
            }
            Message::MwaitResp { .. } if self.phase == QNodePhase::Waiting => {
                r.send = self.wakeup();
                self.end_episode();
            }
            Message::FailResp { .. } if self.phase == QNodePhase::Waiting => self.end_episode(),
            Message::ScWaitResp { .. } if self.phase == QNodePhase::PastScWait => self.end_episode(),
            _ => {}
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: Addr = Addr(0);
    const B: CoreId = CoreId(1);

    fn su() -> Message {
        Message::SuccessorUpdate { addr: A, successor: B, waiter: WaiterKind::LrWaiter }
    }

    fn wake() -> Message {
        Message::WakeUpRequest { addr: A, successor: B, waiter: WaiterKind::LrWaiter }
    }

    #[test]
    fn successor_known_at_scwait_travels_with_it() {
        let mut q = QNode::default();
        q.issue(Message::LrWaitReq { addr: A });
        assert_eq!(q.receive(&su(), None), Received { deliver: false, send: None, anomaly: None });
        q.receive(&Message::LrWaitResp { addr: A, value: 0 }, None);
        assert_eq!(q.phase(), QNodePhase::HoldingReservation);
        let (out, _) = q.issue(Message::ScWaitReq { addr: A, value: 1 });
        assert_eq!(out, vec![Message::ScWaitReq { addr: A, value: 1 }, wake()]);
        assert_eq!(q.phase(), QNodePhase::Idle);
    }

    #[test]
    fn sleeping_node_accepts_successor() {
        let mut q = QNode::default();
        q.issue(Message::LrWaitReq { addr: A });
        q.receive(&su(), None);
        assert_eq!((q.phase(), q.successor()), (QNodePhase::Waiting, Some(B)));
    }

    #[test]
    fn late_successor_update_bounces() {
        let mut q = QNode::default();
        q.issue(Message::LrWaitReq { addr: A });
        q.receive(&Message::LrWaitResp { addr: A, value: 0 }, None);
        let (out, _) = q.issue(Message::ScWaitReq { addr: A, value: 1 });
        assert_eq!(out.len(), 1);
        assert_eq!(q.phase(), QNodePhase::PastScWait);
        assert_eq!(q.receive(&su(), None).send, Some(wake()));
        assert_eq!(q.phase(), QNodePhase::Idle);
    }

    #[test]
    fn lone_episode_ends_at_scwait_response() {
        let mut q = QNode::default();
        q.issue(Message::LrWaitReq { addr: A });
        q.receive(&Message::LrWaitResp { addr: A, value: 0 }, None);
        q.issue(Message::ScWaitReq { addr: A, value: 1 });
        q.receive(&Message::ScWaitResp { addr: A, code: 0 }, None);
        assert_eq!(q.phase(), QNodePhase::Idle);
    }

    #[test]
    fn mwait_response_forwards_wakeup() {
        let mut q = QNode::default();
        q.issue(Message::MwaitReq { addr: A, expected: 0 });
        q.receive(&su(), None);
        let r = q.receive(&Message::MwaitResp { addr: A, value: 1 }, None);
        assert_eq!((r.deliver, r.send), (true, Some(wake())));
    }

    #[test]
    fn successor_update_to_idle_node_is_flagged() {
        let mut q = QNode::default();
        assert_eq!(q.receive(&su(), None).anomaly, Some(AnomalyKind::SuccessorUpdateToIdle { addr: A }));
    }

    #[test]
    fn second_successor_update_is_flagged() {
        let mut q = QNode::default();
        q.issue(Message::LrWaitReq { addr: A });
        q.receive(&su(), None);
        assert_eq!(q.receive(&su(), None).anomaly, Some(AnomalyKind::DoubleSuccessorUpdate { addr: A }));
    }

    #[test]
    fn fail_response_leaves_no_state() {
        let mut q = QNode::default();
        q.issue(Message::LrWaitReq { addr: A });
        q.receive(&Message::FailResp { addr: A, code: 1 }, None);
        assert_eq!(q, QNode { addr: A, ..QNode::default() });
    }

    #[test]
    fn dropped_successor_update_mutation() {
        let mut q = QNode::default();
        q.issue(Message::LrWaitReq { addr: A });
        q.receive(&su(), Some(Mutation::DropSuccessorUpdate));
        assert_eq!(q.successor(), None);
    }

    #[test]
    fn phase_names_round_trip() {
        for p in [QNodePhase::Idle, QNodePhase::Waiting, QNodePhase::HoldingReservation, QNodePhase::PastScWait] {
            assert_eq!(QNodePhase::from_name(p.name()), Some(p));
        }
    }
}
