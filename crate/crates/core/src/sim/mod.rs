//! The simulated machine: cores with optional QNodes, banks with their
//! adapters, and the event queue between them.
//!
//! One call to [`Machine::step_cycle`] delivers every event due at the next
//! cycle, then lets each bank serve the front of its inbox. Sends produced
//! along the way wait in an outbox until [`Machine::commit_sends`] assigns
//! them latencies, which is where the explorer branches. Requests travel
//! `latency` cycles; responses leave the bank one cycle after service.

pub mod event;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::hash::{Hash, Hasher};

pub use event::{Event, EventQueue, Payload};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adapter::{Adapter, AdapterKind, BankCtx, Memory, Mutation};
use crate::colibri::QNode;
use crate::error::SimError;
use crate::message::{Message, MessageKind};
use crate::trace::TraceRecord;
use crate::types::{Addr, BankId, CoreId, Cycle, Endpoint, Word};
use crate::workloads::{Action, Io, Program, Resume};

/// Protocol-level oddities seen by a QNode, controller or core. A correct
/// protocol never produces them; the verifier reports them.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AnomalyKind {
    WakeUpWithoutSlot { addr: Addr },
    WakeUpWhileHeadValid { addr: Addr },
    SuccessorUpdateToIdle { addr: Addr },
    DoubleSuccessorUpdate { addr: Addr },
    QNodeBusy { addr: Addr },
    UnexpectedResponse { kind: MessageKind, addr: Addr },
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnomalyKind::WakeUpWithoutSlot { addr } => write!(f, "WakeUpRequest for {addr} without a slot"),
            AnomalyKind::WakeUpWhileHeadValid { addr } => write!(f, "WakeUpRequest for {addr} while the head is valid"),
            AnomalyKind::SuccessorUpdateToIdle { addr } => write!(f, "SuccessorUpdate for {addr} to a node outside an episode"),
            AnomalyKind::DoubleSuccessorUpdate { addr } => write!(f, "second SuccessorUpdate for {addr} in one episode"),
            AnomalyKind::QNodeBusy { addr } => write!(f, "wait on {addr} issued while the QNode is busy"),
            AnomalyKind::UnexpectedResponse { kind, addr } => write!(f, "unexpected {kind} for {addr}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Anomaly {
    pub cycle: Cycle,
    pub at: Endpoint,
    pub kind: AnomalyKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemConfig {
    pub n_cores: usize,
    pub n_banks: usize,
    pub latency: u64,
    pub adapter: AdapterKind,
    pub mutation: Option<Mutation>,
    /// Each backoff is lengthened by a uniform draw from `0..=backoff_jitter`.
    pub backoff_jitter: u64,
    /// Seeds the per-core jitter streams.
    pub seed: u64,
}

impl SystemConfig {
    pub fn new(n_cores: usize, n_banks: usize, adapter: AdapterKind) -> Self {
        SystemConfig { n_cores, n_banks, latency: 5, adapter, mutation: None, backoff_jitter: 0, seed: 0 }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_cores == 0 || self.n_banks == 0 {
            return Err(SimError::Config("n_cores and n_banks must be at least 1".into()));
        }
        if self.latency == 0 {
            return Err(SimError::Config("latency must be at least 1".into()));
        }
        self.adapter.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CoreStatus {
    Running,
    /// Blocked on the response to a request of this kind.
    Awaiting { req: MessageKind, addr: Addr },
    BackingOff,
    Done { complete: bool },
}

impl CoreStatus {
    /// Waiting for a deliberately withheld response.
    pub fn is_sleeping(self) -> bool {
        matches!(self, CoreStatus::Awaiting { req: MessageKind::LrWaitReq | MessageKind::MwaitReq, .. })
    }
}

fn answers(req: MessageKind, resp: MessageKind) -> bool {
    use MessageKind as K;
    matches!(
        (req, resp),
        (K::Load | K::LrReq, K::LoadResp)
            | (K::Store, K::StoreAck)
            | (K::AmoAdd, K::AmoResp)
            | (K::ScReq | K::ScWaitReq, K::ScWaitResp)
            | (K::LrWaitReq, K::LrWaitResp | K::FailResp)
            | (K::MwaitReq, K::MwaitResp | K::FailResp)
    )
}

/// Per-core counters; not part of the behavioural state.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoreStats {
    pub ops: u64,
    pub retries: u64,
    pub sent: u64,
    pub done_at: Option<Cycle>,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Core {
    program: Program,
    qnode: Option<QNode>,
    status: CoreStatus,
    essential: bool,
    jitter: Option<Jitter>,
}

/// Per-core backoff jitter stream.
#[derive(Clone, Debug)]
struct Jitter(ChaCha8Rng);

impl Jitter {
    fn new(seed: u64, core: usize) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&(core as u64).to_le_bytes());
        key[16] = 0x6a;
        Jitter(ChaCha8Rng::from_seed(key))
    }
}

impl PartialEq for Jitter {
    fn eq(&self, other: &Self) -> bool {
        self.0.get_seed() == other.0.get_seed() && self.0.get_word_pos() == other.0.get_word_pos()
    }
}

impl Eq for Jitter {}

impl Hash for Jitter {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.get_seed().hash(state);
        self.0.get_word_pos().hash(state);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Bank {
    adapter: Adapter,
    mem: Memory,
    inbox: VecDeque<(CoreId, Message)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Outgoing {
    src: Endpoint,
    dst: Endpoint,
    msg: Message,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunOutcome {
    Completed,
    BudgetExhausted,
    Deadlock,
}

impl RunOutcome {
    pub fn name(self) -> &'static str {
        match self {
            RunOutcome::Completed => "completed",
            RunOutcome::BudgetExhausted => "budget-exhausted",
            RunOutcome::Deadlock => "deadlock",
        }
    }
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct Machine {
    cfg: SystemConfig,
    queue: EventQueue,
    cores: Vec<Core>,
    banks: Vec<Bank>,
    outbox: Vec<Outgoing>,
    stats: Vec<CoreStats>,
    hops: u64,
    bank_accesses: u64,
    anomalies: Vec<Anomaly>,
    trace: Option<Vec<TraceRecord>>,
    slot_snapshots: bool,
    offset: u64,
    first_done: Option<(Cycle, Vec<u64>)>,
    started: bool,
}

/// Behavioural state only: the key the explorer memoizes on.
impl Hash for Machine {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.queue.hash(state);
        self.cores.hash(state);
        self.banks.hash(state);
        self.outbox.hash(state);
    }
}

impl Machine {
    /// `programs[i]` runs on core `i`; the flag marks cores whose completion
    /// ends the run (non-essential cores, such as pollers, may run forever).
    pub fn new(cfg: SystemConfig, programs: Vec<(Program, bool)>) -> Result<Self, SimError> {
        cfg.validate()?;
        if programs.len() != cfg.n_cores {
            return Err(SimError::Config(format!("{} programs for {} cores", programs.len(), cfg.n_cores)));
        }
        let colibri = cfg.adapter.is_colibri();
        let cores = programs
            .into_iter()
            .enumerate()
            .map(|(i, (program, essential))| Core {
                program,
                qnode: colibri.then(QNode::default),
                status: CoreStatus::Running,
                essential,
                jitter: (cfg.backoff_jitter > 0).then(|| Jitter::new(cfg.seed, i)),
            })
            .collect();
        let banks = (0..cfg.n_banks)
            .map(|_| Bank { adapter: Adapter::new(cfg.adapter), mem: Memory::default(), inbox: VecDeque::new() })
            .collect();
        Ok(Machine {
            stats: vec![CoreStats::default(); cfg.n_cores],
            cfg,
            queue: EventQueue::new(),
            cores,
            banks,
            outbox: Vec::new(),
            hops: 0,
            bank_accesses: 0,
            anomalies: Vec::new(),
            trace: None,
            slot_snapshots: false,
            offset: 0,
            first_done: None,
            started: false,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    /// Record a trace; `slots` adds Colibri slot snapshots after each service.
    pub fn enable_trace(&mut self, slots: bool) {
        self.trace = Some(Vec::new());
        self.slot_snapshots = slots;
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn set_word(&mut self, addr: Addr, value: Word) {
        let b = addr.bank(self.cfg.n_banks).index();
        self.banks[b].mem.set(addr, value);
    }

    pub fn word(&self, addr: Addr) -> Word {
        self.banks[addr.bank(self.cfg.n_banks).index()].mem.get(addr)
    }

    pub fn memory(&self) -> BTreeMap<Addr, Word> {
        self.banks.iter().flat_map(|b| b.mem.iter()).collect()
    }

    pub fn now(&self) -> Cycle {
        self.queue.now() + self.offset
    }

    pub fn stats(&self) -> &[CoreStats] {
        &self.stats
    }

    pub fn hops(&self) -> u64 {
        self.hops
    }

    pub fn bank_accesses(&self) -> u64 {
        self.bank_accesses
    }

    pub fn anomalies(&self) -> &[Anomaly] {
        &self.anomalies
    }

    pub fn take_anomalies(&mut self) -> Vec<Anomaly> {
        std::mem::take(&mut self.anomalies)
    }

    /// Cycle and per-core op counts when the first essential core finished.
    pub fn first_done(&self) -> Option<&(Cycle, Vec<u64>)> {
        self.first_done.as_ref()
    }

    pub fn status(&self, core: CoreId) -> CoreStatus {
        self.cores[core.index()].status
    }

    pub fn program(&self, core: CoreId) -> &Program {
        &self.cores[core.index()].program
    }

    pub fn qnode(&self, core: CoreId) -> Option<&QNode> {
        self.cores[core.index()].qnode.as_ref()
    }

    pub fn adapter(&self, bank: BankId) -> &Adapter {
        &self.banks[bank.index()].adapter
    }

    pub fn pending_sends(&self) -> usize {
        self.outbox.len()
    }

    pub fn all_essential_done(&self) -> bool {
        self.cores.iter().all(|c| !c.essential || matches!(c.status, CoreStatus::Done { .. }))
    }

    /// Nothing in flight, queued or waiting to be sent.
    pub fn is_quiescent(&self) -> bool {
        self.queue.is_empty() && self.outbox.is_empty() && self.banks.iter().all(|b| b.inbox.is_empty())
    }

    fn record(&mut self, rec: impl FnOnce(Cycle) -> TraceRecord) {
        let now = self.now();
        if let Some(t) = self.trace.as_mut() {
            t.push(rec(now));
        }
    }

    /// Step every core's program once. Must precede the first cycle.
    pub fn start(&mut self) -> Result<(), SimError> {
        assert!(!self.started, "machine already started");
        self.started = true;
        for c in 0..self.cores.len() {
            self.run_program(CoreId(c as u32), Resume::Start)?;
        }
        Ok(())
    }

    /// Assign delays to the outbox in order; responses add one cycle for
    /// leaving the bank.
    pub fn commit_sends(&mut self, delays: &[u64]) -> Result<(), SimError> {
        assert_eq!(delays.len(), self.outbox.len(), "one delay per pending send");
        let now = self.queue.now();
        for (out, &d) in std::mem::take(&mut self.outbox).into_iter().zip(delays) {
            let depart = match out.src {
                Endpoint::Bank(_) => now + 1,
                Endpoint::Core(c) => {
                    self.stats[c.index()].sent += 1;
                    now
                }
            };
            self.queue.schedule(depart + d, out.src, out.dst, out.msg)?;
            self.hops += 1;
        }
        Ok(())
    }

    pub fn commit_fixed(&mut self) -> Result<(), SimError> {
        let delays = vec![self.cfg.latency; self.outbox.len()];
        self.commit_sends(&delays)
    }

    /// Move the local clock to zero; the trace keeps absolute cycles.
    pub fn rebase(&mut self) {
        self.offset += self.queue.rebase();
    }

    /// Advance to the next cycle with work and process it. Returns false if
    /// there was none. The outbox must be empty.
    pub fn step_cycle(&mut self) -> Result<bool, SimError> {
        assert!(self.outbox.is_empty(), "commit pending sends first");
        let busy_banks = self.banks.iter().any(|b| !b.inbox.is_empty());
        let t = match (self.queue.next_time(), busy_banks) {
            (Some(t), true) => t.min(self.queue.now() + 1),
            (Some(t), false) => t,
            (None, true) => self.queue.now() + 1,
            (None, false) => return Ok(false),
        };
        self.queue.advance_to(t);
        while let Some(ev) = self.queue.pop_due()? {
            match (ev.dst, ev.payload) {
                (Endpoint::Bank(b), Payload::Message(msg)) => {
                    let Endpoint::Core(core) = ev.src else { unreachable!("banks only talk to cores") };
                    self.banks[b.index()].inbox.push_back((core, msg));
                }
                (Endpoint::Core(c), Payload::Message(msg)) => self.deliver(c, msg)?,
                (Endpoint::Core(c), Payload::Timer) => {
                    if self.cores[c.index()].status == CoreStatus::BackingOff {
                        self.cores[c.index()].status = CoreStatus::Running;
                        self.run_program(c, Resume::Timer)?;
                    }
                }
                (Endpoint::Bank(_), Payload::Timer) => unreachable!("banks have no timers"),
            }
        }
        for b in 0..self.banks.len() {
            self.serve(BankId(b as u32))?;
        }
        Ok(true)
    }

    fn serve(&mut self, bank: BankId) -> Result<(), SimError> {
        let Some((core, msg)) = self.banks[bank.index()].inbox.pop_front() else { return Ok(()) };
        self.bank_accesses += 1;
        let now = self.now();
        let mut out = Vec::new();
        let b = &mut self.banks[bank.index()];
        let mut ctx = BankCtx {
            bank,
            now,
            mem: &mut b.mem,
            out: &mut out,
            anomalies: &mut self.anomalies,
            mutation: self.cfg.mutation,
        };
        b.adapter.serve(core, &msg, &mut ctx)?;
        let (src, dst) = (Endpoint::Core(core), Endpoint::Bank(bank));
        let addr = msg.addr();
        self.record(|cycle| TraceRecord::Message { cycle, src, dst, msg });
        for (to, resp) in out {
            let (src, dst) = (Endpoint::Bank(bank), Endpoint::Core(to));
            self.record(|cycle| TraceRecord::Message { cycle, src, dst, msg: resp });
            self.outbox.push(Outgoing { src, dst, msg: resp });
        }
        if self.slot_snapshots {
            if let Adapter::Colibri(ctrl) = &self.banks[bank.index()].adapter {
                let slot = ctrl.slot(addr).copied();
                self.record(|cycle| TraceRecord::Slot {
                    cycle,
                    bank,
                    addr,
                    head: slot.map(|s| s.head),
                    tail: slot.map(|s| s.tail),
                    head_valid: slot.is_some_and(|s| s.head_valid),
                    reservation_valid: slot.is_some_and(|s| s.reservation_valid),
                });
            }
        }
        Ok(())
    }

    fn anomaly(&mut self, core: CoreId, kind: AnomalyKind) {
        self.anomalies.push(Anomaly { cycle: self.now(), at: Endpoint::Core(core), kind });
    }

    fn qnode_snapshot(&self, core: CoreId) -> Option<(crate::colibri::QNodePhase, Option<CoreId>)> {
        self.cores[core.index()].qnode.as_ref().map(|q| (q.phase(), q.successor()))
    }

    fn trace_qnode(&mut self, core: CoreId, before: Option<(crate::colibri::QNodePhase, Option<CoreId>)>) {
        let after = self.qnode_snapshot(core);
        if let (Some(b), Some((phase, successor))) = (before, after) {
            if b != (phase, successor) {
                self.record(|cycle| TraceRecord::QNode { cycle, core, phase, successor });
            }
        }
    }

    fn bank_of(&self, addr: Addr) -> Endpoint {
        Endpoint::Bank(addr.bank(self.cfg.n_banks))
    }

    fn deliver(&mut self, core: CoreId, msg: Message) -> Result<(), SimError> {
        let before = self.qnode_snapshot(core);
        let mutation = self.cfg.mutation;
        if let Some(q) = self.cores[core.index()].qnode.as_mut() {
            let r = q.receive(&msg, mutation);
            if let Some(send) = r.send {
                let dst = self.bank_of(send.addr());
                self.outbox.push(Outgoing { src: Endpoint::Core(core), dst, msg: send });
            }
            self.trace_qnode(core, before);
            if let Some(a) = r.anomaly {
                self.anomaly(core, a);
            }
            if !r.deliver {
                return Ok(());
            }
        }
        match self.cores[core.index()].status {
            CoreStatus::Awaiting { req, addr } if answers(req, msg.kind()) && addr == msg.addr() => {
                self.cores[core.index()].status = CoreStatus::Running;
                self.run_program(core, Resume::Reply(msg))
            }
            _ => {
                self.anomaly(core, AnomalyKind::UnexpectedResponse { kind: msg.kind(), addr: msg.addr() });
                Ok(())
            }
        }
    }

    fn run_program(&mut self, core: CoreId, mut resume: Resume) -> Result<(), SimError> {
        loop {
            let mut io = Io::default();
            let action = self.cores[core.index()].program.step(resume, &mut io);
            let stats = &mut self.stats[core.index()];
            stats.ops += io.ops;
            stats.retries += io.retries;
            match action {
                Action::Issue(msg) => {
                    let kind = msg.kind();
                    let addr = msg.addr();
                    let dst = self.bank_of(addr);
                    let before = self.qnode_snapshot(core);
                    let sends = match self.cores[core.index()].qnode.as_mut() {
                        Some(q) => {
                            let (sends, anomaly) = q.issue(msg);
                            if let Some(a) = anomaly {
                                self.anomaly(core, a);
                            }
                            sends
                        }
                        None => vec![msg],
                    };
                    self.trace_qnode(core, before);
                    for m in sends {
                        self.outbox.push(Outgoing { src: Endpoint::Core(core), dst, msg: m });
                    }
                    self.cores[core.index()].status = CoreStatus::Awaiting { req: kind, addr };
                    return Ok(());
                }
                Action::Delay(0) => resume = Resume::Timer,
                Action::Backoff(n) => {
                    let extra = match self.cores[core.index()].jitter.as_mut() {
                        Some(j) => j.0.gen_range(0..=self.cfg.backoff_jitter),
                        None => 0,
                    };
                    if n + extra == 0 {
                        resume = Resume::Timer;
                        continue;
                    }
                    self.queue.schedule_timer(self.queue.now() + n + extra, core)?;
                    self.cores[core.index()].status = CoreStatus::BackingOff;
                    return Ok(());
                }
                Action::Delay(n) => {
                    self.queue.schedule_timer(self.queue.now() + n, core)?;
                    self.cores[core.index()].status = CoreStatus::BackingOff;
                    return Ok(());
                }
                Action::Finished { complete } => {
                    let now = self.now();
                    self.cores[core.index()].status = CoreStatus::Done { complete };
                    let stats = &mut self.stats[core.index()];
                    stats.done_at = Some(now);
                    stats.complete = complete;
                    let (ops, retries) = (stats.ops, stats.retries);
                    self.record(|cycle| TraceRecord::CoreDone { cycle, core, ops, retries, complete });
                    if self.cores[core.index()].essential && self.first_done.is_none() {
                        self.first_done = Some((now, self.stats.iter().map(|s| s.ops).collect()));
                    }
                    return Ok(());
                }
            }
        }
    }

    /// Run with the configured fixed latency until every essential core is
    /// done, the machine deadlocks, or `max_cycles` pass.
    pub fn run(&mut self, max_cycles: u64) -> Result<RunOutcome, SimError> {
        if !self.started {
            self.start()?;
            self.commit_fixed()?;
        }
        let outcome = loop {
            if self.all_essential_done() {
                break RunOutcome::Completed;
            }
            if self.is_quiescent() {
                break RunOutcome::Deadlock;
            }
            if self.now().0 > max_cycles {
                break RunOutcome::BudgetExhausted;
            }
            self.step_cycle()?;
            self.commit_fixed()?;
        };
        Ok(outcome)
    }

    /// Append final memory and the outcome to the trace.
    pub fn finish_trace(&mut self, outcome: RunOutcome) {
        let n = self.cfg.n_banks;
        for (addr, value) in self.memory() {
            self.record(|cycle| TraceRecord::Final { cycle, bank: addr.bank(n), addr, value });
        }
        self.record(|cycle| TraceRecord::Outcome { cycle, result: outcome.name().to_string() });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::{RmwFlavor, Script, ScriptOp};

    fn script(ops: &[ScriptOp], flavor: RmwFlavor) -> (Program, bool) {
        (Program::Script(Script::new(ops.to_vec(), flavor, 0, 0)), true)
    }

    const WAIT: RmwFlavor = RmwFlavor::LrscWait { fail_backoff: 0 };

    #[test]
    fn single_store_takes_one_round_trip() {
        for latency in [1, 5, 9] {
            let mut cfg = SystemConfig::new(1, 1, AdapterKind::AmoOnly);
            cfg.latency = latency;
            let mut m = Machine::new(cfg, vec![script(&[ScriptOp::Store(Addr(0), 1)], WAIT)]).unwrap();
            assert_eq!(m.run(1000).unwrap(), RunOutcome::Completed);
            assert_eq!(m.stats()[0].done_at, Some(Cycle(2 * latency + 1)));
            assert_eq!(m.word(Addr(0)), 1);
        }
    }

    #[test]
    fn withheld_response_deadlocks() {
        let cfg = SystemConfig::new(1, 1, AdapterKind::LrscWaitIdeal);
        let mut m = Machine::new(cfg, vec![script(&[ScriptOp::Mwait(Addr(0), 0)], WAIT)]).unwrap();
        assert_eq!(m.run(1000).unwrap(), RunOutcome::Deadlock);
        assert!(m.status(CoreId(0)).is_sleeping());
    }

    #[test]
    fn contended_increments_are_atomic_on_every_adapter() {
        for (adapter, flavor) in [
            (AdapterKind::AmoOnly, RmwFlavor::Amo),
            (AdapterKind::PlainLrSc, RmwFlavor::LrSc { backoff: 3, max_retries: None }),
            (AdapterKind::LrscWaitIdeal, WAIT),
            (AdapterKind::LrscWaitBounded { q: 1 }, WAIT),
            (AdapterKind::Colibri { addresses_per_bank: 1 }, WAIT),
        ] {
            let ops = [ScriptOp::Inc(Addr(0)); 3];
            let cfg = SystemConfig::new(4, 2, adapter);
            let mut m = Machine::new(cfg, (0..4).map(|_| script(&ops, flavor)).collect()).unwrap();
            assert_eq!(m.run(100_000).unwrap(), RunOutcome::Completed, "{adapter}");
            assert_eq!(m.word(Addr(0)), 12, "{adapter}");
            assert!(m.anomalies().is_empty(), "{adapter}: {:?}", m.anomalies());
        }
    }

    #[test]
    fn identical_runs_give_identical_traces() {
        let run = || {
            let cfg = SystemConfig::new(3, 2, AdapterKind::Colibri { addresses_per_bank: 1 });
            let ops = [ScriptOp::Inc(Addr(0)), ScriptOp::Inc(Addr(1))];
            let mut m = Machine::new(cfg, (0..3).map(|_| script(&ops, WAIT)).collect()).unwrap();
            m.enable_trace(true);
            let out = m.run(10_000).unwrap();
            m.finish_trace(out);
            m.take_trace().iter().map(|r| r.to_string()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rebase_preserves_behaviour() {
        let build = || {
            let cfg = SystemConfig::new(2, 1, AdapterKind::Colibri { addresses_per_bank: 1 });
            let ops = [ScriptOp::Inc(Addr(0)); 2];
            Machine::new(cfg, (0..2).map(|_| script(&ops, WAIT)).collect()).unwrap()
        };
        let mut plain = build();
        let mut rebased = build();
        for m in [&mut plain, &mut rebased] {
            m.enable_trace(false);
            m.start().unwrap();
            m.commit_fixed().unwrap();
        }
        while plain.step_cycle().unwrap() {
            plain.commit_fixed().unwrap();
            rebased.step_cycle().unwrap();
            rebased.commit_fixed().unwrap();
            rebased.rebase();
        }
        assert_eq!(plain.take_trace(), rebased.take_trace());
        assert_eq!(plain.memory(), rebased.memory());
    }

    #[test]
    fn every_scheduled_event_is_delivered() {
        let cfg = SystemConfig::new(4, 2, AdapterKind::Colibri { addresses_per_bank: 1 });
        let ops = [ScriptOp::Inc(Addr(0)), ScriptOp::Store(Addr(1), 3), ScriptOp::Inc(Addr(0))];
        let mut m = Machine::new(cfg, (0..4).map(|_| script(&ops, WAIT)).collect()).unwrap();
        assert_eq!(m.run(10_000).unwrap(), RunOutcome::Completed);
        let (sent, delivered) = m.queue.counts();
        assert_eq!(sent, delivered);
        assert_eq!(m.hops(), sent);
    }
}
