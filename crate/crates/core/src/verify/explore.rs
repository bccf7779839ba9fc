//! Exhaustive exploration of message delays.
//!
//! Every send is given each latency in the delay set, in every combination.
//! States are fingerprinted after rebasing the clock, so interleavings that
//! reconverge are explored once.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::hash::{Hash, Hasher};

use crate::error::SimError;
use crate::sim::{CoreStatus, Machine, SystemConfig};
use crate::trace::{Trace, TraceRecord};
use crate::types::{Addr, CoreId, Word};
use crate::workloads::Program;

use super::monitor::{CoreEnd, Monitor, Property, Violation};

/// A closed system to verify: every core is essential.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub system: SystemConfig,
    pub programs: Vec<Program>,
    pub init: Vec<(Addr, Word)>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, system: SystemConfig, programs: Vec<Program>) -> Self {
        Scenario { name: name.into(), system, programs, init: Vec::new() }
    }

    pub fn machine(&self) -> Result<Machine, SimError> {
        let mut m = Machine::new(self.system.clone(), self.programs.iter().cloned().map(|p| (p, true)).collect())?;
        for &(a, v) in &self.init {
            m.set_word(a, v);
        }
        Ok(m)
    }

    pub fn header(&self) -> BTreeMap<String, String> {
        let mut h = BTreeMap::new();
        h.insert("scenario".into(), self.name.clone());
        h.insert("adapter".into(), self.system.adapter.to_string());
        h.insert("n_cores".into(), self.system.n_cores.to_string());
        h.insert("n_banks".into(), self.system.n_banks.to_string());
        if let Some(m) = self.system.mutation {
            h.insert("mutation".into(), m.to_string());
        }
        h
    }
}

#[derive(Clone, Debug)]
pub struct ExploreConfig {
    pub delays: Vec<u64>,
    /// Distinct states before giving up with an inconclusive result.
    pub max_states: usize,
    /// Stop at the first violation of any property.
    pub stop_at_first: bool,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig { delays: vec![1, 2, 4], max_states: 2_000_000, stop_at_first: false }
    }
}

/// What a terminal state committed and left in memory.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Outcome {
    pub commits: Vec<(CoreId, Addr, Word)>,
    pub memory: BTreeMap<Addr, Word>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Holds,
    Violated,
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub property: Property,
    pub status: Status,
    pub violation: Option<Violation>,
    pub counterexample: Option<Trace>,
}

impl Verdict {
    pub fn holds(&self) -> bool {
        self.status == Status::Holds
    }
}

#[derive(Clone, Debug)]
pub struct Exploration {
    pub scenario: String,
    pub states: usize,
    pub terminals: usize,
    /// False when the state budget ran out.
    pub complete: bool,
    pub outcomes: BTreeSet<Outcome>,
    pub violations: BTreeMap<Property, (Violation, Trace)>,
}

impl Exploration {
    pub fn verdict(&self, property: Property) -> Verdict {
        match self.violations.get(&property) {
            Some((v, t)) => Verdict {
                property,
                status: Status::Violated,
                violation: Some(v.clone()),
                counterexample: Some(t.clone()),
            },
            None if !self.complete => Verdict { property, status: Status::Inconclusive, violation: None, counterexample: None },
            None => Verdict { property, status: Status::Holds, violation: None, counterexample: None },
        }
    }

    pub fn verdicts(&self) -> Vec<Verdict> {
        Property::PER_TRACE.iter().map(|&p| self.verdict(p)).collect()
    }

    pub fn all_hold(&self) -> bool {
        self.complete && self.violations.is_empty()
    }
}

struct Frame {
    machine: Machine,
    monitor: Monitor,
    key: u64,
    path_len: usize,
    sends: u32,
    combos: usize,
    next: usize,
}

fn fingerprint(m: &Machine, mon: &Monitor) -> u64 {
    let mut h = DefaultHasher::new();
    m.hash(&mut h);
    mon.hash(&mut h);
    h.finish()
}

enum Node {
    Branch,
    Terminal,
}

fn drain(m: &mut Machine, mon: &mut Monitor, path: &mut Vec<TraceRecord>) {
    for r in m.take_trace() {
        mon.observe(&r);
        path.push(r);
    }
    for a in m.take_anomalies() {
        mon.anomaly(&a);
    }
}

/// Run deterministically until sends need delays or nothing is left.
fn advance(m: &mut Machine, mon: &mut Monitor, path: &mut Vec<TraceRecord>) -> Result<Node, SimError> {
    loop {
        drain(m, mon, path);
        if m.pending_sends() > 0 {
            return Ok(Node::Branch);
        }
        if m.is_quiescent() {
            return Ok(Node::Terminal);
        }
        m.step_cycle()?;
        m.rebase();
    }
}

fn core_ends(m: &Machine) -> Vec<CoreEnd> {
    (0..m.config().n_cores)
        .map(|c| match m.status(CoreId(c as u32)) {
            CoreStatus::Done { complete } => CoreEnd::Done { complete },
            _ => CoreEnd::Blocked,
        })
        .collect()
}

/// The path so far, closed with final memory and an outcome line.
fn counterexample(s: &Scenario, m: &Machine, path: &[TraceRecord], result: &str) -> Trace {
    let mut records = path.to_vec();
    let cycle = m.now();
    let n = m.config().n_banks;
    for (addr, value) in m.memory() {
        records.push(TraceRecord::Final { cycle, bank: addr.bank(n), addr, value });
    }
    records.push(TraceRecord::Outcome { cycle, result: result.to_string() });
    Trace { header: s.header(), records }
}

struct Search<'a> {
    scenario: &'a Scenario,
    cfg: &'a ExploreConfig,
    result: Exploration,
}

impl Search<'_> {
    fn collect(&mut self, m: &Machine, mon: &Monitor, path: &[TraceRecord], result: &str) {
        for v in mon.violations() {
            if !self.result.violations.contains_key(&v.property) {
                let t = counterexample(self.scenario, m, path, result);
                self.result.violations.insert(v.property, (v.clone(), t));
            }
        }
    }

    fn done(&self) -> bool {
        self.cfg.stop_at_first && !self.result.violations.is_empty()
    }

    fn terminal(&mut self, m: &Machine, mut mon: Monitor, path: &[TraceRecord]) {
        self.result.terminals += 1;
        let ends = core_ends(m);
        mon.finish(m.now(), &m.memory(), &ends, true);
        let result = if m.all_essential_done() { "completed" } else { "deadlock" };
        self.collect(m, &mon, path, result);
        self.result.outcomes.insert(Outcome { commits: mon.commits().to_vec(), memory: m.memory() });
    }
}

pub fn explore(scenario: &Scenario, cfg: &ExploreConfig) -> Result<Exploration, SimError> {
    assert!(!cfg.delays.is_empty(), "empty delay set");
    let mut search = Search {
        scenario,
        cfg,
        result: Exploration {
            scenario: scenario.name.clone(),
            states: 0,
            terminals: 0,
            complete: true,
            outcomes: BTreeSet::new(),
            violations: BTreeMap::new(),
        },
    };
    let mut path = Vec::new();
    let mut m = scenario.machine()?;
    m.enable_trace(false);
    m.start()?;
    let mut mon = Monitor::default();
    let mut visited = HashSet::new();
    let mut on_stack = HashSet::new();
    let mut stack = Vec::new();

    let push = |m: Machine, mon: Monitor, key: u64, path_len: usize, stack: &mut Vec<Frame>| {
        let sends = m.pending_sends() as u32;
        let combos = cfg.delays.len().pow(sends);
        stack.push(Frame { machine: m, monitor: mon, key, path_len, sends, combos, next: 0 });
    };

    match advance(&mut m, &mut mon, &mut path)? {
        Node::Terminal => {
            search.terminal(&m, mon, &path);
            search.result.states = 1;
            return Ok(search.result);
        }
        Node::Branch => {
            let key = fingerprint(&m, &mon);
            visited.insert(key);
            on_stack.insert(key);
            search.result.states = 1;
            push(m, mon, key, path.len(), &mut stack);
        }
    }

    let mut delays = Vec::new();
    while let Some(top) = stack.last_mut() {
        if top.next == top.combos {
            on_stack.remove(&top.key);
            stack.pop();
            continue;
        }
        let mut idx = top.next;
        top.next += 1;
        delays.clear();
        for _ in 0..top.sends {
            delays.push(cfg.delays[idx % cfg.delays.len()]);
            idx /= cfg.delays.len();
        }
        path.truncate(top.path_len);
        let mut m = top.machine.clone();
        let mut mon = top.monitor.clone();
        m.commit_sends(&delays)?;
        let node = advance(&mut m, &mut mon, &mut path)?;
        search.collect(&m, &mon, &path, "violation");
        if search.done() {
            break;
        }
        let key = fingerprint(&m, &mon);
        if on_stack.contains(&key) {
            search.result.violations.entry(Property::StarvationFree).or_insert_with(|| {
                let v = Violation {
                    property: Property::StarvationFree,
                    cycle: m.now(),
                    detail: "a reachable cycle of states never lets every core finish".into(),
                };
                (v, counterexample(scenario, &m, &path, "livelock"))
            });
            if search.done() {
                break;
            }
            continue;
        }
        if !visited.insert(key) {
            continue;
        }
        search.result.states += 1;
        if search.result.states > cfg.max_states {
            search.result.complete = false;
            break;
        }
        match node {
            Node::Terminal => {
                search.terminal(&m, mon, &path);
                if search.done() {
                    break;
                }
            }
            Node::Branch => {
                on_stack.insert(key);
                push(m, mon, key, path.len(), &mut stack);
            }
        }
    }
    if search.done() {
        // Stopped early: not every state was seen, but a violation was.
        search.result.complete = false;
    }
    Ok(search.result)
}

/// Explore the scenario under Colibri and under the ideal wait queue and
/// compare the reachable outcomes.
pub fn colibri_equals_ideal(scenario: &Scenario, cfg: &ExploreConfig) -> Result<(Exploration, Exploration, Verdict), SimError> {
    let mut ideal = scenario.clone();
    ideal.system.adapter = crate::adapter::AdapterKind::LrscWaitIdeal;
    ideal.name = format!("{}/ideal", scenario.name);
    let c = explore(scenario, cfg)?;
    let i = explore(&ideal, cfg)?;
    let property = Property::ColibriEqualsIdeal;
    let verdict = if !c.complete || !i.complete {
        Verdict { property, status: Status::Inconclusive, violation: None, counterexample: None }
    } else if c.outcomes == i.outcomes {
        Verdict { property, status: Status::Holds, violation: None, counterexample: None }
    } else {
        let only_c = c.outcomes.difference(&i.outcomes).count();
        let only_i = i.outcomes.difference(&c.outcomes).count();
        Verdict {
            property,
            status: Status::Violated,
            violation: Some(Violation {
                property,
                cycle: crate::types::Cycle::ZERO,
                detail: format!("{only_c} outcomes only under colibri, {only_i} only under the ideal queue"),
            }),
            counterexample: None,
        }
    };
    Ok((c, i, verdict))
}

/// Explore many scenarios in parallel; results keep the input order.
pub fn explore_all(scenarios: &[Scenario], cfg: &ExploreConfig) -> Vec<Result<Exploration, SimError>> {
    use rayon::prelude::*;
    scenarios.par_iter().map(|s| explore(s, cfg)).collect()
}
