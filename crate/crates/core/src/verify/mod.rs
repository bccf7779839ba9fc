//! Safety and liveness checking, on single traces or exhaustively over all
//! delay interleavings of a small scenario.

mod explore;
mod monitor;
pub mod scenarios;

use std::collections::BTreeMap;

pub use explore::{colibri_equals_ideal, explore, explore_all, ExploreConfig, Exploration, Outcome, Scenario, Status, Verdict};
pub use monitor::{CoreEnd, Monitor, Property, Violation};

use crate::trace::{Trace, TraceRecord};

/// Check one recorded trace. Terminal checks that need a quiescent system
/// only apply when the trace ended in completion or deadlock.
pub fn check_trace(trace: &Trace) -> Vec<Violation> {
    let mut mon = Monitor::default();
    let mut ends: BTreeMap<u32, CoreEnd> = BTreeMap::new();
    let mut last = crate::types::Cycle::ZERO;
    let mut cores = trace.header.get("n_cores").and_then(|n| n.parse::<u32>().ok()).unwrap_or(0);
    for r in &trace.records {
        last = r.cycle();
        mon.observe(r);
        let seen = match r {
            TraceRecord::Message { src, dst, .. } => [*src, *dst].iter().find_map(|e| e.core()),
            TraceRecord::QNode { core, .. } => Some(*core),
            TraceRecord::CoreDone { core, complete, .. } => {
                ends.insert(core.0, CoreEnd::Done { complete: *complete });
                Some(*core)
            }
            _ => None,
        };
        if let Some(c) = seen {
            cores = cores.max(c.0 + 1);
        }
    }
    let ends: Vec<CoreEnd> = (0..cores).map(|c| ends.get(&c).copied().unwrap_or(CoreEnd::Blocked)).collect();
    let all_done = ends.iter().all(|e| matches!(e, CoreEnd::Done { .. }));
    let quiescent = match trace.outcome() {
        Some("deadlock") => true,
        Some("completed") => all_done,
        _ => false,
    };
    let complete_run = !matches!(trace.outcome(), Some("budget-exhausted") | None);
    if complete_run {
        mon.finish(last, &trace.final_memory(), &ends, quiescent);
    }
    mon.violations().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{AdapterKind, Mutation};
    use crate::message::Message;
    use crate::types::{Addr, BankId, CoreId, Cycle, Endpoint};

    fn quick() -> ExploreConfig {
        ExploreConfig { delays: vec![1, 2], ..Default::default() }
    }

    fn recorded(s: &Scenario) -> Trace {
        let mut m = s.machine().unwrap();
        m.enable_trace(false);
        let out = m.run(10_000).unwrap();
        m.finish_trace(out);
        Trace { header: s.header(), records: m.take_trace() }
    }

    #[test]
    fn handoff_holds_everywhere() {
        let e = explore(&scenarios::handoff(), &quick()).unwrap();
        assert!(e.all_hold(), "{:?}", e.violations);
        assert_eq!(e.outcomes.len(), 1);
    }

    #[test]
    fn clean_traces_pass_the_checker() {
        let s = scenarios::scripted("three", AdapterKind::Colibri { addresses_per_bank: 1 }, 1, vec![vec![crate::workloads::ScriptOp::Inc(Addr(0)); 2]; 3]);
        assert!(check_trace(&recorded(&s)).is_empty());
    }

    #[test]
    fn checker_flags_a_tampered_trace() {
        let mut t = recorded(&scenarios::handoff());
        // Pretend core 1 was answered before asking.
        let pos = t.records.iter().position(|r| matches!(r, TraceRecord::Message { msg: Message::LrWaitReq { .. }, .. })).unwrap();
        t.records.insert(
            pos,
            TraceRecord::Message {
                cycle: Cycle(1),
                src: Endpoint::Bank(BankId(0)),
                dst: Endpoint::Core(CoreId(1)),
                msg: Message::LrWaitResp { addr: Addr(0), value: 0 },
            },
        );
        let props: Vec<_> = check_trace(&t).iter().map(|v| v.property).collect();
        assert!(props.contains(&Property::NoLostWakeup), "{props:?}");
    }

    #[test]
    fn every_mutation_is_caught_with_a_counterexample() {
        for m in Mutation::ALL {
            let e = explore(&scenarios::mutation_scenario(m), &quick()).unwrap();
            let (v, trace) = e.violations.values().next().unwrap_or_else(|| panic!("{m} not caught"));
            assert!(!trace.records.is_empty(), "{m}: {v}");
            let text = trace.to_string();
            assert_eq!(text.parse::<Trace>().unwrap(), *trace);
        }
    }

    #[test]
    fn mutants_stop_at_first_violation() {
        let cfg = ExploreConfig { stop_at_first: true, ..quick() };
        let e = explore(&scenarios::mutation_scenario(Mutation::DoubleResponse), &cfg).unwrap();
        assert_eq!(e.violations.len(), 1);
        assert!(!e.complete);
    }

    #[test]
    fn capped_lrsc_can_starve() {
        let e = explore(&scenarios::lrsc_starvation(), &quick()).unwrap();
        assert_eq!(e.verdict(Property::StarvationFree).status, Status::Violated);
        assert!(e.verdict(Property::MutualExclusion).holds());
        assert!(e.verdict(Property::AtomicityOracle).holds());
    }

    #[test]
    fn tiny_budget_is_inconclusive() {
        let cfg = ExploreConfig { max_states: 3, ..quick() };
        let e = explore(&scenarios::handoff(), &cfg).unwrap();
        assert!(!e.complete);
        assert_eq!(e.verdict(Property::FifoService).status, Status::Inconclusive);
    }

    #[test]
    fn mwait_cascade_answers_each_waiter_once() {
        for adapter in [AdapterKind::Colibri { addresses_per_bank: 1 }, AdapterKind::LrscWaitIdeal] {
            for k in 1..=2 {
                let e = explore(&scenarios::mwait_cascade(adapter, k), &quick()).unwrap();
                assert!(e.all_hold(), "{adapter} k={k}: {:?}", e.violations);
            }
        }
    }

    #[test]
    fn colibri_matches_ideal_on_two_cores() {
        let s = scenarios::scripted(
            "pair",
            AdapterKind::Colibri { addresses_per_bank: 2 },
            1,
            vec![vec![crate::workloads::ScriptOp::Inc(Addr(0)), crate::workloads::ScriptOp::Inc(Addr(1))]; 2],
        );
        let (_, _, v) = colibri_equals_ideal(&s, &ExploreConfig::default()).unwrap();
        assert!(v.holds(), "{:?}", v.violation);
    }

    #[test]
    fn suite_enumerates_every_assignment() {
        let suite = scenarios::increment_suite(AdapterKind::LrscWaitIdeal);
        // sum over cores, addresses, ops of (addrs^ops)^cores, times two bank counts
        let expected: u32 = (1..=3u32)
            .flat_map(|n| (1..=2u32).flat_map(move |a| (1..=2u32).map(move |o| a.pow(o).pow(n))))
            .sum::<u32>()
            * 2;
        assert_eq!(suite.len() as u32, expected);
    }
}
