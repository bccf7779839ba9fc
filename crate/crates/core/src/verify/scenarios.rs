//! Named verification scenarios.

use crate::adapter::{AdapterKind, Mutation};
use crate::sim::SystemConfig;
use crate::types::Addr;
use crate::workloads::{Program, RmwFlavor, Script, ScriptOp};

use super::explore::Scenario;

pub const WAIT: RmwFlavor = RmwFlavor::LrscWait { fail_backoff: 1 };

/// Which RMW flavor suits an adapter.
pub fn flavor_for(adapter: AdapterKind) -> RmwFlavor {
    match adapter {
        AdapterKind::AmoOnly => RmwFlavor::Amo,
        AdapterKind::PlainLrSc => RmwFlavor::LrSc { backoff: 1, max_retries: Some(2) },
        _ => WAIT,
    }
}

/// One script per core, all starting at cycle 0.
pub fn scripted(name: impl Into<String>, adapter: AdapterKind, n_banks: usize, scripts: Vec<Vec<ScriptOp>>) -> Scenario {
    let flavor = flavor_for(adapter);
    let programs =
        scripts.into_iter().map(|ops| Program::Script(Script::new(ops, flavor, 0, 0))).collect::<Vec<_>>();
    Scenario::new(name, SystemConfig::new(programs.len(), n_banks, adapter), programs)
}

/// Two cores increment one word; B arrives while A holds the reservation.
pub fn handoff() -> Scenario {
    let adapter = AdapterKind::Colibri { addresses_per_bank: 1 };
    let programs = vec![
        Program::Script(Script::new(vec![ScriptOp::Inc(Addr(0))], WAIT, 0, 10)),
        Program::Script(Script::new(vec![ScriptOp::Inc(Addr(0))], WAIT, 6, 10)),
    ];
    Scenario::new("handoff", SystemConfig::new(2, 1, adapter), programs)
}

/// Every increment workload with up to three cores, two addresses, two
/// operations per core and two banks.
pub fn increment_suite(adapter: AdapterKind) -> Vec<Scenario> {
    let mut out = Vec::new();
    for n_cores in 1..=3usize {
        for n_addrs in 1..=2u32 {
            for n_ops in 1..=2u32 {
                let per_core = n_addrs.pow(n_ops);
                for banks in 1..=2usize {
                    for assign in 0..per_core.pow(n_cores as u32) {
                        let mut code = assign;
                        let scripts = (0..n_cores)
                            .map(|_| {
                                let mut seq = code % per_core;
                                code /= per_core;
                                (0..n_ops)
                                    .map(|_| {
                                        let a = seq % n_addrs;
                                        seq /= n_addrs;
                                        ScriptOp::Inc(Addr(a))
                                    })
                                    .collect()
                            })
                            .collect::<Vec<Vec<_>>>();
                        let name = format!(
                            "inc/{adapter}/cores={n_cores}/addrs={n_addrs}/ops={n_ops}/banks={banks}/#{assign}"
                        );
                        out.push(scripted(name, adapter, banks, scripts));
                    }
                }
            }
        }
    }
    out
}

/// `k` cores wait for word 0 to leave 0, one core stores 1.
pub fn mwait_cascade(adapter: AdapterKind, k: usize) -> Scenario {
    let mut scripts = vec![vec![ScriptOp::Mwait(Addr(0), 0)]; k];
    scripts.push(vec![ScriptOp::Store(Addr(0), 1)]);
    scripted(format!("mwait-cascade/{adapter}/k={k}"), adapter, 1, scripts)
}

/// Mwait whose expected value already differs returns at once.
pub fn mwait_short_circuit(adapter: AdapterKind) -> Scenario {
    let mut s = scripted(format!("mwait-short-circuit/{adapter}"), adapter, 1, vec![vec![ScriptOp::Mwait(Addr(0), 0)]]);
    s.init.push((Addr(0), 7));
    s
}

/// Plain LR/SC with a retry cap: a core can lose every attempt.
pub fn lrsc_starvation() -> Scenario {
    let inc = vec![ScriptOp::Inc(Addr(0)); 2];
    scripted("lrsc-starvation", AdapterKind::PlainLrSc, 1, vec![inc.clone(), inc.clone(), inc])
}

/// A scenario in which the given mutation is observable.
pub fn mutation_scenario(m: Mutation) -> Scenario {
    let adapter = AdapterKind::Colibri { addresses_per_bank: 1 };
    let inc = ScriptOp::Inc(Addr(0));
    let mut s = match m {
        Mutation::DropSuccessorUpdate | Mutation::DoubleResponse => {
            scripted("mutant", adapter, 1, vec![vec![inc], vec![inc]])
        }
        Mutation::WakeWrongSuccessor => scripted("mutant", adapter, 1, vec![vec![inc]; 3]),
        Mutation::SkipHeadInvalidation => scripted(
            "mutant",
            adapter,
            1,
            vec![
                vec![ScriptOp::Mwait(Addr(0), 0)],
                vec![ScriptOp::Mwait(Addr(0), 0)],
                vec![ScriptOp::Store(Addr(0), 1), ScriptOp::Store(Addr(0), 0), ScriptOp::Store(Addr(0), 2)],
            ],
        ),
        Mutation::ForgetStoreInvalidation => {
            let programs = vec![
                Program::Script(Script::new(vec![inc], WAIT, 0, 4)),
                Program::Script(Script::new(vec![ScriptOp::Store(Addr(0), 5)], WAIT, 0, 0)),
            ];
            Scenario::new("mutant", SystemConfig::new(2, 1, adapter), programs)
        }
    };
    s.name = format!("mutant/{m}");
    s.system.mutation = Some(m);
    s
}
