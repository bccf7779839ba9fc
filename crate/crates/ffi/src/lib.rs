//! C ABI over `colibri-core`.
//!
//! Every function returns a [`ColibriStatus`]; on failure a message is kept
//! for the calling thread and [`colibri_last_error`] returns it. Handles are
//! opaque and owned by the caller until passed to [`colibri_sim_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use colibri_core::adapter::{cost_model, AdapterKind, CostScheme};
use colibri_core::cli;
use colibri_core::config::Config;
use colibri_core::sim::{Machine, RunOutcome};
use colibri_core::trace::Trace;
use colibri_core::types::Addr;
use colibri_core::verify::{self, Status};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColibriStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Sim = 4,
    /// A verified property failed or a run did not complete.
    PropertyFailed = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColibriOutcome {
    Running = 0,
    Completed = 1,
    BudgetExhausted = 2,
    Deadlock = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ColibriStats {
    pub cycles: u64,
    pub ops: u64,
    pub retries: u64,
    pub hops: u64,
    pub bank_accesses: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ColibriCost {
    pub identifier_bits: u64,
    pub control_bits: u64,
    pub total_bits: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ColibriVerifyReport {
    pub states: u64,
    pub violated: u32,
    pub inconclusive: u32,
}

/// A configured machine.
pub struct ColibriSim {
    machine: Machine,
    budget: u64,
    header: std::collections::BTreeMap<String, String>,
    outcome: Option<RunOutcome>,
    trace: Vec<colibri_core::trace::TraceRecord>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn guard(f: impl FnOnce() -> Result<(), (ColibriStatus, String)>) -> ColibriStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ColibriStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ColibriStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, (ColibriStatus, String)> {
    if p.is_null() {
        return Err((ColibriStatus::NullPointer, "null string".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (ColibriStatus::InvalidUtf8, e.to_string()))
}

unsafe fn sim_mut<'a>(p: *mut ColibriSim) -> Result<&'a mut ColibriSim, (ColibriStatus, String)> {
    p.as_mut().ok_or((ColibriStatus::NullPointer, "null simulator handle".into()))
}

fn config(toml: &str) -> Result<Config, (ColibriStatus, String)> {
    Config::from_toml(toml, &[], None).map_err(|e| (ColibriStatus::Config, e.to_string()))
}

fn cli_err(e: cli::CliError) -> (ColibriStatus, String) {
    let status = if e.code() == cli::EXIT_CONFIG { ColibriStatus::Config } else { ColibriStatus::Sim };
    (status, e.to_string())
}

/// The message behind the last failed call on this thread; empty after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn colibri_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Build a simulator from TOML configuration text. With `record_trace` set
/// the event trace is kept for [`colibri_sim_trace`].
#[no_mangle]
pub unsafe extern "C" fn colibri_sim_new(toml: *const c_char, record_trace: bool, out: *mut *mut ColibriSim) -> ColibriStatus {
    guard(|| {
        if out.is_null() {
            return Err((ColibriStatus::NullPointer, "null output pointer".into()));
        }
        *out = ptr::null_mut();
        let cfg = config(text(toml)?)?;
        let (mut machine, budget, header) = cli::build(&cfg).map_err(cli_err)?;
        if record_trace {
            machine.enable_trace(true);
        }
        let sim = ColibriSim { machine, budget, header, outcome: None, trace: Vec::new() };
        *out = Box::into_raw(Box::new(sim));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn colibri_sim_free(sim: *mut ColibriSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Run to completion, deadlock or the cycle budget. `max_cycles` of 0 uses
/// the configured budget. A run that does not complete returns
/// `PROPERTY_FAILED` with the outcome still written.
#[no_mangle]
pub unsafe extern "C" fn colibri_sim_run(sim: *mut ColibriSim, max_cycles: u64, outcome: *mut ColibriOutcome) -> ColibriStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        if s.outcome.is_some() {
            return Err((ColibriStatus::Sim, "simulator already ran".into()));
        }
        let budget = if max_cycles == 0 { s.budget } else { max_cycles };
        let o = s.machine.run(budget).map_err(|e| (ColibriStatus::Sim, e.to_string()))?;
        s.machine.finish_trace(o);
        s.trace = s.machine.take_trace();
        s.outcome = Some(o);
        if let Some(out) = outcome.as_mut() {
            *out = match o {
                RunOutcome::Completed => ColibriOutcome::Completed,
                RunOutcome::BudgetExhausted => ColibriOutcome::BudgetExhausted,
                RunOutcome::Deadlock => ColibriOutcome::Deadlock,
            };
        }
        if o == RunOutcome::Completed {
            Ok(())
        } else {
            Err((ColibriStatus::PropertyFailed, format!("run ended in {o}")))
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn colibri_sim_stats(sim: *const ColibriSim, out: *mut ColibriStats) -> ColibriStatus {
    guard(|| {
        let s = sim.as_ref().ok_or((ColibriStatus::NullPointer, "null simulator handle".into()))?;
        let out = out.as_mut().ok_or((ColibriStatus::NullPointer, "null output pointer".into()))?;
        let st = s.machine.stats();
        *out = ColibriStats {
            cycles: s.machine.now().0,
            ops: st.iter().map(|c| c.ops).sum(),
            retries: st.iter().map(|c| c.retries).sum(),
            hops: s.machine.hops(),
            bank_accesses: s.machine.bank_accesses(),
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn colibri_sim_read_word(sim: *const ColibriSim, addr: u32, out: *mut u32) -> ColibriStatus {
    guard(|| {
        let s = sim.as_ref().ok_or((ColibriStatus::NullPointer, "null simulator handle".into()))?;
        let out = out.as_mut().ok_or((ColibriStatus::NullPointer, "null output pointer".into()))?;
        *out = s.machine.word(Addr(addr));
        Ok(())
    })
}

/// Copy the recorded trace text, NUL terminated, into `buf`. `needed`
/// receives the size including the terminator; pass a null `buf` to query
/// it.
#[no_mangle]
pub unsafe extern "C" fn colibri_sim_trace(sim: *const ColibriSim, buf: *mut c_char, len: usize, needed: *mut usize) -> ColibriStatus {
    guard(|| {
        let s = sim.as_ref().ok_or((ColibriStatus::NullPointer, "null simulator handle".into()))?;
        let text = Trace { header: s.header.clone(), records: s.trace.clone() }.to_string();
        let size = text.len() + 1;
        if let Some(n) = needed.as_mut() {
            *n = size;
        }
        if buf.is_null() {
            return Ok(());
        }
        if len < size {
            return Err((ColibriStatus::BufferTooSmall, format!("trace needs {size} bytes")));
        }
        ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, text.len());
        *buf.add(text.len()) = 0;
        Ok(())
    })
}

/// Explore every delay interleaving of the configured scenario, also
/// comparing with the ideal queue when the adapter is Colibri. Returns
/// `PROPERTY_FAILED` if any property is violated or undecided.
#[no_mangle]
pub unsafe extern "C" fn colibri_verify(toml: *const c_char, report: *mut ColibriVerifyReport) -> ColibriStatus {
    guard(|| {
        let cfg = config(text(toml)?)?;
        let scenario = cfg.scenario().map_err(|e| (ColibriStatus::Config, e.to_string()))?;
        let ecfg = cfg.verify.explore_config();
        let sim = |e: colibri_core::SimError| (ColibriStatus::Sim, e.to_string());
        let mut verdicts = Vec::new();
        let mut states = 0u64;
        let compare = cfg.verify.compare_ideal.unwrap_or(matches!(cfg.system.adapter, AdapterKind::Colibri { .. }));
        if compare {
            let (c, i, v) = verify::colibri_equals_ideal(&scenario, &ecfg).map_err(sim)?;
            states += (c.states + i.states) as u64;
            verdicts.extend(c.verdicts());
            verdicts.extend(i.verdicts());
            verdicts.push(v);
        } else {
            let e = verify::explore(&scenario, &ecfg).map_err(sim)?;
            states += e.states as u64;
            verdicts.extend(e.verdicts());
        }
        let violated = verdicts.iter().filter(|v| v.status == Status::Violated).count() as u32;
        let inconclusive = verdicts.iter().filter(|v| v.status == Status::Inconclusive).count() as u32;
        if let Some(r) = report.as_mut() {
            *r = ColibriVerifyReport { states, violated, inconclusive };
        }
        match verdicts.iter().find(|v| !v.holds()) {
            None => Ok(()),
            Some(v) => {
                let what = v.violation.as_ref().map_or_else(|| format!("{} undecided", v.property), |x| x.to_string());
                Err((ColibriStatus::PropertyFailed, what))
            }
        }
    })
}

/// Storage bits of `scheme` (`ideal`, `bounded:Q`, `colibri:A`).
#[no_mangle]
pub unsafe extern "C" fn colibri_cost_model(scheme: *const c_char, n_cores: u64, n_banks: u64, out: *mut ColibriCost) -> ColibriStatus {
    guard(|| {
        let scheme: CostScheme = text(scheme)?.parse().map_err(|e: String| (ColibriStatus::Config, e))?;
        let out = out.as_mut().ok_or((ColibriStatus::NullPointer, "null output pointer".into()))?;
        let c = cost_model(scheme, n_cores, n_banks).map_err(|e| (ColibriStatus::Config, e.to_string()))?;
        *out = ColibriCost { identifier_bits: c.identifier_bits, control_bits: c.control_bits, total_bits: c.total() };
        Ok(())
    })
}
