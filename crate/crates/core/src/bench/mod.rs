//! Contention, queue-scaling and interference experiments.

pub mod plot;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::AdapterKind;
use crate::error::SimError;
use crate::sim::{Machine, RunOutcome, SystemConfig};
use crate::trace::{Trace, TraceRecord};
use crate::types::{CoreId, Endpoint};
use crate::workloads::{
    layout, BinPicker, LockKind, LockedCs, Program, QueueImpl, QueueOps, RmwFlavor, RmwLoop, Worker,
};

/// An atomic implementation under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Flavor {
    Amo,
    LrSc,
    Ideal,
    Bounded(u32),
    Colibri(u32),
    LockAmo,
    LockLrSc,
    LockColibri,
    LockMcs,
}

impl Flavor {
    pub fn adapter(self) -> AdapterKind {
        match self {
            Flavor::Amo | Flavor::LockAmo => AdapterKind::AmoOnly,
            Flavor::LrSc | Flavor::LockLrSc => AdapterKind::PlainLrSc,
            Flavor::Ideal => AdapterKind::LrscWaitIdeal,
            Flavor::Bounded(q) => AdapterKind::LrscWaitBounded { q },
            Flavor::Colibri(apb) => AdapterKind::Colibri { addresses_per_bank: apb },
            Flavor::LockColibri | Flavor::LockMcs => AdapterKind::Colibri { addresses_per_bank: 1 },
        }
    }

    /// The RMW used by lock-free flavors.
    pub fn rmw(self, backoff: u64) -> Option<RmwFlavor> {
        match self {
            Flavor::Amo => Some(RmwFlavor::Amo),
            Flavor::LrSc => Some(RmwFlavor::LrSc { backoff, max_retries: None }),
            Flavor::Ideal | Flavor::Bounded(_) | Flavor::Colibri(_) => Some(RmwFlavor::LrscWait { fail_backoff: 1 }),
            _ => None,
        }
    }

    pub fn lock(self) -> Option<LockKind> {
        match self {
            Flavor::LockAmo => Some(LockKind::SpinAmo),
            Flavor::LockLrSc => Some(LockKind::SpinLrSc),
            Flavor::LockColibri => Some(LockKind::SpinColibri),
            Flavor::LockMcs => Some(LockKind::McsMwait),
            _ => None,
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flavor::Amo => f.write_str("amo"),
            Flavor::LrSc => f.write_str("lrsc"),
            Flavor::Ideal => f.write_str("ideal"),
            Flavor::Bounded(q) => write!(f, "bounded:{q}"),
            Flavor::Colibri(apb) => write!(f, "colibri:{apb}"),
            Flavor::LockAmo => f.write_str("lock-amo"),
            Flavor::LockLrSc => f.write_str("lock-lrsc"),
            Flavor::LockColibri => f.write_str("lock-colibri"),
            Flavor::LockMcs => f.write_str("lock-mcs"),
        }
    }
}

impl FromStr for Flavor {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |v: &str| v.parse::<u32>().map_err(|_| format!("bad parameter in flavor `{s}`"));
        Ok(match s.split_once(':') {
            Some(("bounded", q)) => Flavor::Bounded(num(q)?),
            Some(("colibri", a)) => Flavor::Colibri(num(a)?),
            None => match s {
                "amo" => Flavor::Amo,
                "lrsc" => Flavor::LrSc,
                "ideal" => Flavor::Ideal,
                "colibri" => Flavor::Colibri(1),
                "lock-amo" => Flavor::LockAmo,
                "lock-lrsc" => Flavor::LockLrSc,
                "lock-colibri" => Flavor::LockColibri,
                "lock-mcs" => Flavor::LockMcs,
                _ => return Err(format!("unknown flavor `{s}`")),
            },
            _ => return Err(format!("unknown flavor `{s}`")),
        })
    }
}

impl TryFrom<String> for Flavor {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Flavor> for String {
    fn from(f: Flavor) -> String {
        f.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    Bins,
    Cores,
    Pollers,
}

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Sweep::Bins => "bins",
            Sweep::Cores => "cores",
            Sweep::Pollers => "pollers",
        }
    }
}

/// The three experiments of the harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Histogram,
    Queue,
    Interference,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::Histogram, Experiment::Queue, Experiment::Interference];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Histogram => "histogram",
            Experiment::Queue => "queue",
            Experiment::Interference => "interference",
        }
    }

    pub fn sweep(self) -> Sweep {
        match self {
            Experiment::Histogram => Sweep::Bins,
            Experiment::Queue => Sweep::Cores,
            Experiment::Interference => Sweep::Pollers,
        }
    }

    pub fn default_flavors(self) -> Vec<Flavor> {
        match self {
            Experiment::Histogram => {
                vec![Flavor::Amo, Flavor::Ideal, Flavor::Bounded(1), Flavor::Colibri(1), Flavor::LrSc]
            }
            _ => vec![Flavor::Amo, Flavor::LrSc, Flavor::Ideal, Flavor::Colibri(1)],
        }
    }

    /// Bins: powers of two up to four per core. Cores: powers of two up to
    /// `n_cores`. Pollers: none, then a quarter, half and all of the cores
    /// not working.
    pub fn default_values(self, p: &BenchParams) -> Vec<u64> {
        let pow2_to = |max: u64| (0..).map(|i| 1u64 << i).take_while(move |&v| v <= max).collect::<Vec<_>>();
        let n = p.n_cores as u64;
        match self {
            Experiment::Histogram => pow2_to(4 * n),
            Experiment::Queue => pow2_to(n),
            Experiment::Interference => {
                let free = n.saturating_sub(p.workers as u64);
                let mut v = vec![0];
                for x in [(n / 4).saturating_sub(p.workers as u64), (n / 2).saturating_sub(p.workers as u64), free] {
                    if x > *v.last().unwrap() {
                        v.push(x);
                    }
                }
                v
            }
        }
    }

    pub fn run(self, spec: &ExperimentSpec) -> Result<Vec<MetricRow>, BenchError> {
        match self {
            Experiment::Histogram => run_histogram(spec),
            Experiment::Queue => run_queue_scaling(spec),
            Experiment::Interference => run_interference(spec),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}` (histogram, queue, interference)"))
    }
}

/// System and workload parameters shared by every point of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchParams {
    pub n_cores: usize,
    pub n_banks: usize,
    pub latency: u64,
    /// Operations per core.
    pub iterations: u64,
    /// Cycles between reading and writing in an RMW.
    pub compute: u64,
    /// LR/SC retry and spin-lock backoff.
    pub backoff: u64,
    /// Seeded extra cycles, `0..=backoff_jitter`, added to each backoff.
    pub backoff_jitter: u64,
    pub cs_length: u64,
    /// Bins for queue pollers and interference pollers.
    pub bins: u32,
    pub workers: usize,
    pub worker_accesses: u64,
    pub worker_span: u32,
    pub worker_compute: u64,
    pub max_cycles: u64,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            n_cores: 64,
            n_banks: 256,
            latency: 5,
            iterations: 64,
            compute: 2,
            backoff: 128,
            backoff_jitter: 4,
            cs_length: 3,
            bins: 1,
            workers: 4,
            worker_accesses: 1024,
            worker_span: 16,
            worker_compute: 1,
            max_cycles: 50_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub sweep: Sweep,
    pub values: Vec<u64>,
    #[serde(default)]
    pub base: BenchParams,
    pub flavors: Vec<Flavor>,
    #[serde(default = "one")]
    pub repetitions: u32,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> u32 {
    1
}

impl ExperimentSpec {
    pub fn histogram(flavors: Vec<Flavor>, values: Vec<u64>) -> Self {
        ExperimentSpec {
            name: "histogram".into(),
            sweep: Sweep::Bins,
            values,
            base: BenchParams::default(),
            flavors,
            repetitions: 1,
            seed: 1,
        }
    }

    pub fn queue(flavors: Vec<Flavor>, values: Vec<u64>) -> Self {
        ExperimentSpec { name: "queue".into(), sweep: Sweep::Cores, ..Self::histogram(flavors, values) }
    }

    pub fn interference(flavors: Vec<Flavor>, values: Vec<u64>) -> Self {
        ExperimentSpec { name: "interference".into(), sweep: Sweep::Pollers, ..Self::histogram(flavors, values) }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.values.is_empty() {
            return Err(BenchError::Spec("values must not be empty".into()));
        }
        if self.flavors.is_empty() {
            return Err(BenchError::Spec("flavors must not be empty".into()));
        }
        if self.repetitions == 0 {
            return Err(BenchError::Spec("repetitions must be at least 1".into()));
        }
        if self.values.contains(&0) && self.sweep != Sweep::Pollers {
            return Err(BenchError::Spec(format!("{} sweep values must be at least 1", self.sweep.name())));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error("{flavor} is not available for the {experiment} experiment")]
    Unsupported { flavor: Flavor, experiment: &'static str },
    #[error("{flavor} at {sweep}={value} ended in {outcome} at cycle {cycle}; rerun with `simulate --trace` to inspect")]
    Aborted { flavor: Flavor, sweep: &'static str, value: u64, outcome: RunOutcome, cycle: u64 },
    #[error("{flavor} at bins={value}: bins hold {bins} but cores counted {ops} increments")]
    Conservation { flavor: Flavor, value: u64, bins: u64, ops: u64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One CSV row: a flavor at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub flavor: String,
    pub sweep_name: String,
    pub sweep_value: u64,
    pub throughput_ops_per_cycle: f64,
    pub ops_min: u64,
    pub ops_max: u64,
    pub retries: u64,
    pub msgs_per_op: f64,
    pub worker_rel_perf: Option<f64>,
    #[serde(skip)]
    pub ops_mean: f64,
    #[serde(skip)]
    pub bank_accesses_per_op: f64,
    #[serde(skip)]
    pub cycles: u64,
}

impl MetricRow {
    /// (max − min) / mean of per-core completed ops.
    pub fn spread(&self) -> f64 {
        if self.ops_mean == 0.0 {
            0.0
        } else {
            (self.ops_max - self.ops_min) as f64 / self.ops_mean
        }
    }
}

/// Raw numbers from one simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub cycles: u64,
    pub ops: u64,
    /// Essential cores' ops when the first of them finished.
    pub snapshot: Vec<u64>,
    pub retries: u64,
    pub hops: u64,
    pub bank_accesses: u64,
}

/// The first `essential` cores are the ones whose ops count for fairness.
fn run(machine: &mut Machine, essential: usize, flavor: Flavor, sweep: Sweep, value: u64, max_cycles: u64) -> Result<Sample, BenchError> {
    let outcome = machine.run(max_cycles)?;
    if outcome != RunOutcome::Completed {
        return Err(BenchError::Aborted { flavor, sweep: sweep.name(), value, outcome, cycle: machine.now().0 });
    }
    let stats = machine.stats();
    let (_, first) = machine.first_done().cloned().unwrap_or_default();
    let snapshot = (0..essential).map(|i| first.get(i).copied().unwrap_or(0)).collect();
    Ok(Sample {
        cycles: machine.now().0,
        ops: stats.iter().map(|s| s.ops).sum(),
        snapshot,
        retries: stats.iter().map(|s| s.retries).sum(),
        hops: machine.hops(),
        bank_accesses: machine.bank_accesses(),
    })
}

fn system(p: &BenchParams, n_cores: usize, adapter: AdapterKind, seed: u64) -> SystemConfig {
    let mut cfg = SystemConfig::new(n_cores, p.n_banks, adapter);
    cfg.latency = p.latency;
    cfg.backoff_jitter = p.backoff_jitter;
    cfg.seed = seed;
    cfg
}

/// The machine for one histogram run: every core performs `iterations`
/// increments on uniformly chosen bins out of `bins`.
pub fn histogram_machine(p: &BenchParams, flavor: Flavor, bins: u32, seed: u64) -> Result<Machine, BenchError> {
    let programs = (0..p.n_cores)
        .map(|c| {
            let core = CoreId(c as u32);
            let picker = BinPicker::new(seed, core, layout::BINS, bins);
            let prog = match (flavor.rmw(p.backoff), flavor.lock()) {
                (Some(rmw), _) => Program::RmwLoop(RmwLoop::new(rmw, picker, Some(p.iterations), p.compute)),
                (None, Some(kind)) => {
                    Program::LockedCs(LockedCs::new(kind, p.backoff, core, picker, p.iterations, p.cs_length))
                }
                (None, None) => unreachable!("every flavor is an RMW or a lock"),
            };
            (prog, true)
        })
        .collect();
    Ok(Machine::new(system(p, p.n_cores, flavor.adapter(), seed), programs)?)
}

pub fn histogram_point(p: &BenchParams, flavor: Flavor, bins: u32, seed: u64) -> Result<Sample, BenchError> {
    let mut m = histogram_machine(p, flavor, bins, seed)?;
    let s = run(&mut m, p.n_cores, flavor, Sweep::Bins, bins as u64, p.max_cycles)?;
    let in_bins: u64 = (0..bins).map(|b| m.word(layout::BINS.offset(b)) as u64).sum();
    if in_bins != s.ops {
        return Err(BenchError::Conservation { flavor, value: bins as u64, bins: in_bins, ops: s.ops });
    }
    Ok(s)
}

fn queue_impl(flavor: Flavor, p: &BenchParams) -> Result<QueueImpl, BenchError> {
    Ok(match flavor {
        Flavor::Amo | Flavor::LockAmo => QueueImpl::AmoLock { backoff: p.backoff },
        Flavor::LrSc => QueueImpl::Rmw { flavor: RmwFlavor::LrSc { backoff: p.backoff, max_retries: None }, mwait: false, poll_backoff: p.backoff },
        Flavor::Ideal | Flavor::Bounded(_) | Flavor::Colibri(_) => {
            QueueImpl::Rmw { flavor: RmwFlavor::LrscWait { fail_backoff: 1 }, mwait: true, poll_backoff: 0 }
        }
        _ => return Err(BenchError::Unsupported { flavor, experiment: "queue" }),
    })
}

/// `n_cores` cores alternate push and pop on one shared queue.
pub fn queue_machine(p: &BenchParams, flavor: Flavor, n_cores: usize, seed: u64) -> Result<Machine, BenchError> {
    let imp = queue_impl(flavor, p)?;
    let programs = (0..n_cores)
        .map(|c| (Program::Queue(QueueOps::new(imp, CoreId(c as u32), p.n_banks, p.iterations)), true))
        .collect();
    Ok(Machine::new(system(p, n_cores, flavor.adapter(), seed), programs)?)
}

pub fn queue_point(p: &BenchParams, flavor: Flavor, n_cores: usize, seed: u64) -> Result<Sample, BenchError> {
    let mut m = queue_machine(p, flavor, n_cores, seed)?;
    run(&mut m, n_cores, flavor, Sweep::Cores, n_cores as u64, p.max_cycles)
}

/// Workers only; the interference baseline.
pub fn workers_alone(p: &BenchParams) -> Result<Sample, BenchError> {
    interference_point(p, Flavor::Amo, 0, 0)
}

/// `p.workers` workers stream through a region that shares banks with the
/// polled bins while `pollers` cores increment forever.
pub fn interference_machine(p: &BenchParams, flavor: Flavor, pollers: usize, seed: u64) -> Result<Machine, BenchError> {
    let rmw = flavor.rmw(p.backoff).ok_or(BenchError::Unsupported { flavor, experiment: "interference" })?;
    let n = p.workers + pollers;
    let programs = (0..n)
        .map(|c| {
            if c < p.workers {
                let offset = (c as u32 * 4) % p.worker_span.max(1);
                (Program::Worker(Worker::new(p.worker_accesses, 1, p.worker_span, offset, p.worker_compute)), true)
            } else {
                let picker = BinPicker::new(seed, CoreId(c as u32), layout::BINS, p.bins);
                (Program::RmwLoop(RmwLoop::new(rmw, picker, None, p.compute)), false)
            }
        })
        .collect();
    Ok(Machine::new(system(p, n, flavor.adapter(), seed), programs)?)
}

pub fn interference_point(p: &BenchParams, flavor: Flavor, pollers: usize, seed: u64) -> Result<Sample, BenchError> {
    let mut m = interference_machine(p, flavor, pollers, seed)?;
    run(&mut m, p.workers, flavor, Sweep::Pollers, pollers as u64, p.max_cycles)
}

/// The machine behind one point of a sweep.
pub fn point_machine(p: &BenchParams, sweep: Sweep, flavor: Flavor, value: u64, seed: u64) -> Result<Machine, BenchError> {
    match sweep {
        Sweep::Bins => histogram_machine(p, flavor, value as u32, seed),
        Sweep::Cores => queue_machine(p, flavor, value as usize, seed),
        Sweep::Pollers => interference_machine(p, flavor, value as usize, seed),
    }
}

fn aggregate(spec: &ExperimentSpec, flavor: Flavor, value: u64, samples: &[Sample], baseline: Option<u64>) -> MetricRow {
    let reps = samples.len() as f64;
    let throughput = samples.iter().map(|s| s.ops as f64 / s.cycles.max(1) as f64).sum::<f64>() / reps;
    let all: Vec<u64> = samples.iter().flat_map(|s| s.snapshot.iter().copied()).collect();
    let ops_mean = if all.is_empty() { 0.0 } else { all.iter().sum::<u64>() as f64 / all.len() as f64 };
    let ops: u64 = samples.iter().map(|s| s.ops).sum::<u64>().max(1);
    MetricRow {
        flavor: flavor.to_string(),
        sweep_name: spec.sweep.name().to_string(),
        sweep_value: value,
        throughput_ops_per_cycle: throughput,
        ops_min: all.iter().copied().min().unwrap_or(0),
        ops_max: all.iter().copied().max().unwrap_or(0),
        retries: samples.iter().map(|s| s.retries).sum(),
        msgs_per_op: samples.iter().map(|s| s.hops).sum::<u64>() as f64 / ops as f64,
        worker_rel_perf: baseline.map(|t0| {
            samples.iter().map(|s| t0 as f64 / s.cycles.max(1) as f64).sum::<f64>() / reps
        }),
        ops_mean,
        bank_accesses_per_op: samples.iter().map(|s| s.bank_accesses).sum::<u64>() as f64 / ops as f64,
        cycles: samples.iter().map(|s| s.cycles).sum::<u64>() / samples.len() as u64,
    }
}

fn sweep(
    spec: &ExperimentSpec,
    baseline: Option<u64>,
    point: impl Fn(Flavor, u64, u64) -> Result<Sample, BenchError> + Sync,
) -> Result<Vec<MetricRow>, BenchError> {
    spec.validate()?;
    let jobs: Vec<(Flavor, u64)> =
        spec.flavors.iter().flat_map(|&f| spec.values.iter().map(move |&v| (f, v))).collect();
    jobs.par_iter()
        .map(|&(f, v)| {
            let samples = (0..spec.repetitions)
                .map(|r| point(f, v, spec.seed.wrapping_add(r as u64)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(aggregate(spec, f, v, &samples, baseline))
        })
        .collect()
}

pub fn run_histogram(spec: &ExperimentSpec) -> Result<Vec<MetricRow>, BenchError> {
    sweep(spec, None, |f, v, seed| histogram_point(&spec.base, f, v as u32, seed))
}

pub fn run_queue_scaling(spec: &ExperimentSpec) -> Result<Vec<MetricRow>, BenchError> {
    sweep(spec, None, |f, v, seed| queue_point(&spec.base, f, v as usize, seed))
}

pub fn run_interference(spec: &ExperimentSpec) -> Result<Vec<MetricRow>, BenchError> {
    let t0 = workers_alone(&spec.base)?.cycles;
    sweep(spec, Some(t0), |f, v, seed| interference_point(&spec.base, f, v as usize, seed))
}

pub fn write_csv<W: std::io::Write>(rows: &[MetricRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "flavor",
            "sweep_name",
            "sweep_value",
            "throughput_ops_per_cycle",
            "ops_min",
            "ops_max",
            "retries",
            "msgs_per_op",
            "worker_rel_perf",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<MetricRow>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(BenchError::from)).collect()
}

/// Traffic per successful operation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyProxy {
    pub hops: u64,
    pub bank_accesses: u64,
    pub ops: u64,
}

impl EnergyProxy {
    pub fn hops_per_op(&self) -> f64 {
        self.hops as f64 / self.ops.max(1) as f64
    }

    pub fn bank_accesses_per_op(&self) -> f64 {
        self.bank_accesses as f64 / self.ops.max(1) as f64
    }
}

/// Every message line is one interconnect hop; requests are the bank
/// accesses; successful ops come from the per-core completion lines.
pub fn energy_proxy(trace: &Trace) -> EnergyProxy {
    let mut e = EnergyProxy { hops: 0, bank_accesses: 0, ops: 0 };
    for r in &trace.records {
        match r {
            TraceRecord::Message { dst: Endpoint::Bank(_), .. } => {
                e.hops += 1;
                e.bank_accesses += 1;
            }
            TraceRecord::Message { .. } => e.hops += 1,
            TraceRecord::CoreDone { ops, .. } => e.ops += ops,
            _ => {}
        }
    }
    e
}
