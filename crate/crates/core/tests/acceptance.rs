//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use colibri_core::adapter::{cost_model, AdapterKind, CostScheme, Mutation};
use colibri_core::bench::{self, ExperimentSpec, Flavor, MetricRow};
use colibri_core::message::Message;
use colibri_core::trace::{Trace, TraceRecord};
use colibri_core::types::{CoreId, Endpoint};
use colibri_core::verify::{self, scenarios, ExploreConfig, Property, Scenario};
use rayon::prelude::*;

const LATENCIES: [u64; 3] = [3, 5, 8];
const GOLDEN: &str = include_str!("golden/handoff.trace");

type Check = Result<String, String>;
type Criterion<'a> = (&'a str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, t: Duration, what: &str) -> Result<(), String> {
    ensure(t < limit, || format!("{what} took {:.1}s, limit {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))
}

fn record(s: &Scenario) -> Trace {
    let mut m = s.machine().expect("scenario builds");
    m.enable_trace(true);
    let out = m.run(100_000).expect("scenario runs");
    m.finish_trace(out);
    Trace { header: s.header(), records: m.take_trace() }
}

fn bins() -> Vec<u64> {
    (0..=8).map(|i| 1u64 << i).collect()
}

/// Histogram sweeps at 64 cores, shared by several criteria.
struct Histograms {
    by_latency: BTreeMap<u64, (Vec<MetricRow>, Duration)>,
}

impl Histograms {
    fn run() -> Result<Self, String> {
        let flavors = vec![Flavor::Amo, Flavor::Ideal, Flavor::Bounded(1), Flavor::Colibri(1), Flavor::LrSc];
        let mut by_latency = BTreeMap::new();
        for l in LATENCIES {
            let mut spec = ExperimentSpec::histogram(flavors.clone(), bins());
            spec.base.latency = l;
            let t = Instant::now();
            let rows = bench::run_histogram(&spec).map_err(|e| format!("latency {l}: {e}"))?;
            by_latency.insert(l, (rows, t.elapsed()));
        }
        Ok(Histograms { by_latency })
    }

    fn row(&self, latency: u64, flavor: &str, bins: u64) -> &MetricRow {
        self.by_latency[&latency]
            .0
            .iter()
            .find(|r| r.flavor == flavor && r.sweep_value == bins)
            .unwrap_or_else(|| panic!("no row for {flavor} at {bins} bins"))
    }

    fn tput(&self, latency: u64, flavor: &str, bins: u64) -> f64 {
        self.row(latency, flavor, bins).throughput_ops_per_cycle
    }
}

fn golden_trace() -> Check {
    let t = Instant::now();
    let trace = record(&scenarios::handoff());
    let elapsed = t.elapsed();
    let text = trace.to_string();
    if text != GOLDEN {
        let want: Trace = GOLDEN.parse().map_err(|e| format!("golden file does not parse: {e}"))?;
        let diff = colibri_core::cli::first_difference(&want, &trace).unwrap_or_else(|| "formatting differs".into());
        return Err(format!("trace differs from golden: {diff}"));
    }
    let (a, b) = (Endpoint::Core(CoreId(0)), Endpoint::Core(CoreId(1)));
    let protocol: Vec<_> = trace
        .messages()
        .filter(|(_, _, _, m)| !matches!(m, Message::ScWaitResp { .. }))
        .map(|(_, s, d, m)| (s, d, *m))
        .collect();
    let expect_kinds = ["LrWaitReq", "LrWaitResp", "LrWaitReq", "SuccessorUpdate", "ScWaitReq", "WakeUpRequest", "LrWaitResp"];
    let got_kinds: Vec<_> = protocol.iter().take(7).map(|(_, _, m)| m.kind().to_string()).collect();
    ensure(got_kinds == expect_kinds, || format!("message order {got_kinds:?}"))?;
    let endpoints = [(a, true), (a, false), (b, true), (a, false), (a, true), (a, true), (b, false)];
    for (i, ((s, d, _), (who, outbound))) in protocol.iter().zip(endpoints).enumerate() {
        let side = if outbound { *s } else { *d };
        ensure(side == who, || format!("message {i} has endpoints {s} -> {d}"))?;
    }
    let written = protocol.iter().find_map(|(_, _, m)| match m {
        Message::ScWaitReq { value, .. } => Some(*value),
        _ => None,
    });
    let Message::LrWaitResp { value: handed, .. } = protocol[6].2 else { unreachable!() };
    ensure(Some(handed) == written, || format!("B read {handed}, A wrote {written:?}"))?;
    let wake = trace
        .records
        .iter()
        .position(|r| matches!(r, TraceRecord::Message { msg: Message::WakeUpRequest { .. }, .. }))
        .ok_or("no WakeUpRequest")?;
    let after = trace.records[wake..].iter().find_map(|r| match r {
        TraceRecord::Slot { head, tail, .. } => Some((*head, *tail)),
        _ => None,
    });
    ensure(after == Some((Some(CoreId(1)), Some(CoreId(1)))), || format!("slot after wake-up is {after:?}"))?;
    within(Duration::from_secs(1), elapsed, "handoff run")?;
    Ok(format!("{} records bit-exact, head=tail=B, {:.1} ms", trace.records.len(), elapsed.as_secs_f64() * 1e3))
}

fn exhaustive() -> Check {
    const NAMED: [Property; 5] = [
        Property::MutualExclusion,
        Property::FifoService,
        Property::NoLostWakeup,
        Property::DeadlockFree,
        Property::StarvationFree,
    ];
    let cfg = ExploreConfig::default();
    ensure(cfg.delays.len() >= 2, || "fewer than two delay choices".into())?;
    let t = Instant::now();
    let suite = scenarios::increment_suite(AdapterKind::Colibri { addresses_per_bank: 2 });
    let failures: Vec<String> = suite
        .par_iter()
        .filter_map(|s| {
            let (c, i, eq) = match verify::colibri_equals_ideal(s, &cfg) {
                Ok(r) => r,
                Err(e) => return Some(format!("{}: {e}", s.name)),
            };
            for e in [&c, &i] {
                for p in NAMED {
                    let v = e.verdict(p);
                    if !v.holds() {
                        return Some(format!("{}: {} {:?} {:?}", e.scenario, p.name(), v.status, v.violation));
                    }
                }
                if !e.all_hold() {
                    return Some(format!("{}: {:?}", e.scenario, e.violations.keys().collect::<Vec<_>>()));
                }
            }
            (!eq.holds()).then(|| format!("{}: colibri differs from ideal: {:?}", s.name, eq.violation))
        })
        .collect();
    let elapsed = t.elapsed();
    ensure(failures.is_empty(), || format!("{} failures, first: {}", failures.len(), failures[0]))?;
    within(Duration::from_secs(300), elapsed, "suite")?;
    Ok(format!("{} scenarios x 2 adapters, delays {:?}, {:.1}s", suite.len(), cfg.delays, elapsed.as_secs_f64()))
}

fn mutations() -> Check {
    let t = Instant::now();
    let cfg = ExploreConfig::default();
    let mut caught = Vec::new();
    for m in Mutation::ALL {
        let e = verify::explore(&scenarios::mutation_scenario(m), &cfg).map_err(|e| format!("{m}: {e}"))?;
        let (v, trace) = e.violations.values().next().ok_or_else(|| format!("{m} was not caught"))?;
        ensure(!trace.records.is_empty(), || format!("{m}: empty counterexample"))?;
        let back: Trace = trace.to_string().parse().map_err(|e| format!("{m}: counterexample does not parse: {e}"))?;
        ensure(back == *trace, || format!("{m}: counterexample does not round-trip"))?;
        caught.push(format!("{m}:{}", v.property.name()));
    }
    within(Duration::from_secs(300), t.elapsed(), "mutation search")?;
    Ok(format!("{}/5 caught ({})", caught.len(), caught.join(", ")))
}

fn retry_freedom(h: &Histograms) -> Check {
    let mut runs = 0;
    for l in LATENCIES {
        for r in &h.by_latency[&l].0 {
            if r.flavor == "colibri:1" || r.flavor == "ideal" {
                ensure(r.retries == 0, || format!("{} at latency {l}, {} bins retried {} times", r.flavor, r.sweep_value, r.retries))?;
                runs += 1;
            }
        }
    }
    let mut lrsc = Vec::new();
    for cores in [16, 64] {
        let p = bench::BenchParams { n_cores: cores, ..Default::default() };
        let s = bench::histogram_point(&p, Flavor::LrSc, 1, 1).map_err(|e| e.to_string())?;
        ensure(s.retries > 0, || format!("lrsc at 1 bin, {cores} cores had no retries"))?;
        lrsc.push(format!("{cores} cores: {}", s.retries));
    }
    Ok(format!("{runs} wait-queue runs with 0 retries; lrsc retries at 1 bin {}", lrsc.join(", ")))
}

fn throughput(h: &Histograms) -> Check {
    let mut worst_near = f64::INFINITY;
    let mut worst_gap = f64::INFINITY;
    for l in LATENCIES {
        let (_, elapsed) = h.by_latency[&l];
        within(Duration::from_secs(120), elapsed, &format!("sweep at latency {l}"))?;
        for b in bins() {
            let [amo, ideal, col, lrsc] = ["amo", "ideal", "colibri:1", "lrsc"].map(|f| h.tput(l, f, b));
            ensure(amo >= ideal && ideal >= col && col >= lrsc, || {
                format!("latency {l}, {b} bins: amo {amo:.4} ideal {ideal:.4} colibri {col:.4} lrsc {lrsc:.4}")
            })?;
            ensure(col >= 0.7 * ideal, || format!("latency {l}, {b} bins: colibri {col:.4} vs ideal {ideal:.4}"))?;
            worst_near = worst_near.min(col / ideal);
        }
        let ratio = h.tput(l, "colibri:1", 1) / h.tput(l, "lrsc", 1);
        ensure(ratio >= 3.0, || format!("latency {l}: colibri/lrsc at 1 bin is {ratio:.2}"))?;
        worst_gap = worst_gap.min(ratio);
    }
    Ok(format!("ordering holds at latencies {LATENCIES:?}; min colibri/lrsc at 1 bin {worst_gap:.1}x; min colibri/ideal {worst_near:.2}"))
}

fn bounded(h: &Histograms) -> Check {
    let mut misses = Vec::new();
    let mut low = f64::INFINITY;
    let mut high: f64 = 0.0;
    for l in LATENCIES {
        for b in bins().into_iter().filter(|&b| b >= 64) {
            let rel = h.tput(l, "bounded:1", b) / h.tput(l, "ideal", b);
            low = low.min(rel);
            if (rel - 1.0).abs() > 0.10 {
                misses.push(format!("latency {l}, {b} bins: {rel:.2}"));
            }
        }
        let rel = h.tput(l, "bounded:1", 1) / h.tput(l, "ideal", 1);
        high = high.max(rel);
        ensure(rel < 0.5, || format!("latency {l}: bounded/ideal at 1 bin is {rel:.2}"))?;
    }
    ensure(misses.is_empty(), || format!("bounded/ideal outside 10% at bins >= 64: {}", misses.join("; ")))?;
    Ok(format!("bins >= 64 within 10% (min {low:.2}); 1 bin at most {high:.2} of ideal"))
}

fn fairness() -> Check {
    let mut notes = Vec::new();
    for l in LATENCIES {
        let p = bench::BenchParams { latency: l, ..Default::default() };
        let t = Instant::now();
        let mut spec = ExperimentSpec::queue(vec![Flavor::Colibri(1), Flavor::LrSc], vec![64]);
        spec.base = p.clone();
        let rows = bench::run_queue_scaling(&spec).map_err(|e| e.to_string())?;
        let col = rows.iter().find(|r| r.flavor == "colibri:1").ok_or("no colibri row")?;
        let lrsc = rows.iter().find(|r| r.flavor == "lrsc").ok_or("no lrsc row")?;
        let quota = bench::queue_point(&p, Flavor::Colibri(1), 64, spec.seed).map_err(|e| e.to_string())?;
        within(Duration::from_secs(120), t.elapsed(), &format!("queue run at latency {l}"))?;
        ensure(quota.ops == 64 * p.iterations, || format!("latency {l}: colibri finished {} of {} ops", quota.ops, 64 * p.iterations))?;
        let (cs, ls) = (col.spread(), lrsc.spread());
        ensure(cs < ls && ls >= 2.0 * cs, || format!("latency {l}: spread colibri {cs:.3} lrsc {ls:.3}"))?;
        notes.push(format!("L={l} {cs:.3}/{ls:.3}"));
    }
    Ok(format!("spread colibri/lrsc {}; colibri completes every quota", notes.join(", ")))
}

fn interference() -> Check {
    let mut notes = Vec::new();
    for l in LATENCIES {
        let mut spec = ExperimentSpec::interference(vec![Flavor::Colibri(1), Flavor::LrSc], vec![60]);
        spec.base.latency = l;
        ensure(spec.base.workers == 4 && spec.base.n_cores == 64 && spec.base.bins == 1 && spec.base.backoff == 128, || {
            "interference defaults are not 60:4 at 64 cores, 1 bin, backoff 128".into()
        })?;
        let rows = bench::run_interference(&spec).map_err(|e| e.to_string())?;
        let rel = |f: &str| rows.iter().find(|r| r.flavor == f).and_then(|r| r.worker_rel_perf).ok_or(format!("no {f} row"));
        let (c, s) = (rel("colibri:1")?, rel("lrsc")?);
        ensure(c >= 0.9 && c > s, || format!("latency {l}: colibri {c:.3} lrsc {s:.3}"))?;
        notes.push(format!("L={l} {c:.3}/{s:.3}"));
    }
    Ok(format!("worker rel. perf colibri/lrsc {}", notes.join(", ")))
}

fn energy(h: &Histograms) -> Check {
    let mut notes = Vec::new();
    for l in LATENCIES {
        let col: Vec<f64> = bins().into_iter().map(|b| h.row(l, "colibri:1", b).msgs_per_op).collect();
        let lrsc = h.row(l, "lrsc", 1).msgs_per_op;
        ensure(lrsc >= 5.0 * col[0], || format!("latency {l}: lrsc {lrsc:.1} vs colibri {:.1} msgs/op", col[0]))?;
        let (lo, hi) = col.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        ensure(hi - lo <= 2.0, || format!("latency {l}: colibri msgs/op spans {lo:.2}..{hi:.2}"))?;
        notes.push(format!("L={l} lrsc {lrsc:.0} colibri {lo:.2}..{hi:.2}"));
    }
    // the trace-derived proxy agrees with the live counters
    let p = bench::BenchParams::default();
    let mut m = bench::histogram_machine(&p, Flavor::Colibri(1), 1, 1).map_err(|e| e.to_string())?;
    m.enable_trace(false);
    let out = m.run(p.max_cycles).map_err(|e| e.to_string())?;
    m.finish_trace(out);
    let hops = m.hops();
    let proxy = bench::energy_proxy(&Trace { header: BTreeMap::new(), records: m.take_trace() });
    ensure(proxy.hops == hops, || format!("trace counts {} hops, machine {hops}", proxy.hops))?;
    let live = h.row(5, "colibri:1", 1).msgs_per_op;
    ensure((proxy.hops_per_op() - live).abs() < 1e-9, || format!("trace proxy {:.3} vs sweep {live:.3}", proxy.hops_per_op()))?;
    Ok(notes.join("; "))
}

fn cost() -> Check {
    let mut ratios = Vec::new();
    for n in [16u64, 64, 256] {
        let m = 4 * n;
        let id = u64::from(n.ilog2());
        let ideal = cost_model(CostScheme::Ideal, n, m).map_err(|e| e.to_string())?;
        let col = cost_model(CostScheme::Colibri { addresses_per_bank: 1 }, n, m).map_err(|e| e.to_string())?;
        let want_ideal = (n * id * m, (n + 33) * m);
        let want_col = (n * id + 2 * id * m, n + 35 * m);
        ensure((ideal.identifier_bits, ideal.control_bits) == want_ideal, || format!("ideal at n={n}: {ideal:?}"))?;
        ensure((col.identifier_bits, col.control_bits) == want_col, || format!("colibri at n={n}: {col:?}"))?;
        ratios.push((ideal.identifier_bits as f64 / col.identifier_bits as f64, ideal.total() as f64 / col.total() as f64));
    }
    let big = (cost_model(CostScheme::Ideal, 256, 1024), cost_model(CostScheme::Colibri { addresses_per_bank: 1 }, 256, 1024));
    let (Ok(i), Ok(c)) = big else { return Err("cost model rejected n=256".into()) };
    ensure(i.identifier_bits == 2_097_152 && c.identifier_bits == 18_432, || format!("n=256: {} vs {}", i.identifier_bits, c.identifier_bits))?;
    ensure(ratios.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1), || format!("ratios do not grow: {ratios:?}"))?;
    let shown: Vec<_> = ratios.iter().map(|r| format!("{:.1}", r.0)).collect();
    Ok(format!("identifier-bit ratio {} for n = 16, 64, 256; 2,097,152 vs 18,432 at n=256", shown.join(" < ")))
}

fn mwait() -> Check {
    let cfg = ExploreConfig::default();
    let adapters = [AdapterKind::Colibri { addresses_per_bank: 1 }, AdapterKind::LrscWaitIdeal];
    for adapter in adapters {
        let s = scenarios::mwait_short_circuit(adapter);
        let e = verify::explore(&s, &cfg).map_err(|e| e.to_string())?;
        ensure(e.all_hold(), || format!("{adapter} short circuit: {:?}", e.violations.keys().collect::<Vec<_>>()))?;
        let t = record(&s);
        let resp: Vec<_> = t.messages().filter(|(_, _, _, m)| matches!(m, Message::MwaitResp { .. })).collect();
        let req = t.messages().find(|(_, _, _, m)| matches!(m, Message::MwaitReq { .. })).ok_or("no MwaitReq")?;
        ensure(resp.len() == 1 && matches!(resp[0].3, Message::MwaitResp { value: 7, .. }) && resp[0].0 == req.0, || {
            format!("{adapter} short circuit answered with {resp:?}")
        })?;
        for k in 1..=3 {
            let s = scenarios::mwait_cascade(adapter, k);
            let e = verify::explore(&s, &cfg).map_err(|e| e.to_string())?;
            ensure(e.all_hold(), || format!("{adapter} k={k}: {:?}", e.violations.values().next().map(|v| &v.0)))?;
            let t = record(&s);
            let woken: Vec<_> = t
                .messages()
                .filter_map(|(_, _, d, m)| matches!(m, Message::MwaitResp { value: 1, .. }).then_some(d))
                .collect();
            let mut distinct = woken.clone();
            distinct.sort();
            distinct.dedup();
            ensure(woken.len() == k && distinct.len() == k, || format!("{adapter} k={k}: store answered {woken:?}"))?;
        }
    }
    Ok("short circuit answers at once with the current value; k = 1..3 waiters get exactly k responses, every interleaving".into())
}

fn main() {
    let total = Instant::now();
    let hist = Histograms::run();
    let with_hist = |f: fn(&Histograms) -> Check| -> Check { hist.as_ref().map_err(Clone::clone).and_then(f) };
    let criteria: Vec<Criterion> = vec![
        ("golden trace", Box::new(golden_trace)),
        ("exhaustive safety and liveness", Box::new(exhaustive)),
        ("mutation detection", Box::new(mutations)),
        ("retry freedom", Box::new(move || with_hist(retry_freedom))),
        ("throughput ordering", Box::new(move || with_hist(throughput))),
        ("bounded queue degradation", Box::new(move || with_hist(bounded))),
        ("queue fairness", Box::new(fairness)),
        ("interference ordering", Box::new(interference)),
        ("energy proxy", Box::new(move || with_hist(energy))),
        ("cost model scaling", Box::new(cost)),
        ("mwait semantics", Box::new(mwait)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or("panic".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS {:>2} {name} [{secs:.1}s]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{secs:.1}s]: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed in {:.1}s", criteria.len() - failed, criteria.len(), total.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
