//! `colibri-sim` command line.
//!
//! Exit codes: 0 success, 1 a property or run failed, 2 bad configuration
//! or input.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::adapter::{cost_model, AdapterKind, CostScheme};
use crate::bench::{self, BenchError, Experiment};
use crate::config::{Config, ConfigError, HEADER_PREFIX};
use crate::sim::{Machine, RunOutcome};
use crate::trace::Trace;
use crate::verify::{self, check_trace, Exploration, Property, Status, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "colibri-sim", version, about = "Simulate, verify and benchmark LRwait/SCwait and Colibri")]
pub struct Cli {
    /// More output; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set system.latency=8`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the configured cores (or one benchmark point) at fixed latency.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Emit the event trace (to stdout, or `trace.txt` under --out).
        #[arg(long)]
        trace: bool,
        /// Output directory for the trace.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Explore every delay interleaving of the configured scenario.
    Verify {
        #[command(flatten)]
        config: ConfigArgs,
        /// Where counterexample traces and the resolved config go.
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Run one experiment sweep; writes CSV, SVG and the resolved config.
    Bench {
        /// histogram, queue or interference.
        experiment: Experiment,
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(short, long)]
        out: PathBuf,
        /// Skip the SVG plots.
        #[arg(long)]
        no_plots: bool,
    },
    /// Reservation storage bits of a scheme.
    CostModel {
        /// Number of cores.
        #[arg(long)]
        cores: u64,
        /// Number of memory banks.
        #[arg(long)]
        banks: u64,
        /// `ideal`, `bounded:Q` or `colibri:A`; comma separated for several.
        #[arg(long, value_delimiter = ',', default_value = "ideal,colibri:1")]
        scheme: Vec<String>,
    },
    /// Check a recorded trace and, when it carries its configuration, rerun it.
    Replay {
        /// Trace file written by `simulate --trace` or `verify`.
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => EXIT_CONFIG,
            CliError::Failed(_) => EXIT_FAILED,
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Spec(_) | BenchError::Unsupported { .. } => CliError::Input(e.to_string()),
            BenchError::Io(_) | BenchError::Csv(_) => CliError::Input(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<crate::SimError> for CliError {
    fn from(e: crate::SimError) -> Self {
        match e {
            crate::SimError::Config(_) => CliError::Input(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

struct Ctx<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    verbose: u8,
}

macro_rules! say {
    ($w:expr, $($t:tt)*) => {
        let _ = writeln!($w, $($t)*);
    };
}

/// Parse `argv` (including the program name) and run the command.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    let mut ctx = Ctx { out, err, verbose: cli.verbose };
    let result = match cli.command {
        Command::Simulate { config, trace, out } => simulate(&mut ctx, &config, trace, out.as_deref()),
        Command::Verify { config, out } => verify_cmd(&mut ctx, &config, &out),
        Command::Bench { experiment, config, out, no_plots } => bench_cmd(&mut ctx, experiment, &config, &out, no_plots),
        Command::CostModel { cores, banks, scheme } => cost(&mut ctx, cores, banks, &scheme),
        Command::Replay { trace } => replay(&mut ctx, &trace),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            say!(ctx.err, "error: {e}");
            e.code()
        }
    }
}

fn load(ctx: &mut Ctx, args: &ConfigArgs) -> Result<Config, CliError> {
    let cfg = match &args.config {
        Some(p) => Config::load(p, &args.overrides)?,
        None => {
            let env = std::env::var(crate::config::SEED_ENV).ok();
            Config::from_toml("", &args.overrides, env.as_deref())?
        }
    };
    for w in cfg.warnings() {
        say!(ctx.err, "warning: {w}");
    }
    Ok(cfg)
}

fn echo_config(cfg: &Config, dir: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(io_err(&path))?;
    Ok(path)
}

/// The machine, cycle budget and trace header a configuration describes.
pub fn build(cfg: &Config) -> Result<(Machine, u64, std::collections::BTreeMap<String, String>), CliError> {
    let (machine, budget, mut header) = match &cfg.workload {
        Some(w) => {
            let p = cfg.bench_params();
            let m = bench::point_machine(&p, w.experiment.sweep(), w.flavor, w.value, cfg.seed)?;
            let mut h = std::collections::BTreeMap::new();
            h.insert("scenario".into(), format!("{}/{}/{}={}", cfg.name, w.flavor, w.experiment.sweep().name(), w.value));
            h.insert("adapter".into(), m.config().adapter.to_string());
            h.insert("n_cores".into(), m.config().n_cores.to_string());
            h.insert("n_banks".into(), m.config().n_banks.to_string());
            (m, p.max_cycles, h)
        }
        None => {
            let s = cfg.scenario()?;
            (s.machine()?, cfg.max_cycles, s.header())
        }
    };
    for (k, v) in cfg.flatten() {
        header.insert(format!("{HEADER_PREFIX}{k}"), v);
    }
    Ok((machine, budget, header))
}

/// Run a configuration at fixed latency and record everything.
pub fn record(cfg: &Config) -> Result<(Trace, Machine, RunOutcome), CliError> {
    let (mut m, budget, header) = build(cfg)?;
    m.enable_trace(true);
    let outcome = m.run(budget)?;
    m.finish_trace(outcome);
    let records = m.take_trace();
    Ok((Trace { header, records }, m, outcome))
}

fn summary(ctx: &mut Ctx, m: &Machine, outcome: RunOutcome) {
    let stats = m.stats();
    let ops: u64 = stats.iter().map(|s| s.ops).sum();
    let retries: u64 = stats.iter().map(|s| s.retries).sum();
    say!(ctx.out, "outcome: {outcome} at cycle {}", m.now().0);
    say!(ctx.out, "ops: {ops}  retries: {retries}  hops: {}  bank accesses: {}", m.hops(), m.bank_accesses());
    if ops > 0 {
        say!(
            ctx.out,
            "throughput: {:.4} ops/cycle  msgs/op: {:.2}",
            ops as f64 / m.now().0.max(1) as f64,
            m.hops() as f64 / ops as f64
        );
    }
    if ctx.verbose > 0 {
        for (c, s) in stats.iter().enumerate() {
            say!(ctx.out, "  core {c}: ops={} retries={} sent={} complete={}", s.ops, s.retries, s.sent, s.complete);
        }
    }
    let mem = m.memory();
    let shown = if ctx.verbose > 0 { mem.len() } else { 16 };
    for (a, v) in mem.iter().take(shown) {
        say!(ctx.out, "  mem[{}] = {v}", a.0);
    }
    if mem.len() > shown {
        say!(ctx.out, "  ... {} more non-zero words", mem.len() - shown);
    }
    for a in m.anomalies() {
        say!(ctx.err, "anomaly: {a:?}");
    }
}

fn simulate(ctx: &mut Ctx, args: &ConfigArgs, want_trace: bool, out: Option<&Path>) -> Result<i32, CliError> {
    let cfg = load(ctx, args)?;
    let (trace, m, outcome) = record(&cfg)?;
    if let Some(dir) = out {
        echo_config(&cfg, dir)?;
    }
    if want_trace {
        match out {
            Some(dir) => {
                let path = dir.join("trace.txt");
                std::fs::write(&path, trace.to_string()).map_err(io_err(&path))?;
                say!(ctx.err, "trace: {}", path.display());
            }
            None => {
                let _ = write!(ctx.out, "{trace}");
            }
        }
    }
    summary(ctx, &m, outcome);
    Ok(if outcome == RunOutcome::Completed { EXIT_OK } else { EXIT_FAILED })
}

fn status_word(s: Status) -> &'static str {
    match s {
        Status::Holds => "PASS",
        Status::Violated => "FAIL",
        Status::Inconclusive => "INCONCLUSIVE",
    }
}

struct Tally {
    failed: bool,
    written: usize,
}

impl Tally {
    fn verdict(&mut self, ctx: &mut Ctx, scenario: &str, v: &Verdict, dir: &Path, print: bool) -> Result<(), CliError> {
        if v.status != Status::Holds {
            self.failed = true;
        }
        if print || v.status != Status::Holds {
            say!(ctx.out, "{} {} {}", status_word(v.status), v.property, scenario);
        }
        if let Some(viol) = &v.violation {
            say!(ctx.out, "  {viol}");
        }
        if let Some(t) = &v.counterexample {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join(format!("counterexample-{}-{}.trace", self.written, v.property));
            std::fs::write(&path, t.to_string()).map_err(io_err(&path))?;
            self.written += 1;
            say!(ctx.out, "  counterexample: {}", path.display());
        }
        Ok(())
    }

    fn exploration(&mut self, ctx: &mut Ctx, e: &Exploration, dir: &Path, print: bool) -> Result<(), CliError> {
        if print {
            say!(ctx.out, "{}: {} states, {} terminal, {} outcomes", e.scenario, e.states, e.terminals, e.outcomes.len());
        }
        for v in e.verdicts() {
            self.verdict(ctx, &e.scenario, &v, dir, print)?;
        }
        Ok(())
    }
}

fn verify_cmd(ctx: &mut Ctx, args: &ConfigArgs, dir: &Path) -> Result<i32, CliError> {
    let cfg = load(ctx, args)?;
    let ecfg = cfg.verify.explore_config();
    let compare = cfg.verify.compare_ideal.unwrap_or(matches!(cfg.system.adapter, AdapterKind::Colibri { .. }));
    let mut tally = Tally { failed: false, written: 0 };
    let scenarios = match cfg.verify.suite {
        crate::config::VerifySuite::Config => vec![cfg.scenario()?],
        crate::config::VerifySuite::Increments => {
            let mut v = verify::scenarios::increment_suite(cfg.system.adapter);
            for s in &mut v {
                s.system.latency = cfg.system.latency;
                s.system.mutation = cfg.system.mutation;
            }
            v
        }
    };
    let single = scenarios.len() == 1;
    let print = single || ctx.verbose > 0;
    let mut states = 0;
    if compare {
        use rayon::prelude::*;
        let results: Vec<_> = scenarios.par_iter().map(|s| verify::colibri_equals_ideal(s, &ecfg)).collect();
        for r in results {
            let (c, i, v) = r?;
            states += c.states + i.states;
            tally.exploration(ctx, &c, dir, print)?;
            tally.exploration(ctx, &i, dir, print)?;
            tally.verdict(ctx, &c.scenario, &v, dir, print)?;
        }
    } else {
        for r in verify::explore_all(&scenarios, &ecfg) {
            let e = r?;
            states += e.states;
            tally.exploration(ctx, &e, dir, print)?;
        }
    }
    if let Some(golden) = cfg.golden_path() {
        let want = std::fs::read_to_string(&golden).map_err(io_err(&golden))?;
        let want: Trace = want.parse().map_err(|e| CliError::Input(format!("{}: {e}", golden.display())))?;
        let (got, _, _) = record(&cfg)?;
        match first_difference(&want, &got) {
            None => {
                say!(ctx.out, "PASS golden trace {}", golden.display());
            }
            Some(d) => {
                tally.failed = true;
                say!(ctx.out, "FAIL golden trace {}: {d}", golden.display());
            }
        }
    }
    if !single {
        say!(ctx.out, "{} scenarios, {states} states explored", scenarios.len());
    }
    if tally.failed {
        return Ok(EXIT_FAILED);
    }
    if cfg.verify.suite == crate::config::VerifySuite::Config && !print {
        say!(ctx.out, "all properties hold");
    }
    Ok(EXIT_OK)
}

/// The first record where two traces differ, described for humans.
pub fn first_difference(want: &Trace, got: &Trace) -> Option<String> {
    let w: Vec<String> = want.records.iter().map(ToString::to_string).collect();
    let g: Vec<String> = got.records.iter().map(ToString::to_string).collect();
    for (i, (a, b)) in w.iter().zip(&g).enumerate() {
        if a != b {
            return Some(format!("record {}: expected `{a}`, got `{b}`", i + 1));
        }
    }
    match w.len().cmp(&g.len()) {
        std::cmp::Ordering::Equal => None,
        std::cmp::Ordering::Less => Some(format!("extra record {}: `{}`", w.len() + 1, g[w.len()])),
        std::cmp::Ordering::Greater => Some(format!("missing record {}: `{}`", g.len() + 1, w[g.len()])),
    }
}

fn bench_cmd(ctx: &mut Ctx, e: Experiment, args: &ConfigArgs, dir: &Path, no_plots: bool) -> Result<i32, CliError> {
    let cfg = load(ctx, args)?;
    let spec = cfg.experiment_spec(e);
    spec.validate()?;
    echo_config(&cfg, dir)?;
    let start = std::time::Instant::now();
    let rows = e.run(&spec)?;
    let csv_path = dir.join(format!("{}.csv", e.name()));
    let file = std::fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    bench::write_csv(&rows, file)?;
    say!(ctx.out, "{}: {} rows in {:.1?} -> {}", e, rows.len(), start.elapsed(), csv_path.display());
    for r in &rows {
        let rel = r.worker_rel_perf.map(|x| format!(" rel={x:.3}")).unwrap_or_default();
        say!(
            ctx.out,
            "  {:<12} {}={:<5} {:.4} ops/cycle  retries={:<8} msgs/op={:.2} spread={:.2}{rel}",
            r.flavor,
            r.sweep_name,
            r.sweep_value,
            r.throughput_ops_per_cycle,
            r.retries,
            r.msgs_per_op,
            r.spread()
        );
    }
    if !no_plots {
        if rows.is_empty() {
            say!(ctx.err, "warning: no rows, no plot written");
        }
        for p in bench::plot::emit_plots(&rows, dir)? {
            say!(ctx.out, "plot: {}", p.display());
        }
    }
    Ok(EXIT_OK)
}

fn cost(ctx: &mut Ctx, cores: u64, banks: u64, schemes: &[String]) -> Result<i32, CliError> {
    for s in schemes {
        let scheme: CostScheme = s.parse().map_err(CliError::Input)?;
        let c = cost_model(scheme, cores, banks)?;
        say!(
            ctx.out,
            "{s}: cores={cores} banks={banks} identifier_bits={} control_bits={} total_bits={}",
            c.identifier_bits,
            c.control_bits,
            c.total()
        );
    }
    Ok(EXIT_OK)
}

fn replay(ctx: &mut Ctx, path: &Path) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let trace: Trace = text.parse().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut failed = false;
    let violations = check_trace(&trace);
    for v in &violations {
        failed = true;
        say!(ctx.out, "FAIL {v}");
    }
    let e = bench::energy_proxy(&trace);
    say!(ctx.out, "outcome: {}", trace.outcome().unwrap_or("none"));
    say!(ctx.out, "ops: {}  hops: {}  bank accesses: {}  msgs/op: {:.2}", e.ops, e.hops, e.bank_accesses, e.hops_per_op());
    for (a, v) in trace.final_memory() {
        say!(ctx.out, "  mem[{}] = {v}", a.0);
    }
    match Config::from_header(&trace.header) {
        None => {
            say!(ctx.out, "no embedded configuration; checked properties only");
        }
        Some(cfg) => {
            let cfg = cfg?;
            let (again, _, _) = record(&cfg)?;
            match first_difference(&trace, &again) {
                None => {
                    say!(ctx.out, "replay: identical ({} records)", again.records.len());
                }
                Some(d) => {
                    failed = true;
                    say!(ctx.out, "replay: diverged at {d}");
                }
            }
        }
    }
    if violations.is_empty() && ctx.verbose > 0 {
        for p in Property::PER_TRACE {
            say!(ctx.out, "PASS {p}");
        }
    }
    Ok(if failed { EXIT_FAILED } else { EXIT_OK })
}
