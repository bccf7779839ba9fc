//! Run configuration.
//!
//! One TOML file describes the system, scripted programs, verification and
//! benchmark settings. `key=value` overrides address nested keys with dots
//! (`system.latency=8`, `bench.params.bins=4`); values are TOML literals and
//! fall back to plain strings. `COLIBRI_SIM_SEED` replaces `seed`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::adapter::{AdapterKind, Mutation};
use crate::bench::{BenchParams, Experiment, ExperimentSpec, Flavor};
use crate::sim::SystemConfig;
use crate::types::Addr;
use crate::verify::{ExploreConfig, Scenario};
use crate::workloads::{Program, RmwFlavor, Script, ScriptOp};

pub const SEED_ENV: &str = "COLIBRI_SIM_SEED";

/// Header keys of a trace that carry the resolved configuration.
pub const HEADER_PREFIX: &str = "config.";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("override `{0}` is not of the form key=value")]
    Override(String),
    #[error("contradictory overrides for `{key}`: `{first}` and `{second}`")]
    Contradiction { key: String, first: String, second: String },
    #[error("{SEED_ENV}=`{0}` is not an unsigned integer")]
    Seed(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub name: String,
    pub seed: u64,
    /// Cycle budget of `simulate`.
    pub max_cycles: u64,
    pub system: SystemSection,
    /// Words written before the run, as `[addr, value]` pairs.
    pub init: Vec<(u32, u32)>,
    pub script: ScriptSection,
    /// One scripted program per core.
    pub cores: Vec<CoreSection>,
    /// Simulate one benchmark point instead of the scripted cores.
    pub workload: Option<WorkloadSection>,
    pub verify: VerifySection,
    pub bench: BenchSection,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            name: "run".into(),
            seed: 1,
            max_cycles: 1_000_000,
            system: SystemSection::default(),
            init: Vec::new(),
            script: ScriptSection::default(),
            cores: Vec::new(),
            workload: None,
            verify: VerifySection::default(),
            bench: BenchSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    /// Defaults to the number of `[[cores]]`.
    pub n_cores: Option<usize>,
    pub n_banks: usize,
    pub latency: u64,
    pub adapter: AdapterKind,
    pub mutation: Option<Mutation>,
    pub backoff_jitter: u64,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            n_cores: None,
            n_banks: 1,
            latency: 5,
            adapter: AdapterKind::Colibri { addresses_per_bank: 1 },
            mutation: None,
            backoff_jitter: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScriptSection {
    pub lrsc_backoff: u64,
    pub lrsc_max_retries: Option<u32>,
    pub fail_backoff: u64,
}

impl Default for ScriptSection {
    fn default() -> Self {
        ScriptSection { lrsc_backoff: 1, lrsc_max_retries: None, fail_backoff: 1 }
    }
}

impl ScriptSection {
    pub fn flavor(&self, adapter: AdapterKind) -> RmwFlavor {
        match adapter {
            AdapterKind::AmoOnly => RmwFlavor::Amo,
            AdapterKind::PlainLrSc => RmwFlavor::LrSc { backoff: self.lrsc_backoff, max_retries: self.lrsc_max_retries },
            _ => RmwFlavor::LrscWait { fail_backoff: self.fail_backoff },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreSection {
    pub ops: Vec<ScriptOp>,
    /// Idle cycles before the first operation.
    #[serde(default)]
    pub start: u64,
    /// Cycles between the read and the write of each increment.
    #[serde(default)]
    pub modify: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    pub experiment: Experiment,
    pub flavor: Flavor,
    /// Bins, cores or pollers, depending on the experiment.
    pub value: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifySuite {
    /// The scripted `[[cores]]`.
    Config,
    /// Every increment workload up to three cores on the configured adapter.
    Increments,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub suite: VerifySuite,
    pub delays: Vec<u64>,
    pub max_states: usize,
    pub stop_at_first: bool,
    /// Also compare outcomes with the ideal queue. Defaults to on for Colibri.
    pub compare_ideal: Option<bool>,
    /// Trace the fixed-latency run must reproduce exactly.
    pub golden: Option<PathBuf>,
}

impl Default for VerifySection {
    fn default() -> Self {
        let e = ExploreConfig::default();
        VerifySection {
            suite: VerifySuite::Config,
            delays: e.delays,
            max_states: e.max_states,
            stop_at_first: e.stop_at_first,
            compare_ideal: None,
            golden: None,
        }
    }
}

impl VerifySection {
    pub fn explore_config(&self) -> ExploreConfig {
        ExploreConfig { delays: self.delays.clone(), max_states: self.max_states, stop_at_first: self.stop_at_first }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub flavors: Option<Vec<Flavor>>,
    pub values: Option<Vec<u64>>,
    pub repetitions: u32,
    pub params: BenchParams,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { flavors: None, values: None, repetitions: 1, params: BenchParams::default() }
    }
}

fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| ConfigError::Override(key.into()))?;
    let mut t = table;
    for p in parts {
        let entry = t.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Invalid(format!("`{key}`: `{p}` is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

/// Split `key=value` overrides, rejecting a key given twice with different
/// values.
pub fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    let mut seen: BTreeMap<String, String> = BTreeMap::new();
    let mut out = Vec::new();
    for o in raw {
        let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.clone()))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(ConfigError::Override(o.clone()));
        }
        match seen.get(&k) {
            Some(prev) if *prev != v => {
                return Err(ConfigError::Contradiction { key: k, first: prev.clone(), second: v });
            }
            Some(_) => continue,
            None => {
                seen.insert(k.clone(), v.clone());
                out.push((k, v));
            }
        }
    }
    Ok(out)
}

fn flatten_into(prefix: &str, table: &Table, out: &mut Vec<(String, String)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten_into(&key, t, out),
            v => out.push((key, v.to_string())),
        }
    }
}

impl Config {
    /// Parse TOML text and apply overrides (and a seed from the environment,
    /// when given) on top.
    pub fn from_toml(text: &str, overrides: &[String], env_seed: Option<&str>) -> Result<Config, ConfigError> {
        let mut table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        if let Some(s) = env_seed {
            let seed: i64 = s.trim().parse().map_err(|_| ConfigError::Seed(s.into()))?;
            if seed < 0 {
                return Err(ConfigError::Seed(s.into()));
            }
            table.insert("seed".into(), Value::Integer(seed));
        }
        for (k, v) in parse_overrides(overrides)? {
            set_path(&mut table, &k, parse_value(&v))?;
        }
        let cfg: Config = Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a file; the seed variable is taken from the process environment.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let env = std::env::var(SEED_ENV).ok();
        let mut cfg = Config::from_toml(&text, overrides, env.as_deref())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.workload.is_some() && !self.cores.is_empty() {
            return invalid("`workload` and `[[cores]]` are mutually exclusive".into());
        }
        if let Some(n) = self.system.n_cores {
            if !self.cores.is_empty() && n != self.cores.len() {
                return invalid(format!("system.n_cores = {n} but {} [[cores]] are given", self.cores.len()));
            }
        }
        if self.verify.delays.is_empty() || self.verify.delays.contains(&0) {
            return invalid("verify.delays must be non-empty and positive".into());
        }
        if self.bench.repetitions == 0 {
            return invalid("bench.repetitions must be at least 1".into());
        }
        if self.workload.is_none() && (self.system.n_cores.is_some() || !self.cores.is_empty()) {
            self.system_config().validate().map_err(|e| match e {
                crate::SimError::Config(m) => ConfigError::Invalid(m),
                e => ConfigError::Invalid(e.to_string()),
            })?;
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w: Vec<String> = self.system.adapter.warning().into_iter().collect();
        if let Some(fl) = &self.bench.flavors {
            w.extend(fl.iter().filter_map(|f| f.adapter().warning()));
        }
        w
    }

    pub fn n_cores(&self) -> usize {
        self.system.n_cores.unwrap_or(self.cores.len())
    }

    pub fn system_config(&self) -> SystemConfig {
        let s = &self.system;
        let mut c = SystemConfig::new(self.n_cores(), s.n_banks, s.adapter);
        c.latency = s.latency;
        c.mutation = s.mutation;
        c.backoff_jitter = s.backoff_jitter;
        c.seed = self.seed;
        c
    }

    /// The scripted cores as a verification scenario. Cores without a
    /// script stay idle.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        if self.cores.is_empty() {
            return Err(ConfigError::Invalid("no [[cores]] to run".into()));
        }
        let system = self.system_config();
        let flavor = self.script.flavor(system.adapter);
        let programs =
            self.cores.iter().map(|c| Program::Script(Script::new(c.ops.clone(), flavor, c.start, c.modify))).collect();
        let mut s = Scenario::new(self.name.clone(), system, programs);
        s.init = self.init.iter().map(|&(a, v)| (Addr(a), v)).collect();
        Ok(s)
    }

    pub fn bench_params(&self) -> BenchParams {
        self.bench.params.clone()
    }

    pub fn experiment_spec(&self, e: Experiment) -> ExperimentSpec {
        let base = self.bench_params();
        ExperimentSpec {
            name: e.name().into(),
            sweep: e.sweep(),
            values: self.bench.values.clone().unwrap_or_else(|| e.default_values(&base)),
            flavors: self.bench.flavors.clone().unwrap_or_else(|| e.default_flavors()),
            repetitions: self.bench.repetitions,
            seed: self.seed,
            base,
        }
    }

    pub fn golden_path(&self) -> Option<PathBuf> {
        self.verify.golden.as_ref().filter(|g| !g.as_os_str().is_empty()).map(|g| if g.is_absolute() { g.clone() } else { self.base_dir.join(g) })
    }

    /// The fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// Dotted `key=value` pairs of the resolved configuration, as written
    /// into trace headers.
    pub fn flatten(&self) -> Vec<(String, String)> {
        let table = Table::try_from(self).expect("configs always serialize");
        let mut out = Vec::new();
        flatten_into("", &table, &mut out);
        out
    }

    /// Rebuild a configuration from trace header entries under
    /// [`HEADER_PREFIX`]. `None` when the header carries none.
    pub fn from_header(header: &BTreeMap<String, String>) -> Option<Result<Config, ConfigError>> {
        let pairs: Vec<String> = header
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(HEADER_PREFIX).map(|k| format!("{k}={v}")))
            .collect();
        if pairs.is_empty() {
            return None;
        }
        Some(Config::from_toml("", &pairs, None))
    }
}
