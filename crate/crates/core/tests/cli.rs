use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_colibri-sim"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const PAIR: &str = r#"
name = "pair"
[system]
n_banks = 1
adapter = "colibri:1"
[[cores]]
ops = ["inc 0", "inc 0"]
[[cores]]
ops = ["inc 0"]
"#;

#[test]
fn handoff_verifies_and_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("handoff.toml");
    let o = run(&["verify", "-c", cfg.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    let out = text(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(out.contains("PASS golden trace"), "{out}");
    assert!(!out.contains("FAIL"), "{out}");
}

#[test]
fn mutant_fails_with_counterexamples_that_replay_as_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("mutant.toml");
    let o = run(&["verify", "-c", cfg.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    let cex: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("counterexample-"))
        .collect();
    assert!(!cex.is_empty());
    for p in cex {
        let o = run(&["replay", "--trace", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    }
}

#[test]
fn simulate_trace_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "pair.toml", PAIR);
    let o = run(&["simulate", "-c", &cfg, "--trace", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let trace = dir.path().join("trace.txt");
    let body = std::fs::read_to_string(&trace).unwrap();
    assert!(body.contains("# config.name=\"pair\""), "{body}");
    let o = run(&["replay", "--trace", trace.to_str().unwrap()]);
    let out = text(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(out.contains("replay: identical"), "{out}");
    assert!(out.contains("mem[0] = 3"), "{out}");
}

#[test]
fn workload_point_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("point.toml");
    let o = run(&["simulate", "-c", cfg.to_str().unwrap(), "--trace", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let o = run(&["replay", "--trace", dir.path().join("trace.txt").to_str().unwrap()]);
    assert!(text(&o).contains("replay: identical"), "{}", text(&o));
}

#[test]
fn edited_trace_diverges_on_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "pair.toml", PAIR);
    let o = run(&["simulate", "-c", &cfg, "--trace", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let trace = dir.path().join("trace.txt");
    let body = std::fs::read_to_string(&trace).unwrap().replace("config.system.latency=5", "config.system.latency=6");
    std::fs::write(&trace, body).unwrap();
    let o = run(&["replay", "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
}

#[test]
fn config_errors_exit_two_and_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &format!("{PAIR}\nbogus = 1\n"));
    let o = run(&["simulate", "-c", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("bogus"), "{}", text(&o));

    let o = run(&["simulate", "-c", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let good = write(dir.path(), "pair.toml", PAIR);
    let o = run(&["simulate", "-c", &good, "-s", "system.latency=3", "-s", "system.latency=4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("system.latency"), "{}", text(&o));

    let o = run(&["simulate", "-c", &good, "-s", "system.adapter=colibri:0"]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));

    let o = run(&["bench", "queue", "-s", "bench.flavors=[\"lock-mcs\"]", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));

    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn overrides_and_env_seed_reach_the_trace_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "pair.toml", PAIR);
    let o = bin()
        .args(["simulate", "-c", &cfg, "--trace", "-s", "system.latency=7"])
        .env("COLIBRI_SIM_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("# config.system.latency=7"), "{out}");
    assert!(out.contains("# config.seed=42"), "{out}");
}

#[test]
fn bench_writes_csv_plot_and_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&[
        "bench",
        "histogram",
        "-o",
        d,
        "-s",
        "bench.params.n_cores=8",
        "-s",
        "bench.params.n_banks=16",
        "-s",
        "bench.params.iterations=8",
        "-s",
        "bench.values=[1,8]",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let csv = std::fs::read_to_string(dir.path().join("histogram.csv")).unwrap();
    assert!(csv.starts_with("flavor,sweep_name,sweep_value,throughput_ops_per_cycle"), "{csv}");
    // five default flavors at two points
    assert_eq!(csv.lines().count(), 11, "{csv}");
    assert!(dir.path().join("bins.svg").exists());
    let echo = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(echo.contains("n_cores = 8"), "{echo}");

    let o = run(&["bench", "histogram", "-o", d, "--no-plots", "-s", "bench.params.n_cores=4", "-s", "bench.values=[1]"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
}

#[test]
fn cost_model_prints_exact_bits() {
    let o = run(&["cost-model", "--cores", "256", "--banks", "1024"]);
    let out = text(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(out.contains("identifier_bits=2097152"), "{out}");
    assert!(out.contains("identifier_bits=18432"), "{out}");
    let o = run(&["cost-model", "--cores", "0", "--banks", "4"]);
    assert_eq!(o.status.code(), Some(2));
}
