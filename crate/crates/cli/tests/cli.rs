use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const GOLDEN_TABLE3: &str = include_str!("golden/table3.csv");
const GROUP3_FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/group3_analog.json");

fn tms(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tms"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("TMS_SEED")
        .env_remove("TMS_CONFIG")
        .env_remove("TMS_GROUPS")
        .env_remove("TMS_SIGMA2")
        .env_remove("TMS_MODE")
        .env_remove("TMS_FORCE")
        .output()
        .expect("tms runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = tms(out, args);
    assert!(
        o.status.success(),
        "tms {args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p).unwrap()
}

/// CSV body without the provenance comment.
fn records(text: &str) -> Vec<Vec<String>> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    csv::Reader::from_reader(body.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

fn json(p: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&read(p)).unwrap()
}

#[test]
fn cost_table_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["cost"]);
    assert_eq!(read(dir.path().join("table3.csv")), GOLDEN_TABLE3);
    let summary = json(dir.path().join("cost.json"));
    assert_eq!(summary["serial_below_parallel"], true);
    assert_eq!(summary["analog_below_binary"], true);
    assert_eq!(summary["seed"], serde_json::Value::Null);
}

#[test]
fn zero_cost_table_gives_zero_report() {
    let dir = tempfile::tempdir().unwrap();
    let bundled = read(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/cost_table.toml"));
    let zeroed: String = bundled
        .lines()
        .map(|l| match l.split_once('=') {
            Some((k, _)) if !l.starts_with('#') => format!("{k}= 0.0\n"),
            _ => format!("{l}\n"),
        })
        .collect();
    let table = dir.path().join("zero.toml");
    fs::write(&table, zeroed).unwrap();
    ok(dir.path(), &["cost", "--table", table.to_str().unwrap()]);
    for row in records(&read(dir.path().join("table3.csv"))) {
        for v in &row[1..] {
            assert!(v.is_empty() || v == "0", "{row:?}");
        }
    }
}

#[test]
fn dataset_counts_and_checksums() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--seed", "3", "dataset", "--groups", "fusion", "--copies", "5"]);
    let m = json(dir.path().join("dataset.json"));
    assert_eq!(m["count"], 625);
    assert_eq!(m["classes"], 125);
    assert_eq!(m["seed"], 3);
    let csv = read(dir.path().join("dataset.csv"));
    assert!(csv.starts_with("# tms "));
    assert_eq!(records(&csv).len(), 625);
    let first = m["sha256"].clone();

    ok(dir.path(), &["--seed", "3", "--force", "dataset", "--groups", "fusion"]);
    assert_eq!(json(dir.path().join("dataset.json"))["sha256"], first);
    ok(dir.path(), &["--seed", "4", "--force", "dataset", "--groups", "fusion"]);
    assert_ne!(json(dir.path().join("dataset.json"))["sha256"], first);

    ok(dir.path(), &["--seed", "3", "--force", "dataset", "--groups", "2", "--copies", "1"]);
    assert_eq!(records(&read(dir.path().join("dataset.csv"))).len(), 26);
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tms"))
        .args(["--out", dir.path().to_str().unwrap(), "dataset", "--copies", "1"])
        .env("TMS_SEED", "12")
        .env("TMS_GROUPS", "4")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(dir.path().join("dataset.json"));
    assert_eq!(m["seed"], 12);
    assert_eq!(m["selection"], "Group4");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tms(dir.path(), &["dataset"]).status.code(), Some(2));
    assert_eq!(tms(dir.path(), &["--config", "/nonexistent.toml", "cost"]).status.code(), Some(2));
    assert_eq!(tms(dir.path(), &["--seed", "1", "train", "--groups", "1,2"]).status.code(), Some(2));
    assert_eq!(
        tms(dir.path(), &["--seed", "1", "eval", "--network", "/nonexistent.json"]).status.code(),
        Some(2)
    );
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "memristor.r_on = 5e5\n").unwrap();
    assert_eq!(tms(dir.path(), &["--config", bad.to_str().unwrap(), "cost"]).status.code(), Some(2));
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["cost"]);
    let o = tms(dir.path(), &["cost"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    ok(dir.path(), &["--force", "cost"]);
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = tms(&blocker.join("sub"), &["cost"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn training_is_reproducible_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["--seed", "8", "train", "--groups", "2", "--epochs", "40"];
    ok(&a, &args);
    ok(&b, &args);
    assert_eq!(read(a.join("network.json")), read(b.join("network.json")));
    let net = json(a.join("network.json"));
    assert_eq!(net["seed"], 8);
    assert_eq!(net["network"]["format"], "tms-network/1");

    let network = a.join("network.json");
    let eval = ["--seed", "2", "eval", "--network", network.to_str().unwrap(), "--sigma2", "0.02,0.5"];
    ok(&a, &eval);
    ok(&b, &eval);
    let text = read(a.join("eval.csv"));
    assert_eq!(text, read(b.join("eval.csv")));
    let rows = records(&text);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "Group2");
    assert_eq!(rows[0][6], "520");
}

#[test]
fn group3_fixture_network_holds_up_at_moderate_noise() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--seed", "5", "eval", "--network", GROUP3_FIXTURE, "--sigma2", "0.1"]);
    let rows = records(&read(dir.path().join("eval.csv")));
    let accuracy: f64 = rows[0][7].parse().unwrap();
    assert!(accuracy >= 87.2 - 4.0, "{accuracy}");
}

#[test]
fn small_sweep_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "--seed", "1", "sweep", "--groups", "2", "--sigma2", "0.02,0.5", "--mode", "analog",
            "--seeds", "2", "--epochs", "20", "--draws", "2",
        ],
    );
    let runs = records(&read(dir.path().join("sweep_runs.csv")));
    assert_eq!(runs.len(), 4);
    let table = read(dir.path().join("table1.csv"));
    assert!(table.contains("groups,analog_0.02,analog_0.5\n"));
    assert_eq!(records(&table)[0][0], "Group2");
}

#[test]
fn leakage_sweep_flags_the_degenerate_case() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["leakage", "--wire", "0,326", "--g-off", "0,1e-4"]);
    let rows = records(&read(dir.path().join("leakage.csv")));
    let find = |scenario: &str, wire: &str, g: &str| {
        rows.iter()
            .find(|r| r[0] == scenario && r[1] == wire && r[2] == g)
            .unwrap_or_else(|| panic!("{scenario} {wire} {g} missing"))
            .clone()
    };
    let ideal = find("sensor_4x2_2t1m1s", "0.0", "0.0");
    assert!(ideal[3].parse::<f64>().unwrap() < 1e-12);
    let calibrated = find("sensor_4x2_2t1m1s_configured", "326.0", "0.0001");
    let leak: f64 = calibrated[3].parse().unwrap();
    assert!((0.12..=0.20).contains(&leak), "{leak}");
    let single = rows.iter().find(|r| r[0] == "single_cell_2x2_1t1m1s").unwrap();
    assert_eq!(single[4], "true");
    assert_eq!(rows.len(), 1 + 4 + 1);
}
