//! End-to-end runs of the `oneshot` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn data_file() -> String {
    root().join("data/electric_current.csv").display().to_string()
}

fn oneshot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oneshot")).args(args).env("ONESHOT_THREADS", "2").output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn validator() -> jsonschema::Validator {
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(root().join("docs/report.schema.json")).unwrap()).unwrap();
    jsonschema::validator_for(&schema).expect("schema compiles")
}

fn assert_valid(report: &Value) {
    let v = validator();
    let errors: Vec<String> = v.iter_errors(report).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

fn write_temp(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn every_command_emits_schema_valid_json() {
    let data = data_file();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_temp(
        &dir,
        "sim.toml",
        "preset = \"unbalanced\"\nreplicates = 10\nbetas = [0.0, 0.5]\ncontaminated = true\n[unbalanced]\nr = [1, 2]\n[study]\nlevel_power = true\n",
    );
    let runs: Vec<Vec<&str>> = vec![
        vec!["fit", "--data", &data, "--beta", "0,0.5"],
        vec!["ci", "--data", &data, "--beta", "0", "--stress", "25,35"],
        vec!["wald", "--data", &data, "--hypothesis", "alpha1=0.02", "--hypothesis", "alpha1 - alpha2 = 0"],
        vec!["gof", "--data", &data, "--beta", "0.5"],
        vec!["tune", "--data", &data, "--grid", "0,0.5", "--criterion", "warwick-jones"],
        vec!["simulate", "--config", &cfg, "--seed", "3"],
    ];
    for args in runs {
        let report = json(&oneshot(&args));
        assert_eq!(report["command"], args[0]);
        assert_valid(&report);
        let raw = json(&oneshot(&[args.as_slice(), &["--raw"]].concat()));
        assert_valid(&raw);
    }
}

#[test]
fn fit_reports_electric_current_estimates() {
    let report = json(&oneshot(&["fit", "--data", &data_file(), "--beta", "0"]));
    let eta = &report["fits"][0]["theta_hat"]["eta"];
    assert_eq!(eta[0].as_f64().unwrap(), 0.130262);
    assert_eq!(report["fits"][0]["converged"], true);
    assert_eq!(report["data"]["total_devices"], 120);
    assert_eq!(report["provenance"]["input_sha256"].as_str().unwrap().len(), 64);
    assert!(report["provenance"]["seed"].is_null());
}

#[test]
fn raw_output_keeps_full_precision() {
    let rounded = json(&oneshot(&["gof", "--data", &data_file(), "--beta", "0"]));
    let raw = json(&oneshot(&["gof", "--data", &data_file(), "--beta", "0", "--raw"]));
    let (r, f) = (rounded["goodness_of_fit"][0]["m_stat"].as_f64().unwrap(), raw["goodness_of_fit"][0]["m_stat"].as_f64().unwrap());
    assert_ne!(r, f);
    assert!((r - f).abs() < 1e-5);
    assert_eq!(oneshot_cli::report::round_sig(f, 6), r);
}

#[test]
fn out_flag_writes_the_report_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = oneshot(&["fit", "--data", &data_file(), "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_valid(&report);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(oneshot(&["fit", "--bogus"]).status.code(), Some(64));
    assert_eq!(oneshot(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(oneshot(&[]).status.code(), Some(64));
    assert_eq!(oneshot(&["--help"]).status.code(), Some(0));
    assert_eq!(oneshot(&["--version"]).status.code(), Some(0));

    let over = write_temp(&dir, "over.csv", "inspection_time,x1,tested,failures\n1,1,5,6\n");
    assert_eq!(oneshot(&["fit", "--data", &over]).status.code(), Some(2));
    let malformed = write_temp(&dir, "bad.csv", "inspection_time,x1,tested,failures\n1,1,5,2\n2,abc,5,1\n");
    let out = oneshot(&["fit", "--data", &malformed]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let empty = write_temp(&dir, "empty.csv", "");
    assert_eq!(oneshot(&["fit", "--data", &empty]).status.code(), Some(2));
    assert_eq!(oneshot(&["fit", "--data", "/nonexistent/file.csv"]).status.code(), Some(2));
    assert_eq!(oneshot(&["fit", "--data", &data_file(), "--beta=-1"]).status.code(), Some(2));

    let out = oneshot(&["fit", "--data", &data_file(), "--max-iterations", "2"]);
    assert_eq!(out.status.code(), Some(3));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["fits"][0]["converged"], false);
    assert_valid(&report);

    let bad_cfg = write_temp(&dir, "bad.toml", "preset = \"balanced\"\n");
    assert_eq!(oneshot(&["simulate", "--config", &bad_cfg]).status.code(), Some(2));
    assert_eq!(oneshot(&["wald", "--data", &data_file(), "--hypothesis", "gamma1=0"]).status.code(), Some(64));
    assert_eq!(oneshot(&["ci", "--data", &data_file(), "--stress", "25,35", "--time", "3"]).status.code(), Some(2));

    let threads = Command::new(env!("CARGO_BIN_EXE_oneshot"))
        .args(["fit", "--data", &data_file()])
        .env("ONESHOT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn simulate_defaults_to_a_fixed_seed_and_emits_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_temp(&dir, "s.toml", "preset = \"balanced\"\nreplicates = 5\nbetas = [0.0, 0.6]\n[balanced]\nk_cell = [50, 70]\nb = 0.0\nc0 = 6.0\n");
    let plot = dir.path().join("plot.csv");
    let a = json(&oneshot(&["simulate", "--config", &cfg, "--emit-plot-data", plot.to_str().unwrap()]));
    let b = json(&oneshot(&["simulate", "--config", &cfg]));
    assert_eq!(a, b);
    assert_eq!(a["provenance"]["seed"], oneshot_cli::args::DEFAULT_SEED);
    let csv = std::fs::read_to_string(plot).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("sweep,x,series,metric,parameter,value"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // 2 designs × 2 β × 5 parameters × {bias, mse}.
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|r| r.len() == 6 && r[0] == "k_cell"));
    assert!(rows.iter().any(|r| r[1] == "70" && r[2] == "beta=0.6" && r[3] == "mse" && r[4] == "alpha2"));
    let c = json(&oneshot(&["simulate", "--config", &cfg, "--seed", "1"]));
    assert_ne!(a["simulation"], c["simulation"]);
}

#[test]
fn bundled_data_round_trips() {
    let text = std::fs::read_to_string(data_file()).unwrap();
    let data = oneshot_core::io::read_device_csv(text.as_bytes()).unwrap();
    assert_eq!(data, oneshot_core::fixtures::electric_current());
    assert_eq!(oneshot_core::io::device_csv_string(&data).unwrap(), text);
    let counts: Vec<u64> = (0..3).flat_map(|i| (0..4).map(move |s| (i, s))).map(|(i, s)| data.failure_count(i, s)).collect();
    assert_eq!(counts, vec![4, 8, 9, 8, 7, 9, 9, 9, 6, 10, 9, 10]);
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(root().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg = oneshot_cli::config::SimConfig::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!cfg.designs(0).unwrap().is_empty());
    }
}
