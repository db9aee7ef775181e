use std::path::Path;
use std::process::{Command, Output};

use migsched::report::{Experiment, ExperimentSpec, ResultsFile};

const SPEC: &str = r#"
name = "cli-test"
cluster_size = 8
runs = 4
seed = 99
distributions = ["uniform", "bimodal"]
schedulers = ["mfi", "ff", "wf-bi"]
"#;

fn migsched(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_migsched"))
        .args(args)
        .current_dir(cwd)
        .env_remove("MIGSCHED_OUT")
        .env_remove("MIGSCHED_PARALLELISM")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_spec(dir: &Path, out: &str) {
    std::fs::write(dir.join("spec.toml"), SPEC).unwrap();
    let o = migsched(&["run", "--spec", "spec.toml", "--out", out], dir);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn run_writes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    run_spec(tmp.path(), "out");
    for f in ["results.csv", "aggregates.csv", "results.json", "runs.jsonl", "manifest.json"] {
        assert!(tmp.path().join("out").join(f).is_file(), "{f} missing");
    }
    let csv = std::fs::read_to_string(tmp.path().join("out/results.csv")).unwrap();
    assert!(csv.starts_with("scheduler,distribution,cluster_size,horizon,run,seed,slot,grid_pct,demand_pct,"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["spec"]["seed"], 99);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 4);
    assert_eq!(manifest["files"][0]["sha256"].as_str().unwrap().len(), 64);
    let results = ResultsFile::load(&tmp.path().join("out")).unwrap();
    assert_eq!(results.cells.len(), 6);
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    run_spec(tmp.path(), "a");
    run_spec(tmp.path(), "b");
    for f in ["results.csv", "aggregates.csv", "results.json", "runs.jsonl"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn flag_overrides_and_env_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("spec.toml"), SPEC).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_migsched"))
        .args(["run", "--spec", "spec.toml", "--runs", "2", "--scheduler", "rr", "--format", "json"])
        .current_dir(tmp.path())
        .env("MIGSCHED_OUT", "from-env")
        .env("MIGSCHED_PARALLELISM", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("from-env");
    assert!(!dir.join("results.csv").exists());
    let results = ResultsFile::load(&dir).unwrap();
    assert_eq!(results.cells.len(), 2);
    assert!(results.cells.iter().all(|c| c.runs == 2 && c.scheduler.as_str() == "rr"));
}

#[test]
fn invalid_specs_fail_with_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("zero.toml"), SPEC.replace("runs = 4", "runs = 0")).unwrap();
    let o = migsched(&["run", "--spec", "zero.toml", "--out", "x"], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("runs"), "{}", stderr(&o));

    std::fs::write(tmp.path().join("bad.toml"), SPEC.replace("\"ff\"", "\"lottery\"")).unwrap();
    let o = migsched(&["run", "--spec", "bad.toml", "--out", "x"], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("lottery"));

    let o = migsched(&["run", "--spec", "missing.toml"], tmp.path());
    assert!(!o.status.success());
}

#[test]
fn unwritable_output_dir_fails() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("spec.toml"), SPEC).unwrap();
    std::fs::write(tmp.path().join("blocker"), "").unwrap();
    let o = migsched(&["run", "--spec", "spec.toml", "--runs", "1", "--out", "blocker/inner"], tmp.path());
    assert!(!o.status.success());
}

#[test]
fn compare_round_trips_in_memory_aggregates() {
    let tmp = tempfile::tempdir().unwrap();
    run_spec(tmp.path(), "out");
    let spec = ExperimentSpec::from_toml(SPEC).unwrap();
    let in_memory = Experiment::run(spec, None).unwrap().results_file();
    let loaded = ResultsFile::load(&tmp.path().join("out/results.json")).unwrap();
    assert_eq!(loaded, in_memory);

    let o = migsched(&["compare", "out", "--demand-point", "85", "--out", "cmp"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("raw metrics at 85% demand") && text.contains("normalized to per-metric maximum"));
    let table = std::fs::read_to_string(tmp.path().join("cmp/compare.csv")).unwrap();
    assert_eq!(table.lines().count(), 7);
    let norm = std::fs::read_to_string(tmp.path().join("cmp/compare_normalized.csv")).unwrap();
    assert!(norm.lines().skip(1).all(|l| l.split(',').skip(3).all(|v| v.parse::<f64>().unwrap() <= 1.0)));
}

#[test]
fn compare_refuses_mismatched_clusters() {
    let tmp = tempfile::tempdir().unwrap();
    run_spec(tmp.path(), "a");
    let o = migsched(&["run", "--spec", "spec.toml", "--cluster-size", "9", "--out", "b"], tmp.path());
    assert!(o.status.success());
    let o = migsched(&["compare", "a", "b"], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("cluster size"), "{}", stderr(&o));
}

#[test]
fn plot_data_writes_five_files() {
    let tmp = tempfile::tempdir().unwrap();
    run_spec(tmp.path(), "out");
    let o = migsched(&["plot-data", "out", "--out", "plots"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let acceptance = std::fs::read_to_string(tmp.path().join("plots/acceptance_vs_demand.csv")).unwrap();
    assert_eq!(acceptance.lines().next().unwrap().split(',').count(), 7);
    let bars = std::fs::read_to_string(tmp.path().join("plots/frag_severity.csv")).unwrap();
    assert_eq!(bars.lines().next().unwrap(), "distribution,MFI,FF,WF-BI");
    assert_eq!(std::fs::read_dir(tmp.path().join("plots")).unwrap().count(), 5);
}

#[test]
fn plot_data_on_empty_results_reports_no_cells() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("results.json"), r#"{"schema":"migsched.results/v1","name":null,"cells":[]}"#)
        .unwrap();
    let o = migsched(&["plot-data", "results.json"], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no cells"));
}

#[test]
fn inspect_prints_breakdown_and_dry_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = migsched(&["inspect", ".....#.."], tmp.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("free slices   7") && text.contains("frag score    9"), "{text}");

    let o = migsched(&["inspect", "........", "1g.10gb"], tmp.path());
    let text = stdout(&o);
    assert!(text.contains("fragmented    false") && text.contains("recommended   index 6"), "{text}");

    let o = migsched(&["inspect", "########"], tmp.path());
    assert!(stdout(&o).contains("no profile passes the ΔS precheck"));

    let o = migsched(&["inspect", "..x....."], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = migsched(&["inspect", "........", "9g.90gb"], tmp.path());
    assert!(!o.status.success());
}

#[test]
fn validate_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = migsched(&["validate", "--cases", "200"], tmp.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 6);
}
