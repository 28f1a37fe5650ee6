use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tdiff"))
}

fn gallery_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("gallery").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tdiff-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn report_at(path: &PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn checked_in_gallery_matches_the_generated_one() {
    for (name, inst) in tdiff::instance::all_instances().unwrap() {
        let on_disk = std::fs::read_to_string(gallery_file(&name)).unwrap();
        let fresh = serde_json::to_string_pretty(&inst).unwrap() + "\n";
        assert!(on_disk == fresh, "{name} is stale; regenerate with `tdiff gallery --all --write`");
    }
}

#[test]
fn strict_example_records_an_expected_refutation() {
    let out_path = scratch("strict.json");
    let path = gallery_file("example_4_7.json");
    let out = run(&["run", path.to_str().unwrap(), "--json-out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = report_at(&out_path);
    let tasks = report["tasks"].as_array().unwrap();
    assert!(tasks.iter().any(|t| t["status"] == "expected_refutation" && t["outcome"] == "refuted"));
    assert!(tasks.iter().any(|t| t["outcome"] == "verified"));
    assert_eq!(report["summary"]["exit_code"], 0);
}

#[test]
fn malformed_instance_exits_one_with_a_position() {
    let path = scratch("broken.json");
    std::fs::write(&path, "{\"version\": 1,\n \"tasks\": [ {\"op\": }\n").unwrap();
    let out = run(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn missing_file_and_bad_tolerance_exit_one() {
    assert_eq!(run(&["run", "/nonexistent/instance.json"]).status.code(), Some(1));
    let path = gallery_file("example_4_7.json");
    let out = run(&["run", path.to_str().unwrap(), "--tol", "nonsense=1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unexpected_refutation_exits_two() {
    let path = scratch("refuted.json");
    let text = r#"{"version": 1, "tasks": [{"op": "certify", "args": {"map": "abs", "x": [0], "notion": "outerT",
        "t": {"kind": "zero", "dim_in": 1, "dim_out": 1}}}]}"#;
    std::fs::write(&path, text).unwrap();
    let out = run(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("REFUTED"));
}

#[test]
fn coderivative_suite_passes() {
    let path = gallery_file("mordukhovich.json");
    let out_path = scratch("mord.json");
    let out = run(&["mord", path.to_str().unwrap(), "--json-out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("12 tasks: 12 ok"));
    for t in report_at(&out_path)["tasks"].as_array().unwrap() {
        let rec = &t["record"];
        assert!(rec["graphical_modulus"].as_f64().unwrap() > 0.0);
        assert!(rec["estimate_lip"]["value"].as_f64().is_some());
    }
}

#[test]
fn subcommands_select_tasks_by_operation() {
    let path = gallery_file("clarke_corpus.json");
    let out_path = scratch("filtered.json");
    let out = run(&["certify", path.to_str().unwrap(), "--json-out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report_at(&out_path)["summary"]["tasks"], 0);
}

#[test]
fn same_seed_gives_identical_reports() {
    let path = gallery_file("example_4_6.json");
    let a = scratch("seed_a.json");
    let b = scratch("seed_b.json");
    for (target, jobs) in [(&a, "1"), (&b, "3")] {
        let out = run(&["run", path.to_str().unwrap(), "--seed", "5", "--jobs", jobs, "--json-out", target.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(report_at(&a)["flags"]["seed"], 5);
}
