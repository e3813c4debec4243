use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bvflow::io::{parse_plot_csv, report_from_jsonl, PLOT_COLUMNS};

fn bvflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bvflow")).args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn bundled(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml")).display().to_string()
}

const ZERO_FD: &str = r#"
name = "zero-fd"
drift = { id = "zero", dimension = 2 }

[engine]
dimension = 2
seed = 3
paths = 200
x = [0.1, -0.4]
direction = [1.0, 2.0]

[[experiments]]
kind = "finite-difference"
epsilons = [0.5, 0.1, 0.02]

[[experiments]]
kind = "gronwall"
"#;

fn write_scenario(dir: &Path, body: &str) -> String {
    let p = dir.join("s.toml");
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn zero_drift_finite_difference_is_exactly_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let s = write_scenario(tmp.path(), ZERO_FD);
    let out = tmp.path().join("out");
    let o = bvflow(&["run", &s, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let (meta, points) = report_from_jsonl(&std::fs::read_to_string(out.join("00-finite-difference.jsonl")).unwrap()).unwrap();
    let meta = meta.unwrap();
    assert_eq!((meta.header.scenario.as_str(), meta.header.seed), ("zero-fd", 3));
    assert_eq!(meta.header.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(points.len(), 3);
    assert!(points.iter().all(|p| p.estimate == 0.0 && p.std_error == 0.0));
    assert!(meta.checks.iter().any(|c| c.name == "zero-drift-exact-zero" && c.pass));
}

#[test]
fn unknown_drift_id_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let s = write_scenario(tmp.path(), &ZERO_FD.replace("\"zero\"", "\"zigzag\""));
    let o = bvflow(&["run", &s]);
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    assert!(err.contains("zigzag"), "{err}");
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn malformed_toml_exits_2_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let s = write_scenario(tmp.path(), &ZERO_FD.replace("seed = 3", "seed = = 3"));
    let o = bvflow(&["run", &s]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("line 7"), "{}", text(&o.stderr));
}

#[test]
fn invalid_schedule_exits_2_before_simulating() {
    let tmp = tempfile::tempdir().unwrap();
    let s = write_scenario(tmp.path(), &ZERO_FD.replace("[0.5, 0.1, 0.02]", "[0.5, 0.5]"));
    let out = tmp.path().join("out");
    let o = bvflow(&["run", &s, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn outputs_are_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<_> = ["1", "3", "3"]
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let out = tmp.path().join(format!("o{i}"));
            let o = bvflow(&["run", &bundled("sign-drift-1d"), "--paths", "120", "--workers", w, "--out-dir", out.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
            read_dir_sorted(&out)
        })
        .collect();
    assert!(runs[0].len() > 5);
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);
}

#[test]
fn seed_flag_changes_outputs_and_headers() {
    let tmp = tempfile::tempdir().unwrap();
    let s = write_scenario(tmp.path(), &ZERO_FD.replace("kind = \"gronwall\"", "kind = \"flow-increments\"\nlevels = [4.0]"));
    let out = tmp.path().join("o");
    let o = bvflow(&["run", &s, "--seed", "99", "--dt", "0.01", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    for (name, body) in read_dir_sorted(&out) {
        let first = text(&body).lines().next().unwrap().to_string();
        assert!(first.contains("zero-fd") && first.contains("99") && first.contains(env!("CARGO_PKG_VERSION")), "{name}: {first}");
    }
    let trace = std::fs::read_to_string(out.join("trace-flow.csv")).unwrap();
    assert!(trace.lines().next().unwrap().contains("dt=0.01"));
    assert_eq!(trace.lines().count(), 2 + 101);
}

#[test]
fn plot_data_round_trips_report_values() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = bvflow(&["run", &bundled("smooth-tanh"), "--paths", "100", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let report = out.join("00-finite-difference.jsonl");
    let o = bvflow(&["plot-data", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = text(&o.stdout);
    assert!(csv.starts_with("# scenario=smooth-tanh seed=11"));
    let parsed = parse_plot_csv(&csv).unwrap();
    let (_, points) = report_from_jsonl(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed.len(), 3);
    for (a, b) in parsed.iter().zip(&points) {
        assert_eq!(a.schedule_value.to_bits(), b.schedule_value.to_bits());
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        assert_eq!(a.bound, b.bound);
    }

    let o = bvflow(&["plot-data", report.to_str().unwrap(), "--out-dir", tmp.path().join("plots").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(tmp.path().join("plots/00-finite-difference.csv")).unwrap(), csv);
}

#[test]
fn plot_data_of_empty_report_is_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let o = bvflow(&["plot-data", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = text(&o.stdout);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1], PLOT_COLUMNS);
}

#[test]
fn kato_check_verdicts() {
    let cases = [("atom:1", "KATO"), ("atom:2", "NOT KATO"), ("atom:3", "NOT KATO"), ("sphere:3", "KATO"), ("uniform-ball:2", "KATO")];
    for (arg, want) in cases {
        let o = bvflow(&["kato-check", arg]);
        assert_eq!(o.status.code(), Some(0), "{arg}");
        let out = text(&o.stdout);
        assert_eq!(out.lines().next(), Some(want), "{arg}");
        assert!(out.contains("epsilon,local_potential"));
        assert_eq!(out.lines().skip(2).take(5).count(), 5);
    }
}

#[test]
fn kato_check_reads_files_and_rejects_malformed() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("m.toml");
    std::fs::write(&good, "dimension = 1\npositive = [{ kind = \"atom\", location = [0.2], mass = 2.0 }]\n").unwrap();
    let o = bvflow(&["kato-check", good.to_str().unwrap(), "--out-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert_eq!(text(&o.stdout).lines().next(), Some("KATO"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("kato.json")).unwrap()).unwrap();
    assert_eq!(json["is_kato"], true);
    assert!(json["per_epsilon_values"].is_array() && json["candidate_grid"].is_array());

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "dimension = 1\npositive = [{ kind = \"blob\" }]\n").unwrap();
    assert_eq!(bvflow(&["kato-check", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(bvflow(&["kato-check", "atom:0"]).status.code(), Some(2));
}

#[test]
fn bundled_scenarios_validate() {
    for name in ["smooth-tanh", "sign-drift-1d", "ball-indicator-2d"] {
        let s = bvflow::scenario::load(Path::new(&bundled(name))).unwrap();
        assert_eq!(s.name, name);
        s.validate().unwrap();
    }
}
