//! Exercises the `paircycle` binary: outputs, exit codes and determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_paircycle"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Scenario-I-like data on six items: two cyclic triads on top of noise-free
/// merits plus a deterministic perturbation, 20 comparisons per pair.
fn write_cyclic_csv(dir: &Path) -> PathBuf {
    let k = 6;
    let mut nu = vec![vec![0.0; k + 1]; k + 1];
    let mut add_cycle = |a: usize, b: usize, c: usize, w: f64| {
        for (x, y) in [(a, b), (b, c), (c, a)] {
            nu[x][y] += w;
            nu[y][x] -= w;
        }
    };
    add_cycle(1, 2, 3, 1.0);
    add_cycle(1, 4, 5, -1.0);
    let mut body = String::from("i,j,y\n");
    let mut state: u64 = 17;
    for (i, row) in nu.iter().enumerate().skip(1) {
        for (j, &cell) in row.iter().enumerate().skip(i + 1) {
            for r in 0..20 {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                let noise = ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 2.0;
                let y = cell + noise;
                if r % 3 == 0 {
                    body.push_str(&format!("{j},{i},{}\n", -y));
                } else {
                    body.push_str(&format!("{i},{j},{y}\n"));
                }
            }
        }
    }
    let path = dir.join("cyclic.csv");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn ingest_check_summarizes_valid_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_cyclic_csv(dir.path());
    let out = run(&["ingest-check", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("K = 6"), "{text}");
    assert!(text.contains("comparisons = 300"), "{text}");
}

#[test]
fn data_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let incomplete = dir.path().join("incomplete.csv");
    fs::write(&incomplete, "i,j,y\n1,2,1\n1,3,2\n").unwrap();
    let out = run(&["ingest-check", incomplete.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("(2,3)"));

    let bad_row = dir.path().join("bad.csv");
    fs::write(&bad_row, "i,j,y\n1,2,1\n1,3,oops\n2,3,1\n").unwrap();
    let out = run(&["analyze", bad_row.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = run(&["analyze", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn config_errors_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_cyclic_csv(dir.path());
    let csv = csv.to_str().unwrap();
    assert_eq!(code(&run(&["analyze", csv, "--alpha-lof", "1.5"])), 3);
    assert_eq!(code(&run(&["analyze", csv, "--method", "lasso"])), 3);
    assert_eq!(code(&run(&["analyze", csv, "--correction", "holm"])), 3);
    assert_eq!(code(&run(&["frobnicate"])), 3);

    let cfg = dir.path().join("study.toml");
    fs::write(&cfg, "seed = 1\nm = [5]\n[[scenario]]\npreset = \"V\"\n").unwrap();
    let out = run(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["analyze", "--help"])), 0);
}

#[test]
fn betting_without_replication_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("single.csv");
    fs::write(&csv, "i,j,y\n1,2,1\n1,3,-1\n2,3,1\n").unwrap();
    let out = run(&["bet", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert_eq!(code(&run(&["analyze", csv.to_str().unwrap(), "--bet"])), 4);
    // the same data analyzes fine without betting
    assert_eq!(code(&run(&["analyze", csv.to_str().unwrap()])), 0);
}

#[test]
fn analyze_writes_round_trippable_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_cyclic_csv(dir.path());
    let report = dir.path().join("report.json");
    let out = run(&[
        "analyze",
        csv.to_str().unwrap(),
        "--method",
        "ftbs-fsr",
        "--correction",
        "bh",
        "--alpha-comp",
        "0.1",
        "--seed",
        "7",
        "--bet",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&report).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["config"]["method"], "ftbs-fsr");
    assert_eq!(value["config"]["correction"], "bh_fdr");
    assert_eq!(value["config"]["seed"], 7);
    let triads = value["selection"]["triads"].as_array().unwrap();
    assert!(triads.contains(&serde_json::json!([1, 2, 3])), "{triads:?}");
    assert!(triads.contains(&serde_json::json!([1, 4, 5])), "{triads:?}");
    assert_eq!(value["transitivity"]["global"], "intransitive");
    assert!(value["betting"]["total_win"].as_f64().unwrap() > 0.0);
    let report: paircycle::analysis::AnalysisReport = serde_json::from_str(&text).unwrap();
    let again = serde_json::to_string_pretty(&report).unwrap() + "\n";
    assert_eq!(again, text);
}

#[test]
fn bet_prints_gains() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_cyclic_csv(dir.path());
    let out = run(&["bet", csv.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&out), 0);
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let lines = value["betting"]["lines"].as_array().unwrap();
    assert_eq!(lines.len(), 15);
    let total: f64 = lines.iter().map(|l| l["win"].as_f64().unwrap()).sum();
    assert!((total - value["betting"]["total_win"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.json");
    fs::write(
        &cfg,
        r#"{"seed": 3, "replications": 5, "m": [5, 10, 20], "methods": ["ftbs", "fsts", "fsr", "ftbs-fsr"],
            "mse": true, "scenario": [{"preset": "I"}, {"preset": "II"}]}"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = run(&[
            "simulate",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["selection.csv", "mse.csv", "study.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let table = fs::read_to_string(a.join("selection.csv")).unwrap();
    // two scenarios x 3 values of m x 4 methods, plus the header
    assert_eq!(table.lines().count(), 1 + 2 * 3 * 4);

    let single = dir.path().join("single");
    let out = run(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--replications",
        "1",
        "--out",
        single.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(fs::read_to_string(single.join("selection.csv"))
        .unwrap()
        .contains(",1,"));
}
