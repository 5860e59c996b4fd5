use std::path::Path;
use std::process::{Command, Output};

use kimura_cli::read_report;
use kimura_core::diagnostics::Verdict;

fn kimura(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kimura")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_on_constant_model_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"model_name": "const-wf-1d", "sim": {"horizon_t": 1.0, "dt": 0.01, "n_paths": 10}, "q": 0.1}"#,
    );
    let o = kimura(&["validate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let reports = read_report(&out).unwrap();
    assert!(reports.len() >= 4);
    assert!(reports.iter().all(|r| r.verdict == Verdict::Pass));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 not PASS"));
}

#[test]
fn support_on_negative_drift_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n.json",
        r#"{"model_name": "neg-drift", "sim": {"horizon_t": 2.0, "dt": 0.01, "n_paths": 200},
            "q": 0.05, "experiments": ["support"]}"#,
    );
    let out = dir.path().join("out");
    let o = kimura(&["diagnose", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let reports = read_report(&out).unwrap();
    assert_eq!(reports[0].name, "support");
    assert_eq!(reports[0].verdict, Verdict::Fail);
}

#[test]
fn config_errors_exit_two_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#"{"model_name": "const-wf-1d", "sim": {"horizon_t": 1.0, "dt": 0.01, "n_paths": 10}, "q": QQ, "experiments": [EE]}"#;
    let cases = [
        (base.replace("QQ", "0.3").replace("EE", ""), "q0"),
        (base.replace("QQ", "0.1").replace("EE", "\"frobnicate\""), "frobnicate"),
        (base.replace("QQ", "0.1").replace("EE", "").replace("\"q\"", "\"qq\""), "unknown field"),
        ("{\n\"model_name\": }".to_string(), "line 2"),
        (base.replace("QQ", "0.1").replace("EE", "").replace("const-wf-1d", "no-such-model"), "no-such-model"),
    ];
    for (i, (body, needle)) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("bad{i}.json"), body);
        let o = kimura(&["diagnose", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "case {i}");
        assert!(stderr(&o).contains(needle), "case {i}: {}", stderr(&o));
    }
}

#[test]
fn report_is_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "d.json",
        r#"{"model_name": "log-drift", "sim": {"horizon_t": 0.5, "dt": 0.01, "n_paths": 300},
            "q": 0.05, "experiments": ["khasminskii", "martingale-residual", "girsanov-compare", "restart"]}"#,
    );
    let run = |tag: &str, workers: &str| {
        let out = dir.path().join(tag);
        let o = kimura(&["diagnose", "--config", &cfg, "--seed", "11", "--workers", workers, "--out", out.to_str().unwrap()]);
        assert!(o.status.code().is_some_and(|c| c < 2), "{}", stderr(&o));
        (std::fs::read(out.join("report.json")).unwrap(), std::fs::read(out.join("weights.csv")).unwrap())
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "3");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let other = {
        let out = dir.path().join("d");
        kimura(&["diagnose", "--config", &cfg, "--seed", "12", "--out", out.to_str().unwrap()]);
        std::fs::read(out.join("report.json")).unwrap()
    };
    assert_ne!(a.0, other);
}

#[test]
fn simulate_exports_paths_and_increments() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"model_name": "wf-with-free-coord", "sim": {"horizon_t": 0.1, "dt": 0.01, "n_paths": 3,
            "retain_increments": true}, "q": 0.05, "write_paths": true}"#,
    );
    let out = dir.path().join("out");
    let o = kimura(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let paths = std::fs::read_to_string(out.join("paths.csv")).unwrap();
    assert!(paths.starts_with("path,time,x1,y1\n"));
    assert_eq!(paths.lines().count(), 1 + 3 * 11);
    let inc = std::fs::read_to_string(out.join("increments.csv")).unwrap();
    assert!(inc.starts_with("path,step,dw1,dw2\n"));
    assert_eq!(inc.lines().count(), 1 + 3 * 10);
}

#[test]
fn girsanov_compare_on_log_drift_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.json",
        r#"{"model_name": "log-drift", "sim": {"horizon_t": 1.0, "dt": 0.002, "n_paths": 10000, "master_seed": 5},
            "q": 0.05}"#,
    );
    let out = dir.path().join("out");
    let o = kimura(&["compare", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let reports = read_report(&out).unwrap();
    let ks = reports.iter().find(|r| r.name == "marginal_ks").unwrap();
    assert_eq!(ks.verdict, Verdict::Pass, "{ks:?}");
    assert_eq!(o.status.code(), Some(0), "{reports:?}");
    let weights = std::fs::read_to_string(out.join("weights.csv")).unwrap();
    assert!(weights.starts_with("path,time,log_weight\n"));
}

#[test]
fn holder_command_writes_norms_and_flags_rough_drift() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "h.json",
        r#"{"model_name": "rough-drift", "model_params": {"p": 0.1},
            "sim": {"horizon_t": 1.0, "dt": 0.01, "n_paths": 1}, "q": 0.01,
            "tolerances": {"alpha": 0.9}, "holder_grid": {"levels": 4}}"#,
    );
    let out = dir.path().join("out");
    let o = kimura(&["holder", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let norms = std::fs::read_to_string(out.join("norms.csv")).unwrap();
    assert!(norms.starts_with("region,term,level,estimate\n"));
    assert!(norms.contains("b_1"));
}

#[test]
fn report_command_replays_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.json",
        r#"{"model_name": "indefinite-ellipticity", "sim": {"horizon_t": 1.0, "dt": 0.01, "n_paths": 1}, "q": 0.01}"#,
    );
    let out = dir.path().join("out");
    let first = kimura(&["validate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(first.status.code(), Some(1));
    let replay = kimura(&["report", "--out", out.to_str().unwrap()]);
    assert_eq!(replay.status.code(), Some(1));
    assert_eq!(replay.stdout, first.stdout[..replay.stdout.len()]);
}

#[test]
fn list_names_every_experiment() {
    let o = kimura(&["list"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for name in [
        "khasminskii",
        "novikov",
        "support",
        "martingale-residual",
        "girsanov-compare",
        "restart",
        "holder-validate",
        "const-wf-1d",
        "log-drift",
    ] {
        assert!(text.contains(name), "{name}");
    }
}
