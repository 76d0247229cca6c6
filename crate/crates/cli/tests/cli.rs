use std::path::Path;
use std::process::{Command, Output};

fn svcal(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svcal")).args(args).current_dir(dir).output().expect("run svcal")
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--mu", "-1", "--phi", "0.95", "--sigma2", "0.03", "--T", "50", "--seed", "7"];
    let a = svcal(&[&args[..], &["--out", "a.csv"]].concat(), dir.path());
    let b = svcal(&[&args[..], &["--out", "b.csv"]].concat(), dir.path());
    assert!(a.status.success() && b.status.success());
    let (fa, fb) = (std::fs::read(dir.path().join("a.csv")).unwrap(), std::fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(fa, fb);
    let r = rows(&dir.path().join("a.csv"));
    assert_eq!(r.len(), 50);
    assert_eq!(&r[0][0], "1");
}

#[test]
fn invalid_parameters_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = svcal(&["simulate", "--mu", "0", "--phi", "1.5", "--sigma2", "0.1", "--T", "10", "--out", "x.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("phi"));
    assert_eq!(svcal(&["nonsense"], dir.path()).status.code(), Some(2));
    let missing = svcal(&["fit", "--data", "missing.csv"], dir.path());
    assert_ne!(missing.status.code(), Some(0));
}

#[test]
fn fit_prices_uses_log_returns() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("date,price\n");
    let mut p = 100.0f64;
    for i in 0..41 {
        p *= 1.0 + 0.01 * ((i * 7 % 11) as f64 - 5.0) / 5.0;
        text.push_str(&format!("2020-{:02}-{:02},{p:.4}\n", i / 28 + 1, i % 28 + 1));
    }
    std::fs::write(dir.path().join("prices.csv"), text).unwrap();
    let out = svcal(
        &["fit", "--sampler", "ksc", "--param", "centered", "--data", "prices.csv", "--draws", "200", "--burnin", "100", "--out", "fit"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("fit/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_obs"], 40);
    let draws = rows(&dir.path().join("fit/draws.csv"));
    assert_eq!(draws.len(), 200);
    assert!(String::from_utf8_lossy(&out.stdout).contains("sigma2"));
}

#[test]
fn priorpred_single_draw_skips_the_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = svcal(&["priorpred", "--n", "1", "--out", "pp"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(rows(&dir.path().join("pp/h2.csv")).len(), 1);
    assert!(!dir.path().join("pp/h2_overlay.svg").exists());
    let many = svcal(&["priorpred", "--n", "500", "--out", "pp2"], dir.path());
    assert!(many.status.success());
    assert!(dir.path().join("pp2/h2_overlay.svg").exists());
}

#[test]
fn sbc_run_resume_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{
        "out_dir": "run",
        "sbc": {
            "sampler": "ksc",
            "parameterization": "centered",
            "iterations": 6,
            "series_len": 20,
            "ksc": { "n_burnin": 50, "n_draws": 39 }
        }
    }"#;
    std::fs::write(dir.path().join("run.json"), config).unwrap();
    let first = svcal(&["sbc", "run", "--config", "run.json", "--stop-after", "2"], dir.path());
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(String::from_utf8_lossy(&first.stdout).contains("--resume"));
    let rest = svcal(&["sbc", "run", "--config", "run.json", "--resume"], dir.path());
    assert!(rest.status.success());
    let report = svcal(&["sbc", "report", "--in", "run/ranks.csv", "--bins", "4"], dir.path());
    assert!(report.status.success(), "{}", String::from_utf8_lossy(&report.stderr));
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("mu") && !text.contains("PARTIAL"));
    assert!(dir.path().join("run/chi2.csv").exists());
    assert!(dir.path().join("run/hist_sigma2.svg").exists());

    std::fs::write(dir.path().join("bad.json"), r#"{"sbc": {"itrations": 3}}"#).unwrap();
    assert_eq!(svcal(&["sbc", "run", "--config", "bad.json"], dir.path()).status.code(), Some(2));
}
