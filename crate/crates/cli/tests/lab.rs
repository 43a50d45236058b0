use std::path::{Path, PathBuf};
use std::process::Command;

use drift_core::transport::{Outcome, TransportCertificate};
use drift_lab::io::verify_artifacts;
use drift_lab::pipeline::{cmd_check, cmd_drift, cmd_mu_scan, cmd_transport};
use drift_lab::{ExperimentConfig, LabError, RunStatus};
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&configs().join(name)).unwrap();
    cfg.output = out.to_path_buf();
    cfg
}

fn certificate(dir: &Path) -> TransportCertificate {
    serde_json::from_str(&std::fs::read_to_string(dir.join("certificate.json")).unwrap()).unwrap()
}

#[test]
fn shipped_configs_parse() {
    for e in std::fs::read_dir(configs()).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        }
    }
}

#[test]
fn unknown_fields_are_config_errors() {
    let text = std::fs::read_to_string(configs().join("default.toml")).unwrap();
    let e = ExperimentConfig::from_toml(&format!("{text}\nbogus = 1\n")).unwrap_err();
    assert!(matches!(e, LabError::Config(_)));
    assert_eq!(e.exit_code(), 3);

    let swapped = text.replace("range = [0.05, 0.35]", "range = [0.35, 0.05]");
    assert_ne!(swapped, text);
    assert_eq!(
        ExperimentConfig::from_toml(&swapped)
            .unwrap_err()
            .exit_code(),
        3
    );
}

#[test]
fn config_hash_tracks_content() {
    let a = ExperimentConfig::load(&configs().join("default.toml")).unwrap();
    let mut b = a.clone();
    assert_eq!(a.hash(), b.hash());
    b.output = "elsewhere".into();
    assert_eq!(a.hash(), b.hash());
    b.transport.tol *= 2.0;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn default_check_passes() {
    let dir = TempDir::new().unwrap();
    let m = cmd_check(&config("default.toml", dir.path())).unwrap();
    assert_eq!(m.status, RunStatus::Pass, "{:#?}", m.stages);
    for s in [
        "symplectic",
        "exactness",
        "cylinder",
        "spectral_gap",
        "lambda_lemma",
        "homoclinic",
    ] {
        assert!(m.stage(s).is_some_and(|r| r.passed), "{s}");
    }
    assert!(dir.path().join("checks.json").exists());
}

#[test]
fn broken_map_fails_the_check() {
    let dir = TempDir::new().unwrap();
    let m = cmd_check(&config("broken.toml", dir.path())).unwrap();
    assert_eq!(m.status, RunStatus::Fail);
    let s = m.stage("symplectic").unwrap();
    assert!(!s.passed);
    // later stages still ran
    assert!(m.stage("cylinder").is_some());
}

#[test]
fn perturbed_check_passes() {
    let dir = TempDir::new().unwrap();
    let m = cmd_check(&config("perturbed.toml", dir.path())).unwrap();
    assert_eq!(m.status, RunStatus::Pass, "{:#?}", m.stages);
}

#[test]
fn synthetic_lift_connects_and_identity_obstructs() {
    let dir = TempDir::new().unwrap();
    let lift = config("synthetic_lift.toml", &dir.path().join("lift"));
    cmd_transport(&lift).unwrap();
    assert_eq!(certificate(&lift.output).outcome, Outcome::Connecting);

    let id = config("synthetic_identity.toml", &dir.path().join("id"));
    let m = cmd_transport(&id).unwrap();
    let cert = certificate(&id.output);
    assert_eq!(cert.outcome, Outcome::Obstruction);
    assert!(m.stage("validate").unwrap().passed);
    assert!(cert
        .obstruction
        .unwrap()
        .residuals
        .iter()
        .all(|&r| r < 1e-9));
}

#[test]
fn drift_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = config("drift.toml", &dir.path().join("a"));
    let b = config("drift.toml", &dir.path().join("b"));
    let ma = cmd_drift(&a).unwrap();
    let mb = cmd_drift(&b).unwrap();
    assert_eq!(ma.status, RunStatus::Pass, "{:#?}", ma.stages);
    assert!(ma.same_outputs(&mb));
    assert!(verify_artifacts(&a.output, &ma).is_empty());
    for f in [
        "orbit.csv",
        "shadow.csv",
        "code.json",
        "shadow_report.json",
        "certificate.json",
    ] {
        assert!(ma.artifacts.iter().any(|x| x.path == f), "{f}");
    }

    std::fs::write(a.output.join("code.json"), "{}").unwrap();
    let bad = verify_artifacts(&a.output, &ma);
    assert_eq!(bad.len(), 1);
    assert!(bad[0].contains("code.json"));
}

#[test]
fn unperturbed_drift_is_inconclusive() {
    let dir = TempDir::new().unwrap();
    let m = cmd_drift(&config("default.toml", dir.path())).unwrap();
    assert_eq!(m.status, RunStatus::Inconclusive);
    assert_eq!(m.status.exit_code(), 2);
    assert!(m.stage("shoot").is_none());
}

fn scan_outcomes(dir: &Path) -> Vec<(f64, f64, String)> {
    let rows: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("mu_scan.json")).unwrap()).unwrap();
    rows.iter()
        .map(|r| {
            (
                r["mu1"].as_f64().unwrap(),
                r["mu2"].as_f64().unwrap(),
                r["outcome"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

#[test]
fn coarse_scan_agrees_with_fine_scan() {
    let dir = TempDir::new().unwrap();
    let mut coarse = config("mu_scan.toml", &dir.path().join("coarse"));
    coarse.mu_scan.nodes = [3, 3];
    let fine = config("mu_scan.toml", &dir.path().join("fine"));
    assert_eq!(cmd_mu_scan(&coarse).unwrap().status, RunStatus::Pass);
    assert_eq!(cmd_mu_scan(&fine).unwrap().status, RunStatus::Pass);
    let fine = scan_outcomes(&fine.output);
    let coarse = scan_outcomes(&coarse.output);
    assert_eq!((coarse.len(), fine.len()), (9, 25));
    for (a, b, o) in &coarse {
        let f = fine.iter().find(|(c, d, _)| c == a && d == b).unwrap();
        assert_eq!(&f.2, o, "mu = ({a}, {b})");
    }
    // no coupling, no drift
    assert!(fine
        .iter()
        .filter(|r| r.0 == 0.0)
        .all(|r| r.2 == "obstruction"));
}

fn driftlab(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_driftlab"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
    )
}

#[test]
fn binary_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cfg = |n: &str| configs().join(n).display().to_string();
    let out = |n: &str| dir.path().join(n).display().to_string();

    let (code, stdout) = driftlab(&[
        "check",
        "--config",
        &cfg("default.toml"),
        "--out",
        &out("ok"),
        "--threads",
        "2",
    ]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("symplectic"));
    let (code, _) = driftlab(&[
        "check",
        "--config",
        &cfg("broken.toml"),
        "--out",
        &out("broken"),
    ]);
    assert_eq!(code, 1);
    let (code, _) = driftlab(&[
        "drift",
        "--config",
        &cfg("default.toml"),
        "--out",
        &out("flat"),
    ]);
    assert_eq!(code, 2);

    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(configs().join("default.toml")).unwrap();
    std::fs::write(&bad, text + "\nbogus = 1\n").unwrap();
    let (code, _) = driftlab(&["check", "--config", &bad.display().to_string()]);
    assert_eq!(code, 3);
    let (code, _) = driftlab(&["check", "--config", &out("missing.toml")]);
    assert_eq!(code, 3);
    let (code, _) = driftlab(&[
        "check",
        "--config",
        &cfg("default.toml"),
        "--tol=-1",
        "--out",
        &out("neg"),
    ]);
    assert_eq!(code, 3);

    let (code, _) = driftlab(&["frobnicate"]);
    assert_eq!(code, 3);

    let (code, stdout) = driftlab(&["columns", &out("flat")]);
    assert_eq!(code, 0);
    assert!(stdout.contains("gamma_minus.csv"), "{stdout}");
}
