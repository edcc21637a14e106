use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tcsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcsim"))
        .args(args)
        .env_remove("TCSIM_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Hash of a file with its timestamp removed.
fn stable_hash(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let stable = if path.extension().is_some_and(|e| e == "json") {
        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["meta"].as_object_mut().unwrap().remove("created_unix");
        v.to_string()
    } else {
        text.lines()
            .filter(|l| !l.starts_with("# created_unix"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    Sha256::digest(stable.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn dir_hashes(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), stable_hash(&p))
        })
        .collect();
    out.sort();
    out
}

fn field(summary: &str, key: &str) -> f64 {
    summary
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {summary:?}"))
        .parse()
        .unwrap()
}

#[test]
fn unknown_subcommand_exits_with_usage() {
    let o = tcsim(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn every_output_carries_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for args in [
        vec!["device", "show"],
        vec!["--format", "json", "sweep", "coupling", "--points", "11"],
        vec!["flux", "invert"],
        vec!["--format", "json", "transfer", "apply", "--amplitude", "0.1"],
    ] {
        let mut full = vec!["--out-dir", d];
        full.extend(args);
        let o = tcsim(&full);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for e in fs::read_dir(dir.path()).unwrap() {
        let p = e.unwrap().path();
        let text = fs::read_to_string(&p).unwrap();
        if p.extension().unwrap() == "json" {
            let v: Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["meta"]["tool"], "tcsim");
            assert_eq!(v["meta"]["config_sha256"].as_str().unwrap().len(), 64);
        } else {
            assert!(text.starts_with("# tool = tcsim"), "{}", p.display());
            assert!(text.contains("# config_sha256 = "));
        }
    }
}

#[test]
fn identical_inputs_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let d = dir.path().to_str().unwrap();
        for args in [
            vec!["--out-dir", d, "--seed", "7", "sweep", "coupling", "--points", "21"],
            vec!["--out-dir", d, "--seed", "7", "device", "show"],
            vec!["--out-dir", d, "--seed", "7", "flux", "invert"],
        ] {
            assert!(tcsim(&args).status.success());
        }
    }
    assert_eq!(dir_hashes(a.path()), dir_hashes(b.path()));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tcsim"))
        .args(["transfer", "apply", "--amplitude", "0.2", "--mod-freq", "0.28"])
        .env("TCSIM_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("transfer.csv").exists());
    let s = stdout(&o);
    assert!((field(&s, "achieved_phi0") - 0.2 * field(&s, "ratio")).abs() < 1e-5);
}

#[test]
fn flux_invert_solves_for_target() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = tcsim(&["--out-dir", d, "flux", "invert", "--target", "0.1,-0.2,0.05"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(field(&stdout(&o), "identity_error") < 1e-12);
    let text = fs::read_to_string(dir.path().join("compensation.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    let c = [[1.0, -0.471, 0.392], [-0.226, 1.0, 0.248], [0.378, -0.479, 1.0]];
    for i in 0..3 {
        let applied: f64 = (0..3).map(|j| c[i][j] * rows[j][1]).sum();
        assert!((applied - rows[i][0]).abs() < 1e-12);
    }
}

#[test]
fn stage_labelled_failures() {
    let o = tcsim(&["--out-dir", "/tmp", "calibrate", "cz02"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("resonance unreachable"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[meta]\nname = \"x\"\n").unwrap();
    let o = tcsim(&["--config", bad.to_str().unwrap(), "device", "show"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: config:"), "{}", stderr(&o));

    let o = tcsim(&[
        "--out-dir",
        "/tmp",
        "transfer",
        "apply",
        "--amplitude",
        "0.1",
        "--mod-freq",
        "9",
    ]);
    assert!(stderr(&o).contains("transfer:"), "{}", stderr(&o));
}

#[test]
fn calibrate_then_tomo_iswap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = tcsim(&["--out-dir", d, "calibrate", "iswap"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let spec = dir.path().join("gatespec_iswap.json");
    let o = tcsim(&["--out-dir", d, "tomo", "--spec", spec.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(field(&s, "F_avg") >= 0.999, "{s}");
    assert!((field(&s, "theta") + std::f64::consts::FRAC_PI_2).abs() < 0.01, "{s}");

    let sampled = |seed: &str, out: &Path| {
        let o = tcsim(&[
            "--out-dir",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "tomo",
            "--spec",
            spec.to_str().unwrap(),
            "--shots",
            "500",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        stable_hash(&out.join("ptm_iswap.csv"))
    };
    let (x, y, z) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    assert_eq!(sampled("11", x.path()), sampled("11", y.path()));
    assert_ne!(sampled("11", x.path()), sampled("12", z.path()));
}
