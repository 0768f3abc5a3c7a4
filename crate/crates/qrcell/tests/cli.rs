use std::path::Path;
use std::process::{Command, Output};

use qrcell_core::entangle::{atom_photon_state, LarmorClock, Site};
use qrcell_core::fit::FidelityCurve;
use qrcell_core::noise::{avg_atom_fidelity, NoiseModelParams};
use qrcell_core::rates::{p_pair_asyn, p_pair_limit, p_pair_syn};
use qrcell_core::tomo::{complete_settings, simulate_counts};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn qrcell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrcell"))
        .args(args)
        .output()
        .expect("spawn qrcell")
}

fn json_ok(args: &[&str]) -> Value {
    let out = qrcell(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn rows(v: &Value) -> &Vec<Value> {
    v["rows"].as_array().unwrap()
}

#[test]
fn budget_product_matches_detection_probabilities() {
    let v = json_ok(&["budget"]);
    let product = rows(&v).iter().find(|r| r["factor"] == "product").unwrap();
    assert!((product["atom1"].as_f64().unwrap() - 0.00114).abs() < 5e-6);
    assert!((product["atom2"].as_f64().unwrap() - 0.00096).abs() < 5e-6);
}

#[test]
fn csv_output_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    let o = qrcell(&["budget", "--format", "csv", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("factor,atom1,atom2\n"));
    assert_eq!(text.lines().count(), 11);
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.json", r#"{"schema_version": 1, "protocol": {"p3": 1}}"#);
    let zero_t = write(
        dir.path(),
        "t.json",
        r#"{"schema_version": 1, "scan": {"transmissions": [0.5, 0.0]}}"#,
    );
    let no_version = write(dir.path(), "v.json", r#"{"protocol": {"n_max": 3}}"#);
    for cfg in [&unknown, &zero_t, &no_version] {
        let o = qrcell(&["scan-transmission", "--config", cfg]);
        assert_eq!(o.status.code(), Some(1), "{cfg}");
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(
        qrcell(&["budget", "--config", "/nonexistent/x.json"]).status.code(),
        Some(1)
    );
    assert_eq!(qrcell(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(qrcell(&["simulate", "--reps", "0"]).status.code(), Some(1));
    assert_eq!(qrcell(&["--help"]).status.code(), Some(0));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let args = ["simulate", "--reps", "200000", "--seed", "7"];
    let a = qrcell(&args);
    let b = qrcell(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = qrcell(&["simulate", "--reps", "200000", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn tiny_p_reports_never() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        r#"{"schema_version": 1,
            "thresholds": {"scenarios": [{"name": "dim", "scenario": {"p": 1e-9}}]}}"#,
    );
    let v = json_ok(&["thresholds", "--config", &cfg]);
    let dim: Vec<_> = rows(&v).iter().filter(|r| r["case"] == "dim").collect();
    assert_eq!(dim.len(), 2);
    for r in dim {
        assert_eq!(r["threshold"], "never");
        assert!(r["never_limit"].as_f64().unwrap() < 1.0);
    }
}

#[test]
fn without_decay_scan_columns_are_flat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c0.json",
        r#"{"schema_version": 1, "noise": {"eta_850": 0.0},
            "scan": {"n_max": [1, 10, 100, 1000]}}"#,
    );
    let v = json_ok(&["scan-nmax", "--config", &cfg, "--reps", "1000"]);
    let r = rows(&v);
    assert_eq!(r.len(), 4);
    for key in ["f_atom1", "f_pp_psi-", "f_pp_phi+"] {
        let first = r[0][key].as_f64().unwrap();
        for row in r {
            assert!((row[key].as_f64().unwrap() - first).abs() < 1e-12, "{key}");
        }
    }
}

#[test]
fn scan_transmission_matches_library() {
    let v = json_ok(&["scan-transmission"]);
    let p = qrcell_core::protocol::ProtocolParams::default();
    let r = rows(&v);
    assert_eq!(r.len(), 4);
    for row in r {
        let t = row["p_t"].as_f64().unwrap();
        assert_eq!(
            row["p_pair_asyn"].as_f64().unwrap(),
            p_pair_asyn(p.p1 * t, p.p2 * t, p.n_max).unwrap()
        );
        assert_eq!(
            row["p_pair_syn"].as_f64().unwrap(),
            p_pair_syn(p.p1 * t, p.p2 * t).unwrap()
        );
        assert_eq!(row["p_pair_limit"].as_f64().unwrap(), p_pair_limit(p.p1 * t).unwrap());
    }
    assert_eq!(r[0]["length_km"].as_f64().unwrap(), 0.0);
}

#[test]
fn fit_recovers_noiseless_curve() {
    let base = NoiseModelParams::default();
    let (f10, p_sia) = (0.93, 0.004);
    let curve = FidelityCurve::synthetic(&[1, 2, 5, 10, 20, 50, 100, 200], 0.01, |n| {
        avg_atom_fidelity(&NoiseModelParams {
            f10,
            p_sia_false: p_sia,
            n_max: n,
            ..base
        })
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    qrcell::io::write_curve(&curve, std::fs::File::create(&path).unwrap()).unwrap();
    let v = json_ok(&["fit", "--input", path.to_str().unwrap(), "--model", "atom"]);
    let get = |name: &str| {
        rows(&v).iter().find(|r| r["parameter"] == name).unwrap()["value"]
            .as_f64()
            .unwrap()
    };
    assert!((get("f10") - f10).abs() < 1e-6);
    assert!((get("p_sia_false") - p_sia).abs() < 1e-6);
    assert!(v.get("failure").is_none());

    let pp = json_ok(&["fit", "--input", path.to_str().unwrap(), "--model", "pp"]);
    assert!(rows(&pp).iter().any(|r| r["parameter"] == "f_init"));
}

#[test]
fn degenerate_fit_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(
        dir.path(),
        "flat.csv",
        "n_max,fidelity,sigma\n1,0.2,0.01\n10,0.2,0.01\n100,0.2,0.01\n",
    );
    let o = qrcell(&["fit", "--input", &csv, "--model", "atom"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["failure"].is_string());
}

#[test]
fn bad_fit_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(
        dir.path(),
        "short.csv",
        "n_max,fidelity,sigma\n1,0.9,0.01\n10,0.8,0.01\n",
    );
    assert_eq!(
        qrcell(&["fit", "--input", &csv, "--model", "atom"]).status.code(),
        Some(1)
    );
    let csv = write(dir.path(), "bad.csv", "n_max,fidelity,sigma\n1,1.9,0.01\n");
    assert_eq!(
        qrcell(&["fit", "--input", &csv, "--model", "pp"]).status.code(),
        Some(1)
    );
}

#[test]
fn tomography_of_ideal_counts() {
    let rho = atom_photon_state(Site::One, true, &LarmorClock::default()).to_density();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let counts = simulate_counts(&rho, &complete_settings(2, 20_000), &mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("counts.csv");
    qrcell::io::write_counts(&counts, std::fs::File::create(&path).unwrap()).unwrap();
    let v = json_ok(&["tomography", "--input", path.to_str().unwrap(), "--target", "atom1"]);
    let f = rows(&v)[0]["value"].as_f64().unwrap();
    assert!(f > 0.98, "fidelity {f}");
}

#[test]
fn simulate_reports_closed_form_alongside() {
    let v = json_ok(&["simulate", "--reps", "300000"]);
    let r = &rows(&v)[0];
    let p = qrcell_core::protocol::ProtocolParams::default();
    assert_eq!(
        r["p_pair_closed_form"].as_f64().unwrap(),
        p_pair_asyn(p.p1, p.p2, p.n_max).unwrap()
    );
    assert_eq!(r["n_reps"], 300000);
}
